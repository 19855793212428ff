"""Sampled residual statistics and their JSON/CSV forms."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Any

import numpy as np

__all__ = ["ResidualReport", "sup_norm", "round_floats"]


def sup_norm(arr):
    """Componentwise sup norm per sample (first axis is the sample axis)."""
    arr = np.asarray(arr, dtype=float)
    if arr.ndim == 1:
        return np.abs(arr)
    return np.max(np.abs(arr.reshape(arr.shape[0], -1)), axis=1)


def round_floats(obj, digits=15):
    """Recursively convert numpy scalars/arrays to plain floats with fixed precision."""
    if isinstance(obj, dict):
        return {k: round_floats(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_floats(v, digits) for v in obj]
    if isinstance(obj, np.ndarray):
        return round_floats(obj.tolist(), digits)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not np.isfinite(v):
            return None
        return float(f"{v:.{digits}g}")
    return obj


@dataclass
class ResidualReport:
    """Residual of one equation over a sample set.

    ``passed`` is true iff the maximum residual does not exceed ``tol``.
    ``details`` carries check-specific extras (closed forms, verdicts).
    """

    equation: str
    x: np.ndarray
    y: np.ndarray
    residual: np.ndarray
    tol: float
    details: dict[str, Any] = field(default_factory=dict)
    status: str = ""

    @classmethod
    def from_samples(cls, equation, x, y, residual, tol, **details):
        return cls(equation, np.atleast_2d(x), np.atleast_2d(y),
                   np.atleast_1d(np.asarray(residual, dtype=float)), float(tol), details)

    @property
    def max(self):
        return float(np.max(self.residual)) if self.residual.size else 0.0

    @property
    def mean(self):
        return float(np.mean(self.residual)) if self.residual.size else 0.0

    @property
    def argmax(self):
        return int(np.argmax(self.residual)) if self.residual.size else -1

    @property
    def passed(self):
        if self.status == "error":
            return False
        return bool(np.all(np.isfinite(self.residual)) and self.max <= self.tol)

    @property
    def verdict(self):
        if self.status == "error":
            return "error"
        return "pass" if self.passed else "fail"

    def location(self):
        i = self.argmax
        if i < 0:
            return None
        return {"x": self.x[i].tolist(), "y": self.y[i].tolist()}

    def to_dict(self, with_samples=True):
        out = {
            "equation": self.equation,
            "max": self.max,
            "mean": self.mean,
            "tol": self.tol,
            "pass": self.passed,
            "verdict": self.verdict,
            "argmax": self.location(),
        }
        if with_samples:
            out["samples"] = [
                {"x": xi.tolist(), "y": yi.tolist(), "residual": float(r)}
                for xi, yi, r in zip(self.x, self.y, self.residual)
            ]
        if self.details:
            out["details"] = self.details
        return round_floats(out)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        n = self.x.shape[1] if self.x.size else 0
        w.writerow(["equation"] + [f"x{i + 1}" for i in range(n)]
                   + [f"y{i + 1}" for i in range(n)] + ["residual"])
        for xi, yi, r in zip(self.x, self.y, self.residual):
            w.writerow([self.equation] + [repr(float(v)) for v in xi]
                       + [repr(float(v)) for v in yi] + [repr(float(r))])
        return buf.getvalue()

    def __str__(self):
        return (f"{self.equation}: max={self.max:.3e} mean={self.mean:.3e} "
                f"tol={self.tol:.1e} -> {self.verdict}")
