"""Pseudo-Finsler metrics and the objects derived from them."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from . import calculus, jets
from .fields import (ComputedField, ConicDomain, Field, FunctionField, Point,
                     slit_domain)
from .reports import ResidualReport

__all__ = [
    "PseudoFinslerMetric",
    "DegenerateMetricError",
    "MetricJetBundle",
    "fundamental_tensor",
    "cartan_tensors",
    "metric_spray_and_berwald",
    "landsberg_tensors",
    "ricci_metric",
    "properness_probe",
    "DEGENERACY_THRESHOLD",
]

DEGENERACY_THRESHOLD = 1e10


class DegenerateMetricError(ArithmeticError):
    """Fundamental tensor too ill-conditioned to invert."""

    def __init__(self, message, x=None, y=None, cond=None):
        super().__init__(message)
        self.x = x
        self.y = y
        self.cond = cond


class PseudoFinslerMetric:
    """A 2-homogeneous Lagrangian ``L`` on a conic domain.

    ``L`` is a scalar :class:`Field` or a function ``fn(x, y)`` of coordinate
    jets.  ``box`` is the chart box used when sampling base points and
    ``time_index`` marks the timelike coordinate of Lorentzian cones.
    """

    def __init__(self, L, n, domain: Optional[ConicDomain] = None, signature=None,
                 tag=None, box=None, name="", time_index=None):
        if not isinstance(L, Field):
            L = FunctionField(L, (0, 0), 2, domain, name="L")
        if L.order != 0 or L.degree != 2:
            raise ValueError("the Lagrangian must be a scalar field of degree 2")
        self.L = L
        self.n = int(n)
        self.domain = domain or L.domain or slit_domain()
        self.signature = tuple(signature) if signature is not None else None
        self.tag = tag or {}
        self.box = np.asarray(box, dtype=float) if box is not None else None
        self.name = name or self.tag.get("name", "metric")
        self.time_index = time_index
        self.cond_max = DEGENERACY_THRESHOLD

    def __repr__(self):
        return f"<PseudoFinslerMetric {self.name} n={self.n}>"

    @property
    def lorentzian(self):
        return self.signature is not None and sum(1 for s in self.signature if s < 0) > 0

    # derived fields -------------------------------------------------------
    def _field(self, fn, rank, degree, name):
        return ComputedField(fn, rank, degree, self.domain, f"{name}[{self.name}]")

    @cached_property
    def F(self):
        return self._field(lambda pt, v, h: jets.sqrt(jets.absolute(self.L.taylor(pt, v, h))),
                           (0, 0), 1, "F")

    @cached_property
    def g(self):
        def fn(pt, v, h):
            hess = self.L.taylor(pt, v + 2, h).grad_y().grad_y()
            return 0.5 * hess

        return self._field(fn, (0, 2), 0, "g")

    @cached_property
    def g_inv(self):
        def fn(pt, v, h):
            gj = self.g.taylor(pt, v, h)
            self._check_conditioning(pt, gj.value)
            return jets.inverse(gj)

        return self._field(fn, (2, 0), 0, "g_inv")

    def _check_conditioning(self, pt, g0):
        cond = np.linalg.cond(g0)
        bad = ~np.isfinite(cond) | (cond > self.cond_max)
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise DegenerateMetricError(
                f"degenerate fundamental tensor of {self.name} at x={pt.x[i].tolist()}, "
                f"y={pt.y[i].tolist()} (condition number {cond[i]:.3e})",
                x=pt.x[i], y=pt.y[i], cond=float(cond[i]))

    @cached_property
    def y_lower(self):
        """y_i = g_ia y^a."""
        return self._field(
            lambda pt, v, h: jets.einsum("...ia,...a->...i", self.g.taylor(pt, v, h),
                                         pt.fiber(v, h)), (0, 1), 1, "y_lower")

    @cached_property
    def cartan(self):
        return self._field(lambda pt, v, h: 0.5 * self.g.taylor(pt, v + 1, h).grad_y(),
                           (0, 3), -1, "C")

    @cached_property
    def mean_cartan(self):
        return self._field(
            lambda pt, v, h: jets.einsum("...ab,...abi->...i", self.g_inv.taylor(pt, v, h),
                                         self.cartan.taylor(pt, v, h)), (0, 1), -1, "C_i")

    @cached_property
    def mean_cartan_raised(self):
        """C^j computed as -1/2 d(g^{ja})/dy^a."""
        return self._field(
            lambda pt, v, h: -0.5 * jets.trace(self.g_inv.taylor(pt, v + 1, h).grad_y(), 2, 3),
            (1, 0), -1, "C^i")

    @cached_property
    def spray(self):
        def fn(pt, v, h):
            dg = self.g.taylor(pt, v, h + 1).grad_x()      # [a, b, c] = d_c g_ab
            t = 2.0 * dg - dg.moveaxis(-1, -3)               # 2 d_c g_ab - d_a g_bc
            y = pt.fiber(v, h)
            u = jets.einsum("...abc,...b->...ac", t, y)
            u = jets.einsum("...ac,...c->...a", u, y)
            return 0.25 * jets.einsum("...ia,...a->...i", self.g_inv.taylor(pt, v, h), u)

        return self._field(fn, (1, 0), 2, "G^L")

    @cached_property
    def berwald(self):
        return self._field(lambda pt, v, h: self.spray.taylor(pt, v + 1, h).grad_y(),
                           (1, 1), 1, "N^L")

    @cached_property
    def landsberg(self):
        return self._field(
            lambda pt, v, h: 0.5 * calculus.covariant(self.berwald, self.g, pt, v, h),
            (0, 3), 0, "Lan")

    @cached_property
    def mean_landsberg(self):
        return self._field(
            lambda pt, v, h: jets.einsum("...ab,...abi->...i", self.g_inv.taylor(pt, v, h),
                                         self.landsberg.taylor(pt, v, h)), (0, 1), 0, "Lan_i")

    @cached_property
    def ricci(self):
        return self._field(lambda pt, v, h: calculus.ricci(self.berwald, pt, v, h),
                           (0, 0), 2, "Ric^L")

    def objects(self):
        """Named derived fields with their declared homogeneity."""
        return {
            "L": self.L, "g": self.g, "C": self.cartan, "G": self.spray,
            "N": self.berwald, "Lan": self.landsberg, "Ric": self.ricci,
        }

    # numeric helpers ------------------------------------------------------
    def lagrangian(self, x, y):
        return self.L.values(x, y)

    def density(self, x, y):
        """Density |det g| / |L|^(n/2) used for fiber and base divergences."""
        pt = Point(x, y)
        g = self.g.taylor(pt, 0, 0).value
        L = self.L.taylor(pt, 0, 0).value
        out = np.abs(np.linalg.det(g)) / np.abs(L) ** (self.n / 2)
        return out[0] if np.ndim(x) == 1 else out

    def bundle(self, x, y, ricci=True):
        return MetricJetBundle.compute(self, x, y, ricci=ricci)


@dataclass(frozen=True)
class MetricJetBundle:
    """Coherent values of the metric objects at a batch of points."""

    x: np.ndarray
    y: np.ndarray
    g: np.ndarray
    g_inv: np.ndarray
    cartan: np.ndarray
    mean_cartan: np.ndarray
    spray: np.ndarray
    berwald: np.ndarray
    landsberg: np.ndarray
    mean_landsberg: np.ndarray
    ricci: Optional[np.ndarray] = None
    condition: np.ndarray = field(default=None)

    @classmethod
    def compute(cls, metric, x, y, ricci=True):
        pt = Point(x, y)
        vals = {}
        if ricci:
            vals["ricci"] = metric.ricci.taylor(pt, 0, 0).value
        for name in ("landsberg", "mean_landsberg", "berwald", "spray", "cartan",
                     "mean_cartan", "g", "g_inv"):
            vals[name] = getattr(metric, name).taylor(pt, 0, 0).value
        return cls(x=pt.x, y=pt.y, condition=np.linalg.cond(vals["g"]), **vals)


# ---------------------------------------------------------------------------
# operation-style entry points


def fundamental_tensor(M: PseudoFinslerMetric, x, y):
    """(g, g_inv, condition number) at the given points."""
    pt = Point(x, y)
    g = M.g.taylor(pt, 0, 0).value
    ginv = M.g_inv.taylor(pt, 0, 0).value
    return g, ginv, np.linalg.cond(g)


def cartan_tensors(M, x, y):
    """(C_ijk, C_i, C^i from -1/2 d g^{ja}/dy^a)."""
    pt = Point(x, y)
    return (M.cartan.taylor(pt, 0, 0).value, M.mean_cartan.taylor(pt, 0, 0).value,
            M.mean_cartan_raised.taylor(pt, 0, 0).value)


def metric_spray_and_berwald(M, x, y):
    pt = Point(x, y)
    return M.spray.taylor(pt, 0, 0).value, M.berwald.taylor(pt, 0, 0).value


def landsberg_tensors(M, x, y):
    pt = Point(x, y)
    return M.landsberg.taylor(pt, 0, 0).value, M.mean_landsberg.taylor(pt, 0, 0).value


def ricci_metric(M, x, y):
    return M.ricci.taylor(Point(x, y), 0, 0).value


# ---------------------------------------------------------------------------
# properness


def _signature(g):
    ev = np.linalg.eigvalsh(g)
    return (int(np.sum(ev > 0)), int(np.sum(ev < 0)))


def _plane_runs(mask):
    """Number of circular runs of True values."""
    if mask.all():
        return 1
    if not mask.any():
        return 0
    rolled = np.roll(mask, 1)
    return int(np.sum(mask & ~rolled))


def properness_probe(M: PseudoFinslerMetric, x, y, boundary=None, rays=None,
                     depth=20, planes=4, tol=1e-9):
    """Diagnose definiteness/properness of ``M`` from samples.

    ``x, y``: interior samples.  ``boundary``: optional pair ``(xb, yb)`` of
    boundary directions (L = 0) with ``inward`` given by the domain; points
    ``yb + t w`` with ``t = 2**-k`` approach each of them from inside.
    ``rays``: extra fiber directions (e.g. coordinate axes) checked for
    degeneracy.  Returns a report whose residual is 0 for samples passing
    every check and 1 otherwise; ``details['classification']`` is one of
    ``finsler``, ``proper_lorentz_finsler`` or ``improper``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    n = M.n
    problems = []
    flags = np.zeros(len(x))

    def assess(xs, ys, label):
        pt = Point(xs, ys)
        L = M.L.taylor(pt, 0, 0).value
        g = M.g.taylor(pt, 0, 0).value
        cond = np.linalg.cond(g)
        sig = [_signature(gi) for gi in g]
        return L, cond, sig

    L, cond, sig = assess(x, y, "interior")
    if np.any(L <= 0):
        i = int(np.flatnonzero(L <= 0)[0])
        problems.append({"check": "L>0", "x": x[i].tolist(), "y": y[i].tolist(),
                         "L": float(L[i])})
        flags[L <= 0] = 1
    degenerate = ~np.isfinite(cond) | (cond > M.cond_max)
    if np.any(degenerate):
        i = int(np.flatnonzero(degenerate)[0])
        problems.append({"check": "nondegenerate", "x": x[i].tolist(), "y": y[i].tolist(),
                         "cond": float(cond[i]) if np.isfinite(cond[i]) else None})
        flags[degenerate] = 1
    signatures = sorted(set(s for s, d in zip(sig, degenerate) if not d))
    if len(signatures) > 1:
        problems.append({"check": "constant signature", "signatures": signatures})
        flags[:] = 1

    if rays is not None:
        rx, ry = rays
        rx = np.atleast_2d(rx)
        ry = np.atleast_2d(ry)
        try:
            _, rcond, rsig = assess(rx, ry, "rays")
            bad = ~np.isfinite(rcond) | (rcond > M.cond_max)
            for i in np.flatnonzero(bad):
                problems.append({"check": "nondegenerate", "x": rx[i].tolist(),
                                 "y": ry[i].tolist(), "ray": True,
                                 "cond": float(rcond[i]) if np.isfinite(rcond[i]) else None})
            extra = set(s for s, d in zip(rsig, bad) if not d) - set(signatures)
            if extra and signatures:
                problems.append({"check": "constant signature", "rays": sorted(extra)})
        except jets.JetEvaluationError as exc:
            problems.append({"check": "evaluation", "error": str(exc),
                             "x": rx[exc.sample[0]].tolist() if exc.sample else None,
                             "y": ry[exc.sample[0]].tolist() if exc.sample else None})

    boundary_info = None
    if boundary is not None:
        xb, yb = (np.atleast_2d(a) for a in boundary)
        w = M.domain.interior_direction(xb, yb) if M.domain.interior_direction else None
        if w is None:
            raise ValueError("domain lacks an interior direction for boundary probing")
        steps = 2.0 ** -np.arange(1, depth + 1)
        Ls, conds, sigs = [], [], []
        for t in steps:
            Lk, ck, sk = assess(xb, yb + t * w, "boundary")
            Ls.append(Lk)
            conds.append(ck)
            sigs.extend(sk)
        Ls = np.array(Ls)
        conds = np.array(conds)
        decreasing = bool(np.all(np.diff(Ls, axis=0) < 0) and np.all(Ls > 0))
        Lb = M.L.values(xb, yb)
        to_zero = bool(np.all(np.abs(Lb) <= 1e-9 * np.maximum(1.0, np.abs(Ls[0]))))
        nondeg = bool(np.all(np.isfinite(conds)) and np.all(conds <= M.cond_max))
        same_sig = set(sigs) <= set(signatures) if signatures else True
        boundary_info = {"L_decreasing": decreasing, "L_to_zero": to_zero,
                         "nondegenerate": nondeg, "signature_constant": bool(same_sig),
                         "max_condition": float(np.max(conds)) if np.all(np.isfinite(conds))
                         else None}
        if not (decreasing and to_zero and nondeg and same_sig):
            problems.append({"check": "boundary", **boundary_info})

    # per-fiber connectedness on random 2-plane sections
    conn_checked = 0
    conn_ok = True
    rng = np.random.default_rng(12345)
    angles = np.linspace(0.0, 2 * np.pi, 720, endpoint=False)
    for i in range(min(planes, len(x))):
        u = y[i] / np.linalg.norm(y[i])
        w = rng.normal(size=n)
        w -= w.dot(u) * u
        w /= np.linalg.norm(w)
        dirs = np.cos(angles)[:, None] * u + np.sin(angles)[:, None] * w
        inside = np.asarray(M.domain.contains(np.repeat(x[i:i + 1], len(angles), 0), dirs))
        conn_checked += 1
        if _plane_runs(inside) != 1:
            conn_ok = False
    if not conn_ok:
        problems.append({"check": "fiber connectedness (2-plane sections)"})

    definite = signatures == [(n, 0)] or signatures == [(0, n)]
    lorentz = signatures == [(1, n - 1)]
    if problems:
        classification = "improper"
    elif definite:
        classification = "finsler"
    elif lorentz and boundary_info is not None:
        classification = "proper_lorentz_finsler"
    else:
        classification = "improper"
    if problems and not np.any(flags):
        flags[:] = 1.0
    return ResidualReport.from_samples(
        f"properness[{M.name}]", x, y, flags, tol,
        classification=classification, signatures=[list(s) for s in signatures],
        boundary=boundary_info, problems=problems,
        connectedness={"planes_checked": conn_checked, "connected": conn_ok,
                       "partial_check": True})
