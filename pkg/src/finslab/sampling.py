"""Deterministic low-discrepancy sample sets on a chart box times fiber directions."""
from __future__ import annotations

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

__all__ = ["sample_points", "sphere_directions", "boundary_points"]


def sphere_directions(u):
    """Map uniform points in (0,1)^n to unit vectors via Gaussian normalization."""
    z = ndtri(np.clip(u, 1e-12, 1 - 1e-12))
    return z / np.linalg.norm(z, axis=-1, keepdims=True)


def sample_points(metric, count, seed=0, box=None, fiber="indicatrix", margin=1e-2,
                  oversample=64):
    """Seeded samples (x, y) inside the metric's domain.

    Base points fill ``box`` (default: the metric's chart box) with a
    scrambled Halton sequence; fiber directions come from the same sequence
    and are kept when they lie in the conic domain with
    ``|L| >= margin * |y|^2``.  With ``fiber='indicatrix'`` directions are
    rescaled to ``|L| = 1``; ``'sphere'`` keeps Euclidean unit length.
    """
    n = metric.n
    box = np.asarray(box if box is not None else metric.box, dtype=float)
    if box is None or box.shape != (n, 2):
        raise ValueError("a chart box of shape (n, 2) is required")
    engine = qmc.Halton(d=2 * n, scramble=True, seed=seed)
    u = engine.random(count * oversample)
    x = box[:, 0] + u[:, :n] * (box[:, 1] - box[:, 0])
    if metric.domain.interior_direction is not None:
        y = _cone_directions(metric, x, u[:, n:])
    else:
        y = sphere_directions(u[:, n:])
    inside = np.asarray(metric.domain.contains(x, y), dtype=bool)
    x, y = x[inside], y[inside]
    L = metric.L.values(x, y)
    keep = np.abs(L) >= margin * np.sum(y * y, axis=1)
    x, y, L = x[keep], y[keep], L[keep]
    if len(x) < count:
        raise ValueError(f"could only place {len(x)} of {count} samples in the domain of "
                         f"{metric.name}")
    x, y, L = x[:count], y[:count], L[:count]
    if fiber == "indicatrix":
        y = y / np.sqrt(np.abs(L))[:, None]
    elif fiber != "sphere":
        raise ValueError(f"unknown fiber strategy {fiber!r}")
    return x, y


def _cone_directions(metric, x, u):
    """Directions inside a Lorentzian cone, drawn in a g-orthonormal frame.

    The frame diagonalizes g at the domain's interior direction; the time
    leg has unit length and the spatial part is uniform in a ball of
    radius 0.95, so g(y, y) > 0 at the frame point.
    """
    n = x.shape[1]
    w = metric.domain.interior_direction(x, np.zeros_like(x))
    g = metric.g.values(x, w)
    lam, Q = np.linalg.eigh(g)
    frame = Q / np.sqrt(np.abs(lam))[:, None, :]
    t_axis = np.argmax(lam, axis=1)
    s = sphere_directions(u[:, 1:])
    radius = 0.95 * u[:, 0] ** (1.0 / (n - 1))
    y = np.empty_like(x)
    for k in range(len(x)):
        cols = [c for c in range(n) if c != t_axis[k]]
        e0 = frame[k][:, t_axis[k]]
        if e0 @ w[k] < 0:
            e0 = -e0
        y[k] = e0 + frame[k][:, cols] @ (radius[k] * s[k])
    return y


def boundary_points(metric, x, y, iterations=80):
    """Lightcone directions y - s w (w the interior direction) with L = 0, by bisection."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if metric.domain.interior_direction is None:
        raise ValueError(f"{metric.name} has no interior direction to leave the cone along")
    w = metric.domain.interior_direction(x, y)
    lo = np.zeros(len(x))
    hi = np.ones(len(x))
    for _ in range(60):
        outside = metric.L.values(x, y - hi[:, None] * w) <= 0
        if outside.all():
            break
        hi = np.where(outside, hi, 2.0 * hi)
    else:
        raise ValueError("could not bracket the cone boundary")
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        inside = metric.L.values(x, y - mid[:, None] * w) > 0
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    return y - lo[:, None] * w
