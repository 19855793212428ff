"""Built-in metric families."""
from __future__ import annotations

import difflib

import numpy as np

from . import jets
from .fields import ConicDomain, slit_domain
from .metric import PseudoFinslerMetric

__all__ = ["CATALOG", "build", "UnknownMetricError", "names", "cone_domain"]


class UnknownMetricError(KeyError):
    def __init__(self, name):
        self.name = name
        self.suggestions = difflib.get_close_matches(name, names(), n=3, cutoff=0.5)
        msg = f"unknown catalog metric {name!r}"
        if self.suggestions:
            msg += f"; did you mean {', '.join(self.suggestions)}?"
        super().__init__(msg)

    def __str__(self):
        return self.args[0]


def _sumsq(ys):
    out = ys[0] * ys[0]
    for y in ys[1:]:
        out = out + y * y
    return out


def cone_domain(L_fn, time_index, name):
    """Future cone {L > 0, y^t > 0} with boundary L = 0."""

    def contains(x, y):
        y = np.asarray(y)
        return (L_fn(np.asarray(x), y) > 0) & (y[..., time_index] > 0)

    def inward(x, y):
        w = np.zeros_like(np.asarray(y, dtype=float))
        w[..., time_index] = 1.0
        return w

    return ConicDomain(name, contains, L_fn, True, inward)


def euclidean(n=3):
    def L(x, y):
        return _sumsq(y)

    return PseudoFinslerMetric(L, n, slit_domain(), signature=(1,) * n,
                               tag={"name": "euclidean", "n": n},
                               box=[[-1.0, 1.0]] * n, name="euclidean")


def flat_polar(n=2):
    """Flat metric in polar (n=2) or cylindrical (n=3) coordinates (r, phi[, z])."""
    if n not in (2, 3):
        raise ValueError("flat_polar supports n = 2 or 3")

    def L(x, y):
        out = y[0] * y[0] + x[0] * x[0] * y[1] * y[1]
        if n == 3:
            out = out + y[2] * y[2]
        return out

    box = [[0.5, 2.0], [-3.0, 3.0]] + ([[-1.0, 1.0]] if n == 3 else [])
    return PseudoFinslerMetric(L, n, slit_domain(), signature=(1,) * n,
                               tag={"name": "flat_polar", "n": n}, box=box, name="flat_polar")


def sphere(n=2, radius=1.0):
    """Round sphere of given radius in hyperspherical angles."""
    if n not in (2, 3):
        raise ValueError("sphere supports n = 2 or 3")
    R2 = float(radius) ** 2

    def L(x, y):
        if n == 2:
            return R2 * (y[0] * y[0] + jets.sin(x[0]) ** 2 * y[1] * y[1])
        s0 = jets.sin(x[0]) ** 2
        return R2 * (y[0] * y[0] + s0 * (y[1] * y[1] + jets.sin(x[1]) ** 2 * y[2] * y[2]))

    box = [[0.4, np.pi - 0.4]] * (n - 1) + [[-3.0, 3.0]]
    return PseudoFinslerMetric(L, n, slit_domain(), signature=(1,) * n,
                               tag={"name": "sphere", "n": n, "radius": radius},
                               box=box, name="sphere")


def minkowski(n=4):
    def L(x, y):
        return y[0] * y[0] - _sumsq(y[1:])

    def L_np(x, y):
        return y[..., 0] ** 2 - np.sum(y[..., 1:] ** 2, axis=-1)

    return PseudoFinslerMetric(L, n, cone_domain(L_np, 0, "future cone"),
                               signature=(1,) + (-1,) * (n - 1),
                               tag={"name": "minkowski", "n": n},
                               box=[[-1.0, 1.0]] * n, name="minkowski", time_index=0)


def schwarzschild(mass=0.5):
    """Static spherically symmetric vacuum metric in (t, r, theta, phi)."""
    m = float(mass)

    def L(x, y):
        r, th = x[1], x[2]
        f = 1.0 - 2.0 * m / r
        return (f * y[0] * y[0] - y[1] * y[1] / f
                - r * r * (y[2] * y[2] + jets.sin(th) ** 2 * y[3] * y[3]))

    def L_np(x, y):
        r, th = x[..., 1], x[..., 2]
        f = 1.0 - 2.0 * m / r
        return (f * y[..., 0] ** 2 - y[..., 1] ** 2 / f
                - r * r * (y[..., 2] ** 2 + np.sin(th) ** 2 * y[..., 3] ** 2))

    box = [[-1.0, 1.0], [6.0 * m, 12.0 * m], [0.6, np.pi - 0.6], [-3.0, 3.0]]
    return PseudoFinslerMetric(L, 4, cone_domain(L_np, 0, "future cone"),
                               signature=(1, -1, -1, -1),
                               tag={"name": "schwarzschild", "mass": m}, box=box,
                               name="schwarzschild", time_index=0)


def randers(n=3, b=None, b_slope=None, a=None, box_size=1.0):
    """Randers metric L = (sqrt(a(y,y)) + b_i(x) y^i)^2.

    ``a`` is a constant positive definite matrix (identity by default);
    ``b_i(x) = b_i + b_slope[i, j] x^j``.  Constant ``b`` with flat ``a``
    gives a Berwald metric.
    """
    A = np.eye(n) if a is None else np.asarray(a, dtype=float)
    b0 = np.zeros(n) if b is None else np.asarray(b, dtype=float)
    B = np.zeros((n, n)) if b_slope is None else np.asarray(b_slope, dtype=float)
    box = np.array([[-box_size, box_size]] * n)
    # |b|_a < 1 on the box (affine b attains its max norm at a corner)
    Ainv = np.linalg.inv(A)
    corners = np.array(np.meshgrid(*box)).reshape(n, -1).T
    bs = b0 + corners @ B.T
    norm = np.sqrt(np.einsum("si,ij,sj->s", bs, Ainv, bs)).max()
    if norm >= 1:
        raise ValueError(f"Randers condition |b|_a < 1 violated on the chart box ({norm:.3f})")

    def L(x, y):
        aa = None
        for i in range(n):
            for j in range(n):
                if A[i, j] != 0:
                    t = A[i, j] * y[i] * y[j]
                    aa = t if aa is None else aa + t
        beta = None
        for i in range(n):
            coeff = b0[i]
            for j in range(n):
                if B[i, j] != 0:
                    coeff = coeff + B[i, j] * x[j]
            t = coeff * y[i]
            beta = t if beta is None else beta + t
        s = jets.sqrt(aa) + beta
        return s * s

    berwald = not np.any(B) and a is None
    return PseudoFinslerMetric(
        L, n, slit_domain(), signature=(1,) * n,
        tag={"name": "randers", "n": n, "b": b0.tolist(), "b_slope": B.tolist(),
             "a": A.tolist(), "berwald": bool(berwald), "max_b_norm": float(norm)},
        box=box, name="randers")


def quartic(n=3, mix=0.0, wobble=0.0):
    """Quartic root metric L = sqrt(sum c_i(x) (y^i)^4 + mix * |y|^4).

    ``c_i(x) = 1 + wobble * sin(x^i)``.  With ``mix = 0`` this is the pure
    m-root metric, whose fundamental tensor degenerates on coordinate
    hyperplanes.
    """
    if abs(wobble) >= 1:
        raise ValueError("wobble must be below 1 in magnitude")

    def L(x, y):
        q = None
        for i in range(n):
            c = 1.0 + wobble * jets.sin(x[i]) if wobble else 1.0
            t = c * y[i] ** 4
            q = t if q is None else q + t
        if mix:
            s = _sumsq(y)
            q = q + mix * s * s
        return jets.sqrt(q)

    return PseudoFinslerMetric(L, n, slit_domain(), signature=(1,) * n,
                               tag={"name": "quartic", "n": n, "mix": mix, "wobble": wobble},
                               box=[[-1.0, 1.0]] * n, name="quartic")


CATALOG = {
    "euclidean": euclidean,
    "flat_polar": flat_polar,
    "sphere": sphere,
    "minkowski": minkowski,
    "schwarzschild": schwarzschild,
    "randers": randers,
    "quartic": quartic,
}


def names():
    return sorted(CATALOG)


def build(name, **params):
    try:
        factory = CATALOG[name]
    except KeyError:
        raise UnknownMetricError(name) from None
    return factory(**params)
