"""Parameterized test fields: translations A, spray differences Z, and exact solutions."""
from __future__ import annotations

import numpy as np

from . import jets
from .fields import ComputedField, FunctionField

__all__ = [
    "translation_family",
    "isotropic_one_form",
    "quadratic_Z",
    "radial_Z",
    "L_times",
    "F_times",
    "null_power_solution",
    "null_covector",
    "critical_translation",
    "orthogonal_part",
    "direction_field",
    "ratio_scalar",
    "vector_field_grid",
]


def translation_family(metric, seed=0, scale=0.3, name=None):
    """Random anisotropic 0-homogeneous one-form.

    A_i = c_i(x) + d_i(x) P_ab y^a y^b / L with c_i, d_i smooth in x and P a
    random symmetric matrix, so A depends on the direction through a ratio
    of quadratic forms.
    """
    n = metric.n
    rng = np.random.default_rng(seed)
    c0, c1, d0, d1 = (scale * rng.uniform(-1, 1, n) for _ in range(4))
    P = rng.uniform(-1, 1, (n, n))
    P = 0.5 * (P + P.T)

    def fn(pt, v, h):
        xs, ys = pt.coordinates(v, h)
        y = pt.fiber(v, h)
        q = jets.einsum("ab,...a,...b->...", P, y, y) / metric.L.taylor(pt, v, h)
        comps = []
        for i in range(n):
            c = c0[i] + c1[i] * jets.sin(xs[(i + 1) % n])
            d = d0[i] + d1[i] * xs[i]
            comps.append(c + d * q)
        return jets.stack(comps, axis=-1)

    return ComputedField(fn, (0, 1), 0, metric.domain, name or f"A[seed={seed}]")


def isotropic_one_form(n, seed=0, scale=0.3, domain=None):
    """A_i(x) = a_i + b_ij x^j, independent of y."""
    rng = np.random.default_rng(seed)
    a = scale * rng.uniform(-1, 1, n)
    b = scale * rng.uniform(-1, 1, (n, n))

    def fn(xs, ys):
        return [a[i] + sum(b[i, j] * xs[j] for j in range(n)) for i in range(n)]

    return FunctionField(fn, (0, 1), 0, domain, "A_iso")


def quadratic_Z(n, seed=0, scale=0.2, domain=None):
    """Z^i = Q^i_ab(x) y^a y^b with Q affine in x."""
    rng = np.random.default_rng(seed)
    Q0 = scale * rng.uniform(-1, 1, (n, n, n))
    Q1 = scale * rng.uniform(-1, 1, (n, n, n))

    def fn(xs, ys):
        out = []
        for i in range(n):
            acc = 0.0
            for a in range(n):
                for b in range(a, n):
                    coeff = Q0[i, a, b] + Q1[i, a, b] * xs[(a + b) % n]
                    acc = acc + coeff * ys[a] * ys[b]
            out.append(acc)
        return out

    return FunctionField(fn, (1, 0), 2, domain, f"Zquad[seed={seed}]")


def radial_Z(rho):
    """Z = rho y for a 1-homogeneous scalar rho."""
    if rho.rank != (0, 0) or rho.degree != 1:
        raise ValueError("rho must be a 1-homogeneous scalar")
    return ComputedField(
        lambda pt, v, h: jets.einsum("...,...i->...i", rho.taylor(pt, v, h), pt.fiber(v, h)),
        (1, 0), 2, rho.domain, f"{rho.name}*y")


def _smooth_vector(n, seed, scale):
    rng = np.random.default_rng(seed)
    a = scale * rng.uniform(0.5, 1.0, n) * rng.choice([-1, 1], n)
    b = scale * rng.uniform(-1, 1, (n, n))
    return a, b


def L_times(metric, seed=0, scale=0.3):
    """Z = L W with W^i(x) = a^i + b^i_j sin(x^j), bounded and smooth across the cone."""
    n = metric.n
    a, b = _smooth_vector(n, seed, scale)

    def fn(pt, v, h):
        xs, _ = pt.coordinates(v, h)
        L = metric.L.taylor(pt, v, h)
        comps = [(a[i] + sum(b[i, j] * jets.sin(xs[j]) for j in range(n))) * L
                 for i in range(n)]
        return jets.stack(comps, axis=-1)

    return ComputedField(fn, (1, 0), 2, metric.domain, f"L*W[seed={seed}]")


def F_times(metric, seed=0, scale=0.3):
    """Z = F W with W^i = M^i_a y^a linear in y."""
    n = metric.n
    rng = np.random.default_rng(seed)
    Mmat = scale * rng.uniform(-1, 1, (n, n)) + scale * np.eye(n)

    def fn(pt, v, h):
        F = metric.F.taylor(pt, v, h)
        W = jets.einsum("ia,...a->...i", Mmat, pt.fiber(v, h))
        return jets.einsum("...,...i->...i", F, W)

    return ComputedField(fn, (1, 0), 2, metric.domain, f"F*W[seed={seed}]")


def null_covector(n, rng):
    """Covector c = (1, u) with u a random unit vector, null for diag(1,-1,...,-1)."""
    u = rng.normal(size=n - 1)
    return np.concatenate([[1.0], u / np.linalg.norm(u)])


def null_power_solution(metric, c, root=+1, amplitude=1.0):
    """Exact symmetric solution Z = 2 s y - L g^-1 ds on flat Minkowski space.

    ``s = L^m (c.y)^(1-2m)`` with ``c`` a null covector and ``m`` a root of
    4 m^2 - 2 n m + (n - 2) = 0, which makes s satisfy the torsion-free
    system when C = 0 and Lan = 0.  Needs c.y > 0 on the domain.
    """
    n = metric.n
    c = np.asarray(c, dtype=float)
    m = (n + root * np.sqrt(n * n - 4 * n + 8)) / 4.0

    def sigma(pt, v, h):
        L = metric.L.taylor(pt, v, h)
        cy = jets.einsum("a,...a->...", c, pt.fiber(v, h))
        return amplitude * jets.power(L, m) * jets.power(cy, 1.0 - 2.0 * m)

    s_field = ComputedField(sigma, (0, 0), 1, metric.domain, "s")

    def fn(pt, v, h):
        s = s_field.taylor(pt, v, h)
        ds = s_field.taylor(pt, v + 1, h).grad_y()
        L = metric.L.taylor(pt, v, h)
        ginv = metric.g_inv.taylor(pt, v, h)
        return (2.0 * jets.einsum("...,...i->...i", s, pt.fiber(v, h))
                - jets.einsum("...,...ia,...a->...i", L, ginv, ds))

    Z = ComputedField(fn, (1, 0), 2, metric.domain, f"Znull[m={m:.4f}]")
    Z.exponent = m
    Z.sigma = s_field
    return Z


def critical_translation(metric, Z=None, extra=None):
    """A = -2 sigma^Z y_i / L (+ extra with extra_a y^a = 0).

    This A satisfies A_a y^a = -2 y_a Z^a / L, the condition for L to be
    constant along geodesics of N^L + dy Z + A (x) y.
    """

    def fn(pt, v, h):
        L = metric.L.taylor(pt, v, h)
        ylow = metric.y_lower.taylor(pt, v, h)
        if Z is None:
            out = 0.0 * ylow
        else:
            s = jets.einsum("...a,...a->...", ylow, Z.taylor(pt, v, h)) / L
            out = -2.0 * jets.einsum("...,...i->...i", s / L, ylow)
        if extra is not None:
            out = out + extra.taylor(pt, v, h)
        return out

    return ComputedField(fn, (0, 1), 0, metric.domain, "A_crit")


def orthogonal_part(metric, A):
    """A_i - (A_a y^a) y_i / L, annihilating y."""

    def fn(pt, v, h):
        Av = A.taylor(pt, v, h)
        Ay = jets.einsum("...a,...a->...", Av, pt.fiber(v, h))
        ylow = metric.y_lower.taylor(pt, v, h)
        return Av - jets.einsum("...,...i->...i", Ay / metric.L.taylor(pt, v, h), ylow)

    return ComputedField(fn, (0, 1), 0, metric.domain, f"perp({A.name})")


def direction_field(metric, seed=0, scale=0.3):
    """0-homogeneous X^i = y^i (c(x) . y) / F with c smooth in x."""
    n = metric.n
    a, b = _smooth_vector(n, seed, scale)

    def fn(pt, v, h):
        xs, _ = pt.coordinates(v, h)
        y = pt.fiber(v, h)
        c = [1.0 + a[i] + sum(b[i, j] * jets.sin(xs[j]) for j in range(n)) for i in range(n)]
        cy = c[0] * y[..., 0]
        for i in range(1, n):
            cy = cy + c[i] * y[..., i]
        ratio = cy / metric.F.taylor(pt, v, h)
        return jets.einsum("...i,...->...i", y, ratio)

    return ComputedField(fn, (1, 0), 0, metric.domain, f"X_dir[seed={seed}]")


def ratio_scalar(metric, seed=0, scale=0.3):
    """0-homogeneous f = (1 + a sin x^0) P_ab y^a y^b / L with P random symmetric."""
    n = metric.n
    rng = np.random.default_rng(seed)
    P = rng.uniform(-1, 1, (n, n))
    P = 0.5 * (P + P.T) + np.eye(n)
    a = scale * rng.uniform(-1, 1)

    def fn(pt, v, h):
        xs, _ = pt.coordinates(v, h)
        y = pt.fiber(v, h)
        q = jets.einsum("ab,...a,...b->...", P, y, y) / metric.L.taylor(pt, v, h)
        return (1.0 + a * jets.sin(xs[0])) * q

    return ComputedField(fn, (0, 0), 0, metric.domain, f"f_ratio[seed={seed}]")


def vector_field_grid(metric, seed=0):
    """Vector fields of homogeneity 0, 1 and 2 used by the divergence checks."""
    from .fields import canonical_field
    return [direction_field(metric, seed), canonical_field(metric.domain),
            quadratic_Z(metric.n, seed, domain=metric.domain)]
