"""Independent checks by finite differences and quadrature.

Derivatives here come from central differences with one Richardson
extrapolation.  Pointwise values (L, g, N, X) may come from the library,
but no derivative of a checked quantity does.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from math import gamma, pi

import numpy as np
from scipy.special import roots_gegenbauer, roots_legendre

from . import jets
from .fields import ComputedField, DomainError, Field, FunctionField, Point
from .reports import ResidualReport

__all__ = [
    "ClassicalGeometry",
    "FiberQuadrature",
    "GapTable",
    "sphere_volume",
    "density",
    "divergence_oracle_horizontal",
    "divergence_oracle_vertical",
    "divergence_formula_horizontal",
    "divergence_formula_vertical",
    "laplacian_identity",
    "ehp_quadrature",
    "sphere_spectrum_check",
    "einstein_scalar_probe",
    "metric_equation_oracle",
]


def sphere_volume(dim):
    """Volume of the unit sphere S^dim."""
    return 2.0 * pi ** ((dim + 1) / 2) / gamma((dim + 1) / 2)


# ---------------------------------------------------------------------------
# finite differences


def fd_gradient(f, x, h=1e-4):
    """d f / d x^m appended as a last axis; ``f`` maps (S, n) -> (S, ...)."""
    x = np.atleast_2d(x)
    S, n = x.shape
    offsets = np.array([h, -h, h / 2, -h / 2])
    pts = x[:, None, None, :] + offsets[None, :, None, None] * np.eye(n)[None, None]
    vals = np.asarray(f(pts.reshape(-1, n)))
    vals = vals.reshape((S, 4, n) + vals.shape[1:])
    d1 = (vals[:, 0] - vals[:, 1]) / (2 * h)
    d2 = (vals[:, 2] - vals[:, 3]) / h
    d = (4.0 * d2 - d1) / 3.0                      # (S, n, ...)
    return np.moveaxis(d, 1, -1)


def fd_hessian(f, x, h=1e-3):
    """Second partials d^2 f / dx^m dx^p appended as two last axes."""
    x = np.atleast_2d(x)
    S, n = x.shape
    E = np.eye(n)
    signs = [(1, 1), (1, -1), (-1, 1), (-1, -1)]
    rows = []
    for step in (h, h / 2):
        for sm, sp in signs:
            rows.append(step * (sm * E[:, None, :] + sp * E[None, :, :]))
    shifts = np.array(rows)                        # (8, n, n, n)
    pts = x[:, None, None, None, :] + shifts[None]
    vals = np.asarray(f(pts.reshape(-1, n)))
    vals = vals.reshape((S, 8, n, n) + vals.shape[1:])

    def combo(v, step):
        return (v[:, 0] - v[:, 1] - v[:, 2] + v[:, 3]) / (4 * step * step)

    d = (4.0 * combo(vals[:, 4:], h / 2) - combo(vals[:, :4], h)) / 3.0
    return np.moveaxis(np.moveaxis(d, 1, -1), 1, -1)


# ---------------------------------------------------------------------------
# classical (isotropic) geometry of a quadratic Lagrangian


class ClassicalGeometry:
    """Levi-Civita geometry of g(x), with g read off a quadratic L by polarization.

    ``L`` is a function ``L(x, y)`` on float arrays of shape (S, n).
    """

    def __init__(self, L, n, h_grad=1e-4, h_hess=2e-3):
        self.L = L
        self.n = n
        self.h_grad = h_grad
        self.h_hess = h_hess

    @classmethod
    def from_metric(cls, metric, **kw):
        field_ = metric.L
        if not isinstance(field_, FunctionField):
            raise TypeError("the classical oracle needs a Lagrangian given by a function")
        return cls(field_.numeric, metric.n, **kw)

    def metric(self, x):
        x = np.atleast_2d(x)
        S, n = x.shape
        g = np.empty((S, n, n))
        E = np.eye(n)
        for i in range(n):
            for j in range(i, n):
                ones = np.ones((S, 1))
                lp = self.L(x, ones * (E[i] + E[j]))
                lm = self.L(x, ones * (E[i] - E[j]))
                g[:, i, j] = g[:, j, i] = 0.25 * (lp - lm)
        return g

    def christoffel(self, x):
        """Gam[k, i, j] = Gamma^k_ij."""
        g = self.metric(x)
        ginv = np.linalg.inv(g)
        dg = fd_gradient(self.metric, x, self.h_grad)          # [a, b, c] = d_c g_ab
        return 0.5 * np.einsum("skl,slij->skij", ginv, _christoffel_core(dg))

    def ricci(self, x):
        """Classical Ricci tensor R_ab = d_c G^c_ab - d_b G^c_ac + G^c_cd G^d_ab - G^c_bd G^d_ac."""
        x = np.atleast_2d(x)
        g = self.metric(x)
        ginv = np.linalg.inv(g)
        dg = fd_gradient(self.metric, x, self.h_grad)           # [a, b, c]
        ddg = fd_hessian(self.metric, x, self.h_hess)           # [a, b, c, d]
        T = _christoffel_core(dg)                               # [l, i, j]
        Gam = 0.5 * np.einsum("skl,slij->skij", ginv, T)
        dT = _christoffel_core_d(ddg)                           # [l, i, j, m]
        dginv = -np.einsum("ska,sabm,sbl->sklm", ginv, dg, ginv)
        dGam = 0.5 * (np.einsum("sklm,slij->skijm", dginv, T)
                      + np.einsum("skl,slijm->skijm", ginv, dT))
        return (np.einsum("scabc->sab", dGam) - np.einsum("scacb->sab", dGam)
                + np.einsum("sccd,sdab->sab", Gam, Gam)
                - np.einsum("scbd,sdac->sab", Gam, Gam))

    def scalar(self, x):
        return np.einsum("sab,sab->s", np.linalg.inv(self.metric(x)), self.ricci(x))

    def volume_element(self, x):
        return np.sqrt(np.abs(np.linalg.det(self.metric(x))))

    def divergence(self, X, x):
        """(1/sqrt|g|) d_a (sqrt|g| X^a) for a vector field X(x) -> (S, n)."""
        vol = self.volume_element
        d = fd_gradient(lambda p: vol(p)[:, None] * X(p), x, self.h_grad)
        return np.einsum("saa->s", d) / vol(x)


def _christoffel_core(dg):
    # [l, i, j] = d_i g_jl + d_j g_il - d_l g_ij, with dg[a, b, c] = d_c g_ab
    return (np.einsum("sjli->slij", dg) + np.einsum("silj->slij", dg)
            - np.einsum("sijl->slij", dg))


def _christoffel_core_d(ddg):
    return (np.einsum("sjlim->slijm", ddg) + np.einsum("siljm->slijm", ddg)
            - np.einsum("sijlm->slijm", ddg))


def metric_equation_oracle(pair, x, y, tol=1e-8):
    """Metric-equation residual against ((n+2)/2 Psi_cd - tr_g Psi g_cd) y^c y^d.

    Psi = 2 R_ab is computed by :class:`ClassicalGeometry`; only meaningful
    for quadratic L with the Berwald connection.
    """
    M, n = pair.metric, pair.n
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    geo = ClassicalGeometry.from_metric(M)
    g = geo.metric(x)
    Psi = 2.0 * geo.ricci(x)
    trace = np.einsum("sab,sab->s", np.linalg.inv(g), Psi)
    form = 0.5 * (n + 2) * Psi - trace[:, None, None] * g
    oracle = np.einsum("scd,sc,sd->s", form, y, y)
    formula = pair.metric_values(x, y)
    return GapTable(f"metric_closed_form[{M.name}]", x, y, formula, oracle, tol)


# ---------------------------------------------------------------------------
# gap tables


@dataclass
class GapTable:
    check_id: str
    x: np.ndarray
    y: np.ndarray
    formula: np.ndarray
    oracle: np.ndarray
    tol: float = 1e-5
    meta: dict = field(default_factory=dict)

    @property
    def gap(self):
        return np.abs(np.asarray(self.formula) - np.asarray(self.oracle))

    @property
    def max_gap(self):
        return float(np.max(self.gap)) if self.gap.size else 0.0

    @property
    def passed(self):
        return bool(np.all(np.isfinite(self.gap)) and self.max_gap <= self.tol)

    def report(self):
        return ResidualReport.from_samples(self.check_id, self.x, self.y, self.gap, self.tol,
                                           **self.meta)

    def to_csv(self, header=True):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if header:
            w.writerow(["check_id", "x", "y", "formula", "oracle", "gap"])
        for xi, yi, f, o, g in zip(self.x, self.y, self.formula, self.oracle, self.gap):
            w.writerow([self.check_id, " ".join(repr(float(v)) for v in xi),
                        " ".join(repr(float(v)) for v in yi), repr(float(f)),
                        repr(float(o)), repr(float(g))])
        return buf.getvalue()


# ---------------------------------------------------------------------------
# density and divergences


def density(metric, x, y):
    """rho = |det g| / F^n, the coefficient of the volume form in (x, y)."""
    pt = Point(x, y)
    g = metric.g.taylor(pt, 0, 0).value
    L = metric.L.taylor(pt, 0, 0).value
    return np.abs(np.linalg.det(g)) / np.abs(L) ** (metric.n / 2)


def _stencil_check(metric, x, y, h, which):
    n = metric.n
    for s in (h, -h):
        for d in range(n):
            xs, ys = x.copy(), y.copy()
            if which == "x":
                xs[:, d] += s
            else:
                ys[:, d] += s
            ok = np.asarray(metric.domain.contains(xs, ys), dtype=bool)
            if not ok.all():
                raise DomainError("finite-difference stencil leaves the domain")


def _fd_divergence(fn, x, y, which, h):
    """sum_a d/d(which)^a of fn(x, y)[:, a] by Richardson-extrapolated differences."""
    S, n = x.shape
    other = y if which == "x" else x

    def g(points):
        reps = len(points) // S
        o = np.repeat(other, reps, axis=0)
        return fn(points, o) if which == "x" else fn(o, points)

    base = x if which == "x" else y
    d = fd_gradient(g, base, h)                  # (S, n_components, n)
    return np.einsum("saa->s", d)


def divergence_formula_horizontal(pair, X: Field):
    M, N, n = pair.metric, pair.connection, pair.n

    def fn(pt, v, h):
        Xv = X.taylor(pt, v, h)
        y = pt.fiber(v, h)
        L = M.L.taylor(pt, v, h)
        ginv = M.g_inv.taylor(pt, v, h)
        P = ginv - (n / 2.0) * jets.einsum("...a,...b,...->...ab", y, y, jets.reciprocal(L))
        nab_g = N.covariant(M.g).taylor(pt, v, h)                 # [a, b, c]
        tor = jets.trace(N.torsion.taylor(pt, v, h), 1, 3)        # Tor^a_{ca}, index c
        w = jets.einsum("...ab,...abc->...c", P, nab_g) + tor
        divX = jets.trace(N.covariant(X).taylor(pt, v, h), 1, 2)
        return jets.einsum("...c,...c->...", Xv, w) + divX

    return ComputedField(fn, (0, 0), X.degree, M.domain, "div_h")


def divergence_formula_vertical(metric, X: Field):
    n = metric.n

    def fn(pt, v, h):
        Xv = X.taylor(pt, v, h)
        L = metric.L.taylor(pt, v, h)
        w = (2.0 * metric.mean_cartan.taylor(pt, v, h)
             - n * jets.einsum("...a,...->...a", metric.y_lower.taylor(pt, v, h),
                               jets.reciprocal(L)))
        return (jets.einsum("...a,...a->...", w, Xv)
                + jets.trace(X.taylor(pt, v + 1, h).grad_y(), 1, 2))

    return ComputedField(fn, (0, 0), X.degree - 1, metric.domain, "div_v")


def divergence_oracle_horizontal(pair, X: Field, x, y, h=1e-4, tol=1e-5, check_id=None):
    """Formula vs rho^-1 [d_x^a (rho X^a) - d_y^b (rho X^a N_a^b)]."""
    M, N = pair.metric, pair.connection
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    _stencil_check(M, x, y, h, "x")
    _stencil_check(M, x, y, h, "y")
    formula = divergence_formula_horizontal(pair, X).taylor(Point(x, y), 0, 0).value

    def rhoX(xs, ys):
        return density(M, xs, ys)[:, None] * X.values(xs, ys)

    def rhoXN(xs, ys):
        return np.einsum("s,sa,sba->sb", density(M, xs, ys), X.values(xs, ys),
                         N.N.values(xs, ys))

    oracle = (_fd_divergence(rhoX, x, y, "x", h) - _fd_divergence(rhoXN, x, y, "y", h))
    oracle = oracle / density(M, x, y)
    return GapTable(check_id or f"div_h[{M.name},{X.name}]", x, y, formula, oracle, tol)


def divergence_oracle_vertical(metric, X: Field, x, y, h=1e-4, tol=1e-5, check_id=None):
    """Formula vs rho^-1 d_y^a (rho X^a)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    _stencil_check(metric, x, y, h, "y")
    formula = divergence_formula_vertical(metric, X).taylor(Point(x, y), 0, 0).value

    def rhoX(xs, ys):
        return density(metric, xs, ys)[:, None] * X.values(xs, ys)

    oracle = _fd_divergence(rhoX, x, y, "y", h) / density(metric, x, y)
    return GapTable(check_id or f"div_v[{metric.name},{X.name}]", x, y, formula, oracle, tol)


def laplacian_identity(metric, f: Field, x, y, tol=1e-9):
    """g^ab (L f)_.a.b = 2 n f + L g^ab f_.a.b for 0-homogeneous f."""
    pt = Point(x, y)
    n = metric.n
    ginv = metric.g_inv.taylor(pt, 0, 0).value
    Lf = metric.L * f
    lhs = np.einsum("sab,sab->s", ginv, Lf.taylor(pt, 2, 0).grad_y().grad_y().value)
    hess = f.taylor(pt, 2, 0).grad_y().grad_y().value
    rhs = (2 * n * f.taylor(pt, 0, 0).value
           + metric.L.taylor(pt, 0, 0).value * np.einsum("sab,sab->s", ginv, hess))
    return ResidualReport.from_samples(f"laplacian_identity[{metric.name},{f.name}]",
                                       pt.x, pt.y, np.abs(lhs - rhs), tol)


# ---------------------------------------------------------------------------
# fiber quadrature and the Einstein-Hilbert recovery


class FiberQuadrature:
    """Product-angle rule on the unit sphere S^dim of a fiber.

    Polar angles use Gauss-Gegenbauer nodes in cos(angle), exact for the
    sin^k weights; the azimuth uses equispaced nodes.  ``nodes`` is the
    target total count; each angle gets about ``nodes**(1/dim)`` points.
    """

    def __init__(self, dim, nodes=256):
        if dim < 1:
            raise ValueError("sphere dimension must be at least 1")
        self.dim = dim
        m = nodes if dim == 1 else max(2, int(round(nodes ** (1.0 / dim))))
        phi = 2 * pi * np.arange(m) / m
        pts = [np.stack([np.cos(phi), np.sin(phi)], axis=1)]
        wts = [np.full(m, 2 * pi / m)]
        # build up from S^1 to S^dim by adding polar angles
        for k in range(2, dim + 1):
            t, w = (roots_legendre(m) if k == 2 else roots_gegenbauer(m, (k - 1) / 2.0))
            s = np.sqrt(1.0 - t * t)
            prev_p, prev_w = pts[-1], wts[-1]
            new_p = np.concatenate([
                t[:, None, None] * np.ones((1, len(prev_p), 1)),
                s[:, None, None] * prev_p[None, :, :]], axis=2).reshape(-1, k + 1)
            new_w = (w[:, None] * prev_w[None, :]).ravel()
            pts.append(new_p)
            wts.append(new_w)
        self.points = pts[-1]
        self.weights = wts[-1]
        self.order = m

    @property
    def volume(self):
        return float(np.sum(self.weights))

    def self_test(self, tol=1e-8):
        return abs(self.volume - sphere_volume(self.dim)) <= tol


@dataclass
class EHPResult:
    lhs: float
    rhs: float
    gap: float
    relative_gap: float
    y_dependence: float
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        return {"lhs": self.lhs, "rhs": self.rhs, "gap": self.gap,
                "relative_gap": self.relative_gap, "y_dependence": self.y_dependence,
                **self.meta}


class PreconditionError(ValueError):
    pass


def ehp_quadrature(metric, connection=None, region=None, base_nodes=64, fiber_nodes=256,
                   y_tol=1e-8, probe_stride=8, probe_directions=16):
    """Fiber-times-base quadrature of g^ab Ric_.a.b dmu against 2 Vol(S^n-1) int Scal dV.

    The integrand is first checked for y-independence on a subset of base
    nodes; the fiber integral of the density is then done with the product
    angle rule and the base integral with tensor Gauss-Legendre nodes.
    """
    from .connection import metric_connection

    n = metric.n
    N = connection or metric_connection(metric)
    region = np.asarray(region if region is not None else metric.box, dtype=float)
    t, w = roots_legendre(base_nodes)
    axes = [0.5 * (b - a) * t + 0.5 * (a + b) for a, b in region]
    wax = [0.5 * (b - a) * w for a, b in region]
    X = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, n)
    W = np.prod(np.stack(np.meshgrid(*wax, indexing="ij"), -1).reshape(-1, n), axis=1)
    fq = FiberQuadrature(n - 1, fiber_nodes)
    U = fq.points

    def integrand(xs, ys):
        pt = Point(xs, ys)
        hess = N.ricci.taylor(pt, 2, 0).grad_y().grad_y().value
        return np.einsum("sab,sab->s", metric.g_inv.taylor(pt, 0, 0).value, hess)

    # y-independence on a subset of base nodes
    probe = X[::probe_stride]
    dirs = U[np.linspace(0, len(U) - 1, probe_directions).astype(int)]
    px = np.repeat(probe, len(dirs), axis=0)
    py = np.tile(dirs, (len(probe), 1))
    vals = integrand(px, py).reshape(len(probe), len(dirs))
    y_dep = float(np.max(np.abs(vals - vals[:, :1])))
    if y_dep > y_tol * max(1.0, float(np.max(np.abs(vals)))):
        raise PreconditionError(f"fiber integrand depends on y (spread {y_dep:.3e})")

    I = integrand(X, np.tile(U[:1], (len(X), 1)))
    fiber = np.empty(len(X))
    chunk = max(1, 20000 // len(U))
    for s in range(0, len(X), chunk):
        xs = X[s:s + chunk]
        rho = density(metric, np.repeat(xs, len(U), axis=0), np.tile(U, (len(xs), 1)))
        fiber[s:s + chunk] = rho.reshape(len(xs), len(U)) @ fq.weights
    lhs = float(np.sum(W * I * fiber))

    geo = ClassicalGeometry.from_metric(metric)
    rhs = float(2.0 * sphere_volume(n - 1) * np.sum(W * geo.scalar(X) * geo.volume_element(X)))
    gap = abs(lhs - rhs)
    rel = gap / max(1.0, abs(rhs))
    return EHPResult(lhs, rhs, gap, rel, y_dep,
                     {"base_nodes": base_nodes, "fiber_nodes": len(U),
                      "fiber_volume": fq.volume})


# ---------------------------------------------------------------------------
# spectra and Einstein-type scalars


def _euclid_metric(n):
    from .catalog import euclidean
    return euclidean(n)


def sphere_spectrum_check(n, H, nu, samples=50, seed=0, skip_below=1e-8):
    """-L g^ab f_.a.b / f for f = H(y) / |y|^nu with Euclidean L.

    ``H`` maps the list of fiber jets to a homogeneous harmonic polynomial
    of degree ``nu``.  Returns (mean eigenvalue, expected nu (nu + n - 2),
    max gap, number of samples used).
    """
    M = _euclid_metric(n)

    def fval(pt, v, h):
        _, ys = pt.coordinates(v, h)
        Hv = H(ys)
        r = M.L.taylor(pt, v, h)
        out = Hv * jets.power(r, -nu / 2.0) if nu else Hv + 0.0 * r
        if not isinstance(out, jets.Jet):
            out = 0.0 * r + out
        return out

    f = ComputedField(fval, (0, 0), 0, M.domain, f"H/|y|^{nu}")
    rng = np.random.default_rng(seed)
    y = rng.normal(size=(samples, n))
    y /= np.linalg.norm(y, axis=1, keepdims=True)
    x = np.zeros_like(y)
    pt = Point(x, y)
    fv = f.taylor(pt, 0, 0).value
    keep = np.abs(fv) >= skip_below
    expected = nu * (nu + n - 2)
    if not keep.any():
        return {"eigenvalue": None, "expected": expected, "gap": None, "used": 0,
                "verdict": "inconclusive"}
    hess = f.taylor(pt, 2, 0).grad_y().grad_y().value
    lap = np.einsum("sab,sab->s", M.g_inv.taylor(pt, 0, 0).value, hess)
    eig = -M.L.taylor(pt, 0, 0).value * lap / np.where(keep, fv, 1.0)
    eig = eig[keep]
    return {"eigenvalue": float(np.mean(eig)), "expected": float(expected),
            "gap": float(np.max(np.abs(eig - expected))), "spread": float(np.ptp(eig)),
            "used": int(keep.sum()), "verdict": "computed"}


def einstein_scalar_probe(pair, kappa, x, y, properness=None, tol=1e-6):
    """kappa Ric - L g^ab Ric_.a.b next to |Ric| on the samples."""
    M, N, n = pair.metric, pair.connection, pair.n
    pt = Point(x, y)
    Ric = N.ricci.taylor(pt, 0, 0).value
    hess = N.ricci.taylor(pt, 2, 0).grad_y().grad_y().value
    lap = np.einsum("sab,sab->s", M.g_inv.taylor(pt, 0, 0).value, hess)
    res = kappa * Ric - M.L.taylor(pt, 0, 0).value * lap
    classification = None
    if properness is not None:
        classification = properness.details.get("classification")
    return {
        "kappa": kappa,
        "kappa_below_2n": kappa < 2 * n,
        "proper_lorentz": classification == "proper_lorentz_finsler",
        "classification": classification,
        "residual": ResidualReport.from_samples(f"einstein_scalar[{kappa}]", pt.x, pt.y,
                                                np.abs(res), tol),
        "ricci": ResidualReport.from_samples("ricci", pt.x, pt.y, np.abs(Ric), tol),
    }
