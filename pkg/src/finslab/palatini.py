"""Affine and metric variational equations and the structure of their solutions."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import jets
from .connection import NonlinearConnection, assemble, metric_connection
from .fields import ComputedField, DomainError, Field, Point
from .reports import ResidualReport, sup_norm

__all__ = [
    "PalatiniPair",
    "Decomposition",
    "NotASolutionError",
    "NearBoundaryError",
    "L_FLOOR",
    "affine_residual",
    "metric_residual",
    "decompose",
    "sigma_kappa",
    "torsionfree_residuals",
    "classify",
    "metric_compatibility_suite",
    "boundary_divisibility_probe",
]

L_FLOOR = 1e-30


class NotASolutionError(ValueError):
    """The two recoveries of (Z, A) disagree, so N does not solve the affine equation."""

    def __init__(self, message, diagnostic):
        super().__init__(message)
        self.diagnostic = diagnostic


class NearBoundaryError(ArithmeticError):
    pass


def _inv_L(metric, pt, v, h):
    L = metric.L.taylor(pt, v, h)
    small = np.abs(L.value) < L_FLOOR
    if np.any(small):
        i = int(np.flatnonzero(small)[0])
        raise NearBoundaryError(f"|L| below {L_FLOOR:g} at x={pt.x[i].tolist()}, "
                                f"y={pt.y[i].tolist()}")
    return L, jets.reciprocal(L)


def _eye(n):
    return np.eye(n)


class PalatiniPair:
    """A metric together with a homogeneous nonlinear connection."""

    def __init__(self, metric, connection=None):
        if connection is None:
            connection = metric_connection(metric)
        if not isinstance(connection, NonlinearConnection):
            raise TypeError("connection must be a NonlinearConnection")
        self.metric = metric
        self.connection = connection
        self.n = metric.n

    def __repr__(self):
        return f"<PalatiniPair {self.metric.name} / {self.connection.name}>"

    def _field(self, fn, rank, degree, name):
        return ComputedField(fn, rank, degree, self.metric.domain, name)

    @cached_property
    def J(self):
        """J = N - N^L."""
        N, NL = self.connection.N, self.metric.berwald
        return self._field(lambda pt, v, h: N.taylor(pt, v, h) - NL.taylor(pt, v, h),
                           (1, 1), 1, "J")

    @cached_property
    def B(self):
        M, n = self.metric, self.n

        def fn(pt, v, h):
            J = self.J.taylor(pt, v, h)
            dJ = self.J.taylor(pt, v + 1, h).grad_y()          # [k, i, a]
            _, inv = _inv_L(M, pt, v, h)
            ylow = M.y_lower.taylor(pt, v, h)
            C = M.mean_cartan.taylor(pt, v, h)
            out = 0.5 * (n + 2) * jets.einsum("...a,...ai,...->...i", ylow, J, inv)
            out = out - jets.einsum("...a,...ai->...i", C, J)
            out = out - 0.5 * (jets.trace(dJ, 1, 3) + jets.trace(dJ, 1, 2))
            return out

        return self._field(fn, (0, 1), 0, "B")

    @cached_property
    def affine(self):
        """Left-hand side E[j, i] of the affine equation."""
        M, n = self.metric, self.n

        def fn(pt, v, h):
            y = pt.fiber(v, h)
            s = M.mean_landsberg.taylor(pt, v, h) + self.B.taylor(pt, v, h)
            dJ = self.J.taylor(pt, v + 1, h).grad_y()
            out = 2.0 * jets.einsum("...i,...j->...ji", s, y)
            sy = jets.einsum("...a,...a->...", s, y)
            out = out - 2.0 * jets.einsum("...,ji->...ji", sy, _eye(n))
            out = out - jets.einsum("...jia,...a->...ji", dJ - dJ.swapaxes(-1, -2), y)
            return out

        return self._field(fn, (1, 1), 1, "affine")

    @cached_property
    def metric_equation(self):
        """(n+2) Ric - L g^ab Ric_.a.b for the pair's connection."""
        M, n = self.metric, self.n
        Ric = self.connection.ricci

        def fn(pt, v, h):
            r = Ric.taylor(pt, v, h)
            hess = Ric.taylor(pt, v + 2, h).grad_y().grad_y()
            lap = jets.einsum("...ab,...ab->...", M.g_inv.taylor(pt, v, h), hess)
            return (n + 2) * r - M.L.taylor(pt, v, h) * lap

        return self._field(fn, (0, 0), 2, "metric")

    def affine_values(self, x, y):
        return self.affine.taylor(Point(x, y), 0, 0).value

    def metric_values(self, x, y):
        return self.metric_equation.taylor(Point(x, y), 0, 0).value


def affine_residual(P: PalatiniPair, x, y):
    return P.affine_values(x, y)


def metric_residual(P: PalatiniPair, x, y):
    return P.metric_values(x, y)


# ---------------------------------------------------------------------------
# decomposition N = N^L + dy Z + A (x) y


@dataclass
class Decomposition:
    """Both recoveries of (Z, A) from a connection.

    ``Z``/``A`` come from B and the mean Landsberg tensor and are exact on
    solutions of the affine equation.  ``Z_torsion``/``A_torsion`` use the
    torsion and are exact for every connection of the assembled form.
    """

    pair: PalatiniPair
    Z: Field
    A: Field
    Z_torsion: Field
    A_torsion: Field
    diagnostic: dict = field(default_factory=dict)

    @property
    def is_solution(self):
        return self.diagnostic.get("solution")

    def evaluate(self, x, y):
        pt = Point(x, y)
        return {name: getattr(self, name).taylor(pt, 0, 0).value
                for name in ("Z", "A", "Z_torsion", "A_torsion")}

    def check(self, x, y, tol=1e-8):
        """Route gaps and reassembly residuals at the samples."""
        vals = self.evaluate(x, y)
        N = self.pair.connection.N.values(x, y)
        out = {
            "route_gap_A": sup_norm(vals["A"] - vals["A_torsion"]),
            "route_gap_Z": sup_norm(vals["Z"] - vals["Z_torsion"]),
        }
        for label, (Zf, Af) in {"equation": (self.Z, self.A),
                                "torsion": (self.Z_torsion, self.A_torsion)}.items():
            rebuilt = assemble(self.pair.metric, Zf, Af).N.values(x, y)
            out[f"reassembly_{label}"] = sup_norm(rebuilt - N)
        gap = max(float(np.max(out["route_gap_A"])), float(np.max(out["route_gap_Z"])))
        self.diagnostic = {
            "route_gap": gap,
            "reassembly_equation": float(np.max(out["reassembly_equation"])),
            "reassembly_torsion": float(np.max(out["reassembly_torsion"])),
            "tol": tol,
            "solution": bool(gap <= tol),
        }
        return out


def decompose(P: PalatiniPair, x=None, y=None, tol=1e-8, formal=False) -> Decomposition:
    """Recover (Z, A) with N = N^L + dy Z + A (x) y.

    With samples, the two recoveries are compared; a gap above ``tol``
    raises :class:`NotASolutionError` unless ``formal`` is set.
    """
    M, n = P.metric, P.n
    if n < 2:
        raise ValueError("dimension must be at least 2")

    def By(pt, v, h):
        return jets.einsum("...a,...a->...", P.B.taylor(pt, v, h), pt.fiber(v, h))

    def Z_eq(pt, v, h):
        y = pt.fiber(v, h)
        Jy = jets.einsum("...ja,...a->...j", P.J.taylor(pt, v, h), y)
        return 0.5 * Jy - jets.einsum("...,...j->...j", By(pt, v, h), y)

    def A_eq(pt, v, h):
        return (M.mean_landsberg.taylor(pt, v, h) + P.B.taylor(pt, v, h)
                + By(pt, v + 1, h).grad_y())

    Tor = P.connection.torsion

    def torsion_trace(pt, v, h):
        tr = jets.trace(Tor.taylor(pt, v, h), 1, 2)           # Tor_ab^a, index b
        return jets.einsum("...b,...b->...", tr, pt.fiber(v, h))

    def A_tor(pt, v, h):
        y = pt.fiber(v, h)
        L, inv = _inv_L(M, pt, v, h)
        ylow = M.y_lower.taylor(pt, v, h)
        TorY = jets.einsum("...kib,...b->...ki", Tor.taylor(pt, v, h), y)
        s = torsion_trace(pt, v, h)
        ds = torsion_trace(pt, v + 1, h).grad_y()
        num = ((n - 1) * jets.einsum("...ki,...k->...i", TorY, ylow)
               - jets.einsum("...,...i->...i", L, ds)
               - jets.einsum("...,...i->...i", s, ylow))
        return jets.einsum("...i,...->...i", num, inv) / (2.0 * (n - 1))

    A_torsion = ComputedField(A_tor, (0, 1), 0, M.domain, "A_torsion")

    def Z_tor(pt, v, h):
        y = pt.fiber(v, h)
        Jy = jets.einsum("...ja,...a->...j", P.J.taylor(pt, v, h), y)
        Ay = jets.einsum("...a,...a->...", A_torsion.taylor(pt, v, h), y)
        return 0.5 * (Jy - jets.einsum("...,...j->...j", Ay, y))

    dec = Decomposition(
        P,
        ComputedField(Z_eq, (1, 0), 2, M.domain, "Z"),
        ComputedField(A_eq, (0, 1), 0, M.domain, "A"),
        ComputedField(Z_tor, (1, 0), 2, M.domain, "Z_torsion"),
        A_torsion,
    )
    if x is not None:
        dec.check(x, y, tol)
        if not dec.diagnostic["solution"] and not formal:
            raise NotASolutionError(
                f"not a solution: the two recoveries of (Z, A) differ by "
                f"{dec.diagnostic['route_gap']:.3e} > {tol:g}", dec.diagnostic)
    return dec


# ---------------------------------------------------------------------------
# torsion-free system


@dataclass
class SigmaKappa:
    sigma: Field
    kappa: Field

    def evaluate(self, x, y):
        pt = Point(x, y)
        s = self.sigma.taylor(pt, 0, 0).value
        K = self.kappa.taylor(pt, 0, 0).value
        return s, K, np.einsum("si,si->s", K, pt.y)


def sigma_kappa(M, Z: Field) -> SigmaKappa:
    """sigma = y_a Z^a / L and K_i = -2/(n+2) (2 C_a.i Z^a + C_a Z^a_.i)."""
    n = M.n

    def sigma(pt, v, h):
        _, inv = _inv_L(M, pt, v, h)
        return jets.einsum("...a,...a,...->...", M.y_lower.taylor(pt, v, h),
                           Z.taylor(pt, v, h), inv)

    def kappa(pt, v, h):
        dC = M.mean_cartan.taylor(pt, v + 1, h).grad_y()    # [a, i]
        dZ = Z.taylor(pt, v + 1, h).grad_y()                # [a, i]
        out = (2.0 * jets.einsum("...ai,...a->...i", dC, Z.taylor(pt, v, h))
               + jets.einsum("...a,...ai->...i", M.mean_cartan.taylor(pt, v, h), dZ))
        return (-2.0 / (n + 2)) * out

    return SigmaKappa(ComputedField(sigma, (0, 0), 1, M.domain, "sigma"),
                      ComputedField(kappa, (0, 1), 0, M.domain, "K"))


@dataclass
class TorsionFreeSystem:
    res4: Field
    res5: Field
    res6: Field
    sigma_kappa: SigmaKappa


def torsionfree_fields(M, Z: Field) -> TorsionFreeSystem:
    n = M.n
    sk = sigma_kappa(M, Z)
    c = 2.0 / (n + 2)

    def res4(pt, v, h):
        y = pt.fiber(v, h)
        L = M.L.taylor(pt, v, h)
        ginv = M.g_inv.taylor(pt, v, h)
        s = sk.sigma.taylor(pt, v, h)
        ds = sk.sigma.taylor(pt, v + 1, h).grad_y()
        w = ds + sk.kappa.taylor(pt, v, h) - c * M.mean_landsberg.taylor(pt, v, h)
        return (Z.taylor(pt, v, h) - 2.0 * jets.einsum("...,...i->...i", s, y)
                + jets.einsum("...,...ia,...a->...i", L, ginv, w))

    def res5(pt, v, h):
        dZ = Z.taylor(pt, v + 1, h).grad_y()
        return ((n + 2) * sk.sigma.taylor(pt, v, h)
                - 2.0 * jets.einsum("...a,...a->...", M.mean_cartan.taylor(pt, v, h),
                                    Z.taylor(pt, v, h))
                - jets.trace(dZ, 1, 2))

    def res6(pt, v, h):
        hs = sk.sigma.taylor(pt, v + 2, h).grad_y().grad_y()
        dK = sk.kappa.taylor(pt, v + 1, h).grad_y()
        dLan = M.mean_landsberg.taylor(pt, v + 1, h).grad_y()
        lap = jets.einsum("...ab,...ab->...", M.g_inv.taylor(pt, v, h), hs + dK - c * dLan)
        return (n - 2) * sk.sigma.taylor(pt, v, h) - M.L.taylor(pt, v, h) * lap

    dom = M.domain
    return TorsionFreeSystem(ComputedField(res4, (1, 0), 2, dom, "res4"),
                             ComputedField(res5, (0, 0), 1, dom, "res5"),
                             ComputedField(res6, (0, 0), 1, dom, "res6"), sk)


def torsionfree_residuals(M, Z: Field, x, y, tol=1e-8, agreement_tol=1e-6):
    """Reports for the three torsion-free equations at the samples.

    On the form given by the first equation the second and third are
    negatives of each other; a mismatch above ``agreement_tol`` is flagged.
    """
    system = torsionfree_fields(M, Z)
    pt = Point(x, y)
    r4 = system.res4.taylor(pt, 0, 0).value
    r5 = system.res5.taylor(pt, 0, 0).value
    r6 = system.res6.taylor(pt, 0, 0).value
    on_form = bool(np.max(sup_norm(r4)) <= tol)
    mismatch = float(np.max(np.abs(r5 + r6)))
    warning = None
    if on_form and mismatch > agreement_tol:
        warning = (f"res5 and res6 disagree by {mismatch:.3e} on the form of res4; "
                   "check the derivative budget or conditioning")
    return {
        "res4": ResidualReport.from_samples("torsionfree.res4", pt.x, pt.y, sup_norm(r4), tol),
        "res5": ResidualReport.from_samples("torsionfree.res5", pt.x, pt.y, np.abs(r5), tol,
                                            signed=r5.tolist()),
        "res6": ResidualReport.from_samples("torsionfree.res6", pt.x, pt.y, np.abs(r6), tol,
                                            signed=r6.tolist()),
        "consistency": {"on_form": on_form, "res5_plus_res6": mismatch, "warning": warning},
    }


# ---------------------------------------------------------------------------
# classification


@dataclass
class Classification:
    label: str
    affine_max: float
    Z_max: float
    A_max: float
    representative: NonlinearConnection = None
    decomposition: Decomposition = None

    def to_dict(self):
        return {"label": self.label, "affine_max": self.affine_max,
                "Z_max": self.Z_max, "A_max": self.A_max}


def classify(P: PalatiniPair, x, y, tol_affine=1e-7, tol_z=1e-9) -> Classification:
    """non_solution, formally_classical or same_fiber from sampled residuals."""
    E = P.affine_values(x, y)
    aff = float(np.max(sup_norm(E))) if len(E) else 0.0
    if aff > tol_affine:
        return Classification("non_solution", aff, float("nan"), float("nan"))
    dec = decompose(P, x, y, formal=True)
    vals = dec.evaluate(x, y)
    zmax = float(np.max(np.abs(vals["Z"])))
    amax = float(np.max(np.abs(vals["A"])))
    scale = max(1.0, float(np.max(np.abs(P.metric.berwald.values(x, y)))))
    if zmax <= tol_z * scale:
        return Classification("formally_classical", aff, zmax, amax,
                              metric_connection(P.metric), dec)
    rep = assemble(P.metric, dec.Z, None, name="symmetric representative")
    return Classification("same_fiber", aff, zmax, amax, rep, dec)


# ---------------------------------------------------------------------------
# metric compatibility


@dataclass
class CompatibilitySuite:
    tensors: dict
    closed_forms: dict
    conditions: dict

    @property
    def consistent(self):
        return all(c["consistent"] for c in self.conditions.values())

    def to_dict(self):
        return {
            "tensors": {k: r.to_dict(with_samples=False) for k, r in self.tensors.items()},
            "closed_forms": {k: r.to_dict(with_samples=False)
                             for k, r in self.closed_forms.items()},
            "conditions": self.conditions,
            "consistent": self.consistent,
        }


def metric_compatibility_suite(P: PalatiniPair, x, y, Z: Field = None, A: Field = None,
                               tol=1e-8):
    """Metric-compatibility tensors of an assembled connection.

    The anisotropic connection is taken as Gam = dy N, so its covariant
    derivatives coincide with those of N.  ``Z``/``A`` default to the
    connection's assembly parts, or to the torsion-route decomposition.
    Each condition pairs the vanishing of a tensor with its closed form
    for A; ``consistent`` means both sides agree on whether it holds.
    """
    M, N, n = P.metric, P.connection, P.n
    if Z is None and A is None:
        parts = N.parts if N.provenance == "assembled" else {}
        if parts:
            Z, A = parts.get("Z"), parts.get("A")
        else:
            dec = decompose(P, formal=True)
            Z, A = dec.Z_torsion, dec.A_torsion
    pt = Point(x, y)
    S = len(pt.x)
    yv = pt.y
    L = M.L.taylor(pt, 0, 0).value
    if np.any(np.abs(L) < L_FLOOR):
        raise NearBoundaryError("sample on the boundary")
    g = M.g.taylor(pt, 0, 0).value
    ginv = M.g_inv.taylor(pt, 0, 0).value
    ylow = np.einsum("sia,sa->si", g, yv)

    def zeros(*shape):
        return np.zeros((S,) + shape)

    if Z is not None:
        Zv = Z.taylor(pt, 0, 0).value
        dZ = Z.taylor(pt, 1, 0).grad_y().value                     # [a, k]
        ddZ = Z.taylor(pt, 2, 0).grad_y().grad_y().value            # [a, k, i]
    else:
        Zv, dZ, ddZ = zeros(n), zeros(n, n), zeros(n, n, n)
    if A is not None:
        Av = A.taylor(pt, 0, 0).value
        dA = A.taylor(pt, 1, 0).grad_y().value                      # [k, i]
    else:
        Av, dA = zeros(n), zeros(n, n)

    nab_g = N.covariant(M.g).taylor(pt, 0, 0).value                 # [i, j, k]
    nab_ylow = N.covariant(M.y_lower).taylor(pt, 0, 0).value        # [j, k] = nabla_k y_j
    nab_L = N.covariant(M.L).taylor(pt, 0, 0).value                 # [k]
    tensors_raw = {
        "nabla_g": nab_g,
        "nabla_y_lower": nab_ylow,
        "nabla_L": nab_L,
        "radial_nabla_g": np.einsum("sijc,sc->sij", nab_g, yv),
        "trace_nabla_g": np.einsum("sab,sabk->sk", ginv, nab_g),
        "torsion": N.torsion.taylor(pt, 0, 0).value,
    }
    tensors = {k: ResidualReport.from_samples(f"compat.{k}", pt.x, pt.y, sup_norm(v), tol)
               for k, v in tensors_raw.items()}

    Lan = M.landsberg.taylor(pt, 0, 0).value
    C = M.cartan.taylor(pt, 0, 0).value
    closed_g = (2.0 * Lan - 2.0 * np.einsum("sija,sak->sijk", C, dZ)
                - np.einsum("saki,saj->sijk", ddZ, g) - np.einsum("sakj,sai->sijk", ddZ, g)
                - np.einsum("ski,sj->sijk", dA, ylow) - np.einsum("skj,si->sijk", dA, ylow)
                - 2.0 * np.einsum("sij,sk->sijk", g, Av))
    yZ = np.einsum("sa,saik->sik", ylow, ddZ)
    closed_ylow = (-np.einsum("sai,sak->ski", dZ, g) - yZ.transpose(0, 2, 1)
                   - L[:, None, None] * dA.transpose(0, 2, 1)
                   - 2.0 * np.einsum("si,sk->ski", Av, ylow))            # [k, i]
    yaZ = np.einsum("sa,sai->si", ylow, dZ)
    closed_L = -2.0 * yaZ - 2.0 * L[:, None] * Av
    closed_trace = -(n + 2) * yaZ / L[:, None] - 2 * n * Av
    closed_forms = {
        "nabla_g": ResidualReport.from_samples(
            "compat.closed.nabla_g", pt.x, pt.y, sup_norm(nab_g - closed_g), tol),
        "nabla_y_lower": ResidualReport.from_samples(
            "compat.closed.nabla_y_lower", pt.x, pt.y, sup_norm(nab_ylow - closed_ylow), tol),
        "nabla_L": ResidualReport.from_samples(
            "compat.closed.nabla_L", pt.x, pt.y, sup_norm(nab_L - closed_L), tol),
        "trace_nabla_g": ResidualReport.from_samples(
            "compat.closed.trace_nabla_g", pt.x, pt.y,
            sup_norm(tensors_raw["trace_nabla_g"] - closed_trace), tol,
            valid="solutions only"),
    }

    def condition(tensor, criterion, label):
        t = float(np.max(sup_norm(tensor)))
        c = float(np.max(sup_norm(criterion)))
        return {"tensor_max": t, "criterion_max": c, "tensor_vanishes": t <= tol,
                "criterion_holds": c <= tol, "consistent": (t <= tol) == (c <= tol),
                "criterion": label}

    Ay = np.einsum("si,si->s", Av, yv)
    yZ0 = np.einsum("sa,sa->s", ylow, Zv)
    conditions = {
        "nabla_L": condition(nab_L, Av + yaZ / L[:, None], "A_i = -y_a Z^a_.i / L"),
        "L_along_geodesics": condition(np.einsum("sc,sc->s", nab_L, yv), Ay + 2 * yZ0 / L,
                                       "A_a y^a = -2 y_a Z^a / L"),
        "trace_nabla_g": condition(tensors_raw["trace_nabla_g"],
                                   Av + (n + 2) * yaZ / (2 * n * L[:, None]),
                                   "A_i = -(n+2) y_a Z^a_.i / (2 n L)"),
    }
    return CompatibilitySuite(tensors, closed_forms, conditions)


# ---------------------------------------------------------------------------
# divisibility by powers of L near the boundary


@dataclass
class DivisibilityReport:
    L: np.ndarray
    Z_norm: np.ndarray
    verdicts: list

    def bounded(self, nu):
        return self.verdicts[nu - 1]["bounded"]

    def to_dict(self):
        from .reports import round_floats
        return round_floats({"L": self.L, "Z_norm": self.Z_norm, "verdicts": self.verdicts})


def boundary_divisibility_probe(M, Z: Field, x, yb, nu_max=3, depth=20, window=8,
                                slope_floor=-0.25):
    """Test whether |Z| / L^nu stays bounded when approaching the lightcone.

    Points ``yb + 2^-k w`` (``w`` the domain's interior direction) approach
    the boundary direction ``yb`` with L decreasing geometrically.  For each
    nu the log-log slope of |Z|/L^nu against L over the last ``window``
    points is fitted; a slope below ``slope_floor`` is a growth trend.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    yb = np.atleast_2d(np.asarray(yb, dtype=float))
    if M.domain.interior_direction is None:
        raise ValueError("the metric's domain has no interior direction")
    w = M.domain.interior_direction(x, yb)
    t = 2.0 ** -np.arange(1, depth + 1)
    ys = yb[:, None, :] + t[None, :, None] * w[:, None, :]          # (m, depth, n)
    xs = np.repeat(x[:, None, :], depth, axis=1)
    flat_x, flat_y = xs.reshape(-1, M.n), ys.reshape(-1, M.n)
    inside = np.asarray(M.domain.contains(flat_x, flat_y), dtype=bool)
    if not inside.all():
        raise DomainError("boundary ray leaves the domain")
    L = M.L.values(flat_x, flat_y).reshape(len(x), depth)
    Zn = np.max(np.abs(Z.values(flat_x, flat_y)), axis=-1).reshape(len(x), depth)
    verdicts = []
    tail = slice(depth - window, depth)
    for nu in range(1, nu_max + 1):
        slopes = []
        for r in range(len(x)):
            if np.all(Zn[r, tail] == 0):
                slopes.append(0.0)
                continue
            ratio = Zn[r, tail] / np.abs(L[r, tail]) ** nu
            slopes.append(float(np.polyfit(np.log(np.abs(L[r, tail])), np.log(ratio), 1)[0]))
        worst = float(np.min(slopes))
        verdicts.append({"nu": nu, "slope": worst, "slopes": slopes,
                         "bounded": bool(worst >= slope_floor)})
    return DivisibilityReport(L, Zn, verdicts)
