"""Homogeneous nonlinear connections and their horizontal calculus."""
from __future__ import annotations

from functools import cached_property

import numpy as np

from . import calculus, jets
from .fields import ComputedField, Field, FunctionField, Point, check_homogeneity

__all__ = [
    "NonlinearConnection",
    "HomogeneityError",
    "metric_connection",
    "assemble",
    "linear_connection",
    "user_connection",
    "torsion",
    "curvature_and_ricci",
    "covariant_derivative",
    "underlying_spray",
    "translate",
]


class HomogeneityError(ValueError):
    pass


class NonlinearConnection:
    """A 1-homogeneous (1,1) field ``N[k, i] = N_i^k``.

    ``provenance`` is ``metric``, ``assembled``, ``linear`` or ``user``.
    Assembled connections keep their parts in ``parts`` (Z, A).
    """

    def __init__(self, field: Field, provenance="user", metric=None, parts=None, name=""):
        if field.rank != (1, 1):
            raise ValueError("connection components must be a (1,1) field")
        if field.degree != 1:
            raise HomogeneityError("connection components must be 1-homogeneous")
        self.N = field
        self.provenance = provenance
        self.metric = metric
        self.parts = parts or {}
        self.name = name or field.name

    def __repr__(self):
        return f"<NonlinearConnection {self.name} ({self.provenance})>"

    def _field(self, fn, rank, degree, name):
        return ComputedField(fn, rank, degree, self.N.domain, f"{name}[{self.name}]")

    @cached_property
    def christoffel(self):
        return self._field(lambda pt, v, h: calculus.christoffel(self.N, pt, v, h),
                           (1, 2), 0, "Gam")

    @cached_property
    def torsion(self):
        return self._field(lambda pt, v, h: calculus.torsion(self.N, pt, v, h),
                           (1, 2), 0, "Tor")

    @cached_property
    def curvature(self):
        return self._field(lambda pt, v, h: calculus.curvature(self.N, pt, v, h),
                           (1, 2), 1, "R")

    @cached_property
    def ricci(self):
        return self._field(lambda pt, v, h: calculus.ricci(self.N, pt, v, h),
                           (0, 0), 2, "Ric")

    @cached_property
    def spray(self):
        return self._field(lambda pt, v, h: calculus.spray(self.N, pt, v, h),
                           (1, 0), 2, "G")

    def delta(self, T: Field) -> Field:
        """Horizontal derivative delta_j T (j appended)."""
        return self._field(lambda pt, v, h: calculus.horizontal(self.N, T, pt, v, h),
                           (T.rank[0], T.rank[1] + 1), T.degree, f"delta({T.name})")

    def covariant(self, T: Field) -> Field:
        """Covariant derivative with Gam = dy N (j appended)."""
        return self._field(lambda pt, v, h: calculus.covariant(self.N, T, pt, v, h),
                           (T.rank[0], T.rank[1] + 1), T.degree, f"nabla({T.name})")

    def values(self, x, y):
        return self.N.values(x, y)


def metric_connection(metric) -> NonlinearConnection:
    """The Berwald connection of a metric."""
    return NonlinearConnection(metric.berwald, "metric", metric, name=f"N^L[{metric.name}]")


def _check_parts(Z, A, samples):
    if Z is not None and (Z.rank != (1, 0) or Z.degree != 2):
        raise HomogeneityError("Z must be a 2-homogeneous vector field")
    if A is not None and (A.rank != (0, 1) or A.degree != 0):
        raise HomogeneityError("A must be a 0-homogeneous one-form")
    if samples is not None:
        x, y = samples
        for part, deg in ((Z, 2), (A, 0)):
            if part is None:
                continue
            rep = check_homogeneity(part, deg, x, y, tol=1e-9)
            if not rep.passed:
                raise HomogeneityError(
                    f"{part.name} fails the Euler test for degree {deg} "
                    f"(residual {rep.max:.3e})")


def assemble(base, Z: Field = None, A: Field = None, samples=None, name="") -> NonlinearConnection:
    """N = N^L + dy Z + A (x) y, from a metric or its Berwald connection."""
    _check_parts(Z, A, samples)
    if isinstance(base, NonlinearConnection):
        NL, metric = base, base.metric
    else:
        metric = base
        NL = metric_connection(metric)

    def fn(pt, v, h):
        out = NL.N.taylor(pt, v, h)
        if Z is not None:
            out = out + Z.taylor(pt, v + 1, h).grad_y()
        if A is not None:
            y = pt.fiber(v, h)
            out = out + jets.einsum("...k,...i->...ki", y, A.taylor(pt, v, h))
        return out

    field = ComputedField(fn, (1, 1), 1, NL.N.domain, name or "assembled")
    return NonlinearConnection(field, "assembled", metric, {"Z": Z, "A": A, "base": NL},
                               name=name or "assembled")


def translate(N: NonlinearConnection, A: Field, name="") -> NonlinearConnection:
    """N + A (x) y for any connection."""
    _check_parts(None, A, None)

    def fn(pt, v, h):
        y = pt.fiber(v, h)
        return N.N.taylor(pt, v, h) + jets.einsum("...k,...i->...ki", y, A.taylor(pt, v, h))

    parts = dict(N.parts)
    if N.provenance == "assembled" and parts.get("A") is None:
        parts["A"] = A
    field = ComputedField(fn, (1, 1), 1, N.N.domain, name or f"{N.name}+A")
    prov = "assembled" if N.provenance in ("metric", "assembled") else N.provenance
    if N.provenance == "metric":
        parts = {"Z": None, "A": A, "base": N}
    return NonlinearConnection(field, prov, N.metric, parts, name=name or f"{N.name}+A")


def linear_connection(gamma, n, domain=None, name="linear") -> NonlinearConnection:
    """N_i^k = Gamma^k_{ij}(x) y^j from ``gamma(x) -> nested [k][i][j]``.

    ``gamma`` receives the list of coordinate jets ``x`` and may return jets
    or numbers.
    """

    def fn(xs, ys):
        G = gamma(xs)
        return [[sum(G[k][i][j] * ys[j] for j in range(n)) for i in range(n)]
                for k in range(n)]

    return NonlinearConnection(FunctionField(fn, (1, 1), 1, domain, name), "linear",
                               name=name)


def user_connection(fn, domain=None, name="user") -> NonlinearConnection:
    """Connection from ``fn(x, y) -> nested [k][i]`` of 1-homogeneous jets."""
    return NonlinearConnection(FunctionField(fn, (1, 1), 1, domain, name), "user", name=name)


# operation-style helpers -------------------------------------------------


def torsion(N: NonlinearConnection, x, y):
    return N.torsion.taylor(Point(x, y), 0, 0).value


def curvature_and_ricci(N: NonlinearConnection, x, y):
    pt = Point(x, y)
    return N.curvature.taylor(pt, 0, 0).value, N.ricci.taylor(pt, 0, 0).value


def covariant_derivative(N: NonlinearConnection, T: Field) -> Field:
    return N.covariant(T)


def underlying_spray(N: NonlinearConnection) -> Field:
    return N.spray


def spray_connection(G: Field, name="spray") -> NonlinearConnection:
    """The symmetric connection dy G of a spray."""
    if G.rank != (1, 0) or G.degree != 2:
        raise HomogeneityError("a spray must be a 2-homogeneous vector field")
    field = ComputedField(lambda pt, v, h: G.taylor(pt, v + 1, h).grad_y(), (1, 1), 1,
                          G.domain, name)
    return NonlinearConnection(field, "user", name=name)


def is_symmetric(N: NonlinearConnection, x, y, tol=1e-10):
    return float(np.max(np.abs(torsion(N, x, y)))) <= tol
