"""Anisotropic tensor fields evaluated through Taylor expansions.

A field knows how to produce its Taylor expansion at a batch of points to
given vertical and base orders.  Derived fields ask their inputs for higher
orders and differentiate; a per-batch cache keeps repeated requests cheap.

Tensor components are laid out with contravariant indices first and
covariant ones after, so ``N[k, i]`` stores ``N_i^k``.  Vertical and base
differentials append a covariant index at the end.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from . import jets
from .jets import Jet, check_budget
from .reports import ResidualReport

__all__ = [
    "Point",
    "Field",
    "FunctionField",
    "ComputedField",
    "ConicDomain",
    "DomainError",
    "canonical_field",
    "constant_field",
    "vertical_differential",
    "base_differential",
    "field_einsum",
    "lift_to_jet",
    "check_homogeneity",
    "as_tensor",
]


class DomainError(ValueError):
    """Sample point outside the conic domain of a field."""


class Point:
    """A batch of base points ``x`` and fiber directions ``y`` (shape (S, n))."""

    def __init__(self, x, y):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.atleast_2d(np.asarray(y, dtype=float))
        if x.shape != y.shape:
            raise ValueError(f"x and y shapes differ: {x.shape} vs {y.shape}")
        if x.shape[1] < 2:
            raise ValueError("dimension n must be at least 2")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("non-finite coordinates")
        if np.any(np.all(y == 0, axis=1)):
            raise DomainError("zero fiber direction")
        self.x = x
        self.y = y
        self.cache = {}

    @property
    def n(self):
        return self.x.shape[1]

    @property
    def size(self):
        return self.x.shape[0]

    def coordinates(self, v_ord, h_ord):
        key = ("coords", v_ord, h_ord)
        if key not in self.cache:
            self.cache[key] = jets.variables(self.x, self.y, v_ord, h_ord)
        return self.cache[key]

    def fiber(self, v_ord, h_ord):
        """The canonical field y^i as a (S, n) jet."""
        return jets.stack(self.coordinates(v_ord, h_ord)[1], axis=-1)


def as_tensor(obj, pt, v_ord, h_ord, rank_total):
    """Convert nested lists of jets/numbers to a jet of shape (S,) + (n,)*rank."""
    n = pt.n
    if isinstance(obj, Jet):
        jet = obj
    elif isinstance(obj, (list, tuple)):
        parts = [as_tensor(o, pt, v_ord, h_ord, rank_total - 1) for o in obj]
        jet = jets.stack(parts, axis=-1 - (rank_total - 1)) if rank_total else parts[0]
    else:
        jet = Jet.constant(np.broadcast_to(np.asarray(obj, dtype=float), (pt.size,)),
                           n, v_ord, h_ord)
    want = (pt.size,) + (n,) * rank_total
    if jet.shape != want:
        jet = jet.broadcast_to(want)
    return jet


def _degree(alpha):
    return Fraction(alpha).limit_denominator(1000)


class Field:
    """Base class: an (r, s) tensor field of positive homogeneity ``degree``."""

    def __init__(self, rank=(0, 0), degree=0, domain=None, name=""):
        self.rank = (int(rank[0]), int(rank[1]))
        self.degree = _degree(degree)
        self.domain = domain
        self.name = name or type(self).__name__

    def __repr__(self):
        return f"<{type(self).__name__} {self.name} rank={self.rank} degree={self.degree}>"

    @property
    def order(self):
        return self.rank[0] + self.rank[1]

    def taylor(self, pt: Point, v_ord: int, h_ord: int) -> Jet:
        if v_ord < 0 or h_ord < 0:
            raise jets.BudgetError(f"order budget exhausted in {self.name}")
        entries = pt.cache.setdefault(self, [])
        for jet in entries:
            if jet.v_ord >= v_ord and jet.h_ord >= h_ord:
                return jet.restrict(v_ord, h_ord)
        jet = self._taylor(pt, v_ord, h_ord)
        want = (pt.size,) + (pt.n,) * self.order
        if jet.shape != want:
            jet = jet.broadcast_to(want)
        if jet.v_ord != v_ord or jet.h_ord != h_ord:
            jet = jet.restrict(v_ord, h_ord)
        entries.append(jet)
        return jet

    def _taylor(self, pt, v_ord, h_ord):  # pragma: no cover - abstract
        raise NotImplementedError

    def values(self, x, y):
        """Component values at points (arrays of shape (S, n) or (n,))."""
        single = np.ndim(x) == 1
        out = self.taylor(Point(x, y), 0, 0).value
        return out[0] if single else out

    __call__ = values

    # algebra ----------------------------------------------------------
    def _binary(self, other, op, name, degree):
        if isinstance(other, Field):
            a, b = self, other
            ra, rb = a.order, b.order
            if ra and rb and a.rank != b.rank:
                raise ValueError("elementwise combination of different ranks")
            rank = a.rank if ra >= rb else b.rank

            def fn(pt, v, h):
                ja, jb = a.taylor(pt, v, h), b.taylor(pt, v, h)
                return op(_pad(ja, rb - ra), _pad(jb, ra - rb))

            return ComputedField(fn, rank, degree, self.domain or other.domain, name)
        c = other

        def fn(pt, v, h):
            return op(self.taylor(pt, v, h), c)

        return ComputedField(fn, self.rank, degree, self.domain, name)

    def __add__(self, other):
        if isinstance(other, Field) and other.degree != self.degree:
            raise ValueError("sum of fields with different homogeneity")
        return self._binary(other, lambda a, b: a + b, f"({self.name}+)", self.degree)

    def __sub__(self, other):
        if isinstance(other, Field) and other.degree != self.degree:
            raise ValueError("difference of fields with different homogeneity")
        return self._binary(other, lambda a, b: a - b, f"({self.name}-)", self.degree)

    def __mul__(self, other):
        deg = self.degree + (other.degree if isinstance(other, Field) else 0)
        return self._binary(other, lambda a, b: a * b, f"({self.name}*)", deg)

    __rmul__ = __mul__

    def __truediv__(self, other):
        deg = self.degree - (other.degree if isinstance(other, Field) else 0)
        return self._binary(other, lambda a, b: a / b, f"({self.name}/)", deg)

    def __neg__(self):
        return self * -1.0


def _pad(jet, extra):
    """Append singleton tensor axes so a scalar broadcasts against a tensor."""
    if extra <= 0 or not isinstance(jet, Jet):
        return jet
    return jet.reshape(jet.shape + (1,) * extra)


class FunctionField(Field):
    """Field given by a function of coordinate jets.

    ``fn(x, y)`` receives two lists of scalar jets (``x[i]``, ``y[i]``) and
    returns a jet, a number, or nested lists of those matching the rank.
    """

    def __init__(self, fn: Callable, rank=(0, 0), degree=0, domain=None, name=""):
        super().__init__(rank, degree, domain, name or getattr(fn, "__name__", "function"))
        self.fn = fn

    def _taylor(self, pt, v_ord, h_ord):
        check_budget(v_ord, h_ord)
        xs, ys = pt.coordinates(v_ord, h_ord)
        out = self.fn(xs, ys)
        return as_tensor(out, pt, v_ord, h_ord, self.order)

    def numeric(self, x, y):
        """Evaluate ``fn`` on plain float arrays, without the jet engine."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.atleast_2d(np.asarray(y, dtype=float))
        out = self.fn(list(x.T), list(y.T))

        def conv(obj):
            if isinstance(obj, (list, tuple)):
                return np.stack([conv(o) for o in obj], axis=-1)
            return np.broadcast_to(np.asarray(obj, dtype=float), (len(x),))

        arr = conv(out)
        # nested lists stack innermost-last; restore the declared index order
        if arr.ndim > 2:
            arr = np.moveaxis(arr, list(range(1, arr.ndim)), list(range(arr.ndim - 1, 0, -1)))
        return arr


class ComputedField(Field):
    """Field defined by ``fn(point, v_ord, h_ord) -> Jet``."""

    def __init__(self, fn, rank=(0, 0), degree=0, domain=None, name="computed"):
        super().__init__(rank, degree, domain, name)
        self.fn = fn

    def _taylor(self, pt, v_ord, h_ord):
        return self.fn(pt, v_ord, h_ord)


def canonical_field(domain=None):
    """The field with components y^i."""
    return ComputedField(lambda pt, v, h: pt.fiber(v, h), (1, 0), 1, domain, "canonical")


def constant_field(value, rank=(0, 0), degree=0, domain=None, name="constant"):
    value = np.asarray(value, dtype=float)

    def fn(pt, v, h):
        return Jet.constant(np.broadcast_to(value, (pt.size,) + value.shape), pt.n, v, h)

    return ComputedField(fn, rank, degree, domain, name)


def vertical_differential(T: Field) -> Field:
    """Field of vertical derivatives, with the new covariant index last."""

    def fn(pt, v, h):
        return T.taylor(pt, v + 1, h).grad_y()

    return ComputedField(fn, (T.rank[0], T.rank[1] + 1), T.degree - 1, T.domain,
                         f"dy({T.name})")


def base_differential(T: Field) -> Field:
    """Chart partial derivatives in x (not a tensor; used in formulas)."""

    def fn(pt, v, h):
        return T.taylor(pt, v, h + 1).grad_x()

    return ComputedField(fn, (T.rank[0], T.rank[1] + 1), T.degree, T.domain,
                         f"dx({T.name})")


def field_einsum(subscripts, *fields, rank, degree=None, name="einsum"):
    """Contraction of fields; subscripts omit the sample axis."""
    terms, out = subscripts.split("->")
    subs = ",".join("..." + t for t in terms.split(",")) + "->..." + out
    if degree is None:
        degree = sum((f.degree for f in fields if isinstance(f, Field)), Fraction(0))
    domain = next((f.domain for f in fields if isinstance(f, Field) and f.domain), None)

    def fn(pt, v, h):
        ops = [f.taylor(pt, v, h) if isinstance(f, Field) else f for f in fields]
        return jets.einsum(subs, *ops)

    return ComputedField(fn, rank, degree, domain, name)


@dataclass(frozen=True)
class ConicDomain:
    """Conic subset of the slit tangent bundle.

    ``contains(x, y)`` is a vectorized membership test, ``boundary(x, y)``
    a function vanishing on the boundary (``None`` when there is none) and
    ``fiber_connected`` records whether fibers are known to be connected.
    """

    name: str
    contains: Callable
    boundary: Optional[Callable] = None
    fiber_connected: Optional[bool] = True
    interior_direction: Optional[Callable] = None

    def check(self, x, y):
        ok = np.asarray(self.contains(np.atleast_2d(x), np.atleast_2d(y)), dtype=bool)
        if not np.all(ok):
            bad = int(np.flatnonzero(~ok)[0])
            raise DomainError(
                f"point {np.atleast_2d(x)[bad].tolist()} / {np.atleast_2d(y)[bad].tolist()}"
                f" outside domain {self.name}")
        return True


def slit_domain():
    """The whole slit tangent bundle TM minus the zero section."""
    return ConicDomain("slit", lambda x, y: np.any(np.asarray(y) != 0, axis=-1), None, True)


def lift_to_jet(f: Field, p, v, v_ord, h_ord) -> Jet:
    """Taylor expansion of a scalar field at one point (a jet of shape ())."""
    if f.order:
        raise ValueError("lift_to_jet expects a scalar field")
    check_budget(v_ord, h_ord)
    if f.domain is not None:
        f.domain.check(p, v)
    pt = Point(p, v)
    return f.taylor(pt, v_ord, h_ord)[0]


def check_homogeneity(T: Field, alpha, x, y, tol=1e-9, name=None) -> ResidualReport:
    """Euler test: sup norm of y^b T_{.b} - alpha T over the samples."""
    pt = Point(x, y)
    jet = T.taylor(pt, 1, 0)
    val = jet.value.reshape(pt.size, -1)
    grad = jet.grad_y().value.reshape(pt.size, -1, pt.n)
    euler = np.einsum("skb,sb->sk", grad, pt.y)
    resid = np.max(np.abs(euler - float(alpha) * val), axis=1)
    return ResidualReport.from_samples(name or f"homogeneity[{T.name}]", pt.x, pt.y,
                                       resid, tol)
