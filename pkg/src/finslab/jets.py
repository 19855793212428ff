"""Truncated multivariate Taylor arithmetic in fiber (y) and base (x) variables.

A :class:`Jet` stores the Taylor coefficients of a batch of functions of
``2n`` variables around a point.  Coefficients live in a trailing
``(NY, NX)`` block: the first axis runs over monomials in ``y`` of total
degree ``<= v_ord``, the second over monomials in ``x`` of total degree
``<= h_ord``.  Monomials are graded by degree, so lowering an order is a
slice.  Leading axes are free: the library uses the first one for samples
and the rest for tensor indices.
"""
from __future__ import annotations

import itertools
import math
import os
from contextlib import contextmanager
from functools import lru_cache

import numba
import numpy as np

try:
    from numpy.lib.array_utils import normalize_axis_tuple
except ImportError:  # numpy < 2
    from numpy.core.numeric import normalize_axis_tuple

__all__ = [
    "Jet",
    "JetEvaluationError",
    "BudgetError",
    "order_budget",
    "budget",
    "monomials",
    "variables",
    "einsum",
    "stack",
    "sqrt",
    "exp",
    "log",
    "sin",
    "cos",
    "power",
    "absolute",
]


class JetEvaluationError(ArithmeticError):
    """Non-finite Taylor coefficient produced during evaluation."""

    def __init__(self, message, sample=None, y_index=None, x_index=None):
        super().__init__(message)
        self.sample = sample
        self.y_index = y_index
        self.x_index = x_index


class BudgetError(ValueError):
    """Requested derivative order exceeds the configured budget."""


_BUDGET = [6, 2]


def budget():
    """Current (v_ord, h_ord) ceiling for Taylor expansions."""
    return tuple(_BUDGET)


@contextmanager
def order_budget(v_ord, h_ord):
    """Temporarily change the order ceiling."""
    old = list(_BUDGET)
    _BUDGET[:] = [int(v_ord), int(h_ord)]
    try:
        yield
    finally:
        _BUDGET[:] = old


def check_budget(v_ord, h_ord):
    if v_ord < 0 or h_ord < 0:
        raise BudgetError(f"order budget exhausted (v_ord={v_ord}, h_ord={h_ord})")
    if v_ord > _BUDGET[0] or h_ord > _BUDGET[1]:
        raise BudgetError(
            f"requested orders (v_ord={v_ord}, h_ord={h_ord}) exceed the budget "
            f"(v_ord<={_BUDGET[0]}, h_ord<={_BUDGET[1]})"
        )


# --------------------------------------------------------------------------
# monomial tables


@lru_cache(maxsize=None)
def monomials(n, degree):
    """Exponent vectors in ``n`` variables of total degree <= ``degree``, graded."""
    out = []
    for d in range(degree + 1):
        # reverse lexicographic order inside each degree
        for combo in itertools.combinations_with_replacement(range(n), d):
            e = [0] * n
            for c in combo:
                e[c] += 1
            out.append(tuple(e))
    arr = np.array(out, dtype=np.int64).reshape(len(out), n)
    arr.setflags(write=False)
    return arr


@lru_cache(maxsize=None)
def _index(n, degree):
    return {tuple(e): i for i, e in enumerate(monomials(n, degree))}


def size(n, degree):
    return math.comb(n + degree, degree)


@lru_cache(maxsize=None)
def _pairs(n, degree):
    """All (i, j, k) with mono[i] + mono[j] = mono[k], degree <= ``degree``."""
    mono = monomials(n, degree)
    idx = _index(n, degree)
    deg = mono.sum(axis=1)
    rows = []
    for i, a in enumerate(mono):
        for j in range(len(mono)):
            if deg[i] + deg[j] > degree:
                break
            k = idx[tuple(a + mono[j])]
            rows.append((i, j, k))
    arr = np.array(rows, dtype=np.int64).reshape(len(rows), 3)
    arr.setflags(write=False)
    return arr


@lru_cache(maxsize=None)
def _shift(n, degree, var):
    """Index map and factors for d/d(var) from degree to degree - 1."""
    src_idx = _index(n, degree)
    target = monomials(n, degree - 1)
    src = np.empty(len(target), dtype=np.int64)
    fac = np.empty(len(target))
    for t, e in enumerate(target):
        e2 = list(e)
        e2[var] += 1
        src[t] = src_idx[tuple(e2)]
        fac[t] = e2[var]
    return src, fac


@lru_cache(maxsize=None)
def _factorials(n, degree):
    mono = monomials(n, degree)
    f = np.array([math.prod(math.factorial(int(k)) for k in e) for e in mono], dtype=float)
    return f


@numba.njit(cache=True)
def _mul_serial(a, b, py, px, out):  # pragma: no cover - compiled
    nq = px.shape[0]
    for s in range(a.shape[0]):
        A = a[s]
        B = b[s]
        O = out[s]
        for p in range(py.shape[0]):
            ra = A[py[p, 0]]
            rb = B[py[p, 1]]
            ro = O[py[p, 2]]
            for q in range(nq):
                ro[px[q, 2]] += ra[px[q, 0]] * rb[px[q, 1]]


@numba.njit(cache=True, parallel=True)
def _mul_parallel(a, b, py, px, out):  # pragma: no cover - compiled
    nq = px.shape[0]
    for s in numba.prange(a.shape[0]):
        for p in range(py.shape[0]):
            iy = py[p, 0]
            jy = py[p, 1]
            ky = py[p, 2]
            for q in range(nq):
                out[s, ky, px[q, 2]] += a[s, iy, px[q, 0]] * b[s, jy, px[q, 1]]


def _select_kernel():
    """Serial product kernel unless FINSLAB_THREADS asks for more threads."""
    env = os.environ.get("FINSLAB_THREADS", "")
    try:
        threads = int(env) if env else 1
    except ValueError:
        threads = 1
    if threads > 1:
        numba.config.THREADING_LAYER = "workqueue"
        numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))
        return _mul_parallel
    return _mul_serial


_mul_kernel = _select_kernel()


# --------------------------------------------------------------------------


class Jet:
    """Batch of truncated Taylor expansions sharing a base point layout.

    ``coef[..., iy, ix]`` is the coefficient of ``dy**my[iy] * dx**mx[ix]``,
    i.e. the partial derivative divided by the multi-index factorial.
    """

    __slots__ = ("coef", "n", "v_ord", "h_ord")
    __array_ufunc__ = None

    def __init__(self, coef, n, v_ord, h_ord):
        self.coef = coef
        self.n = n
        self.v_ord = v_ord
        self.h_ord = h_ord

    # construction -----------------------------------------------------
    @classmethod
    def constant(cls, value, n, v_ord=0, h_ord=0):
        value = np.asarray(value, dtype=float)
        coef = np.zeros(value.shape + (size(n, v_ord), size(n, h_ord)))
        coef[..., 0, 0] = value
        return cls(coef, n, v_ord, h_ord)

    @property
    def shape(self):
        return self.coef.shape[:-2]

    @property
    def ndim(self):
        return self.coef.ndim - 2

    @property
    def value(self):
        return self.coef[..., 0, 0]

    def __repr__(self):
        return f"Jet(shape={self.shape}, n={self.n}, v_ord={self.v_ord}, h_ord={self.h_ord})"

    def copy(self):
        return Jet(self.coef.copy(), self.n, self.v_ord, self.h_ord)

    def restrict(self, v_ord, h_ord):
        if v_ord > self.v_ord or h_ord > self.h_ord:
            raise BudgetError(
                f"cannot raise jet orders ({self.v_ord},{self.h_ord}) -> ({v_ord},{h_ord})"
            )
        if v_ord == self.v_ord and h_ord == self.h_ord:
            return self
        ny, nx = size(self.n, v_ord), size(self.n, h_ord)
        return Jet(self.coef[..., :ny, :nx], self.n, v_ord, h_ord)

    def partial(self, y_exp=None, x_exp=None):
        """Partial derivative values for the given exponent vectors."""
        y_exp = tuple(y_exp) if y_exp is not None else (0,) * self.n
        x_exp = tuple(x_exp) if x_exp is not None else (0,) * self.n
        if sum(y_exp) > self.v_ord or sum(x_exp) > self.h_ord:
            raise BudgetError(f"partial {y_exp},{x_exp} beyond stored orders")
        iy = _index(self.n, self.v_ord)[y_exp]
        ix = _index(self.n, self.h_ord)[x_exp]
        scale = _factorials(self.n, self.v_ord)[iy] * _factorials(self.n, self.h_ord)[ix]
        return self.coef[..., iy, ix] * scale

    # tensor plumbing --------------------------------------------------
    def __getitem__(self, key):
        if not isinstance(key, tuple):
            key = (key,)
        moved = np.moveaxis(self.coef, (-2, -1), (0, 1))
        sub = moved[(slice(None), slice(None)) + key]
        return Jet(np.moveaxis(sub, (0, 1), (-2, -1)), self.n, self.v_ord, self.h_ord)

    def __len__(self):
        return self.shape[0]

    def __iter__(self):
        for i in range(self.shape[0]):
            yield self[i]

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return Jet(self.coef.reshape(tuple(shape) + self.coef.shape[-2:]), self.n,
                   self.v_ord, self.h_ord)

    def moveaxis(self, src, dst):
        nd = self.ndim
        src = normalize_axis_tuple(src, nd)
        dst = normalize_axis_tuple(dst, nd)
        return Jet(np.moveaxis(self.coef, src, dst), self.n, self.v_ord, self.h_ord)

    def swapaxes(self, a, b):
        nd = self.ndim
        a, b = a % nd, b % nd
        return Jet(np.swapaxes(self.coef, a, b), self.n, self.v_ord, self.h_ord)

    def sum(self, axis=None):
        nd = self.ndim
        if axis is None:
            axis = tuple(range(nd))
        axis = normalize_axis_tuple(axis, nd)
        return Jet(self.coef.sum(axis=axis), self.n, self.v_ord, self.h_ord)

    def diagonal(self, a, b):
        nd = self.ndim
        d = np.diagonal(self.coef, axis1=a % nd, axis2=b % nd)
        # numpy appends the diagonal axis last; put it back before the block
        return Jet(np.moveaxis(d, -1, -3), self.n, self.v_ord, self.h_ord)

    def broadcast_to(self, shape):
        shape = tuple(shape)
        return Jet(np.broadcast_to(self.coef, shape + self.coef.shape[-2:]), self.n,
                   self.v_ord, self.h_ord)

    def expand_dims(self, axis):
        nd = self.ndim + 1
        axis = normalize_axis_tuple(axis, nd)
        coef = self.coef
        for a in sorted(axis):
            coef = np.expand_dims(coef, a)
        return Jet(coef, self.n, self.v_ord, self.h_ord)

    # differentiation --------------------------------------------------
    def dy(self, i):
        """Vertical partial derivative with respect to y^i."""
        if self.v_ord < 1:
            raise BudgetError("vertical order budget exhausted")
        src, fac = _shift(self.n, self.v_ord, i)
        nx = self.coef.shape[-1]
        coef = self.coef[..., src, :] * fac[:, None]
        return Jet(coef.reshape(self.shape + (len(src), nx)), self.n, self.v_ord - 1,
                   self.h_ord)

    def dx(self, i):
        """Base partial derivative with respect to x^i."""
        if self.h_ord < 1:
            raise BudgetError("base order budget exhausted")
        src, fac = _shift(self.n, self.h_ord, i)
        coef = self.coef[..., src] * fac
        return Jet(coef, self.n, self.v_ord, self.h_ord - 1)

    def grad_y(self):
        """Stack of vertical derivatives along a new trailing index."""
        return stack([self.dy(i) for i in range(self.n)], axis=-1)

    def grad_x(self):
        return stack([self.dx(i) for i in range(self.n)], axis=-1)

    # arithmetic -------------------------------------------------------
    def _coerce(self, other):
        if isinstance(other, Jet):
            if other.n != self.n:
                raise ValueError("jets over different dimensions")
            return other
        return None

    def __neg__(self):
        return Jet(-self.coef, self.n, self.v_ord, self.h_ord)

    def __pos__(self):
        return self

    def __add__(self, other):
        o = self._coerce(other)
        if o is None:
            other = np.asarray(other, dtype=float)
            shape = np.broadcast_shapes(self.shape, other.shape)
            coef = np.array(np.broadcast_to(self.coef, shape + self.coef.shape[-2:]))
            coef[..., 0, 0] += other
            return Jet(coef, self.n, self.v_ord, self.h_ord)
        v, h = min(self.v_ord, o.v_ord), min(self.h_ord, o.h_ord)
        a, b = self.restrict(v, h), o.restrict(v, h)
        return Jet(a.coef + b.coef, self.n, v, h)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        o = self._coerce(other)
        if o is None:
            other = np.asarray(other, dtype=float)
            return Jet(self.coef * other[..., None, None], self.n, self.v_ord, self.h_ord)
        return _multiply(self, o)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._coerce(other)
        if o is None:
            other = np.asarray(other, dtype=float)
            return Jet(self.coef / other[..., None, None], self.n, self.v_ord, self.h_ord)
        return _multiply(self, reciprocal(o))

    def __rtruediv__(self, other):
        return reciprocal(self) * other

    def __pow__(self, p):
        if isinstance(p, (int, np.integer)) and p >= 0:
            return _int_power(self, int(p))
        return power(self, p)


@lru_cache(maxsize=None)
def _diag_pairs(n, degree, left):
    """Pair table for a factor that only has the constant monomial on one side."""
    k = np.arange(size(n, degree), dtype=np.int64)
    z = np.zeros_like(k)
    arr = np.stack([z, k, k] if left else [k, z, k], axis=1)
    arr.setflags(write=False)
    return arr


def _free_of(coef, axis):
    """True when a coefficient block has no terms beyond degree 0 along ``axis``."""
    if coef.shape[axis] == 1:
        return True
    block = coef[..., 1:, :] if axis == -2 else coef[..., :, 1:]
    return not block.any()


def _multiply(a, b):
    v, h = min(a.v_ord, b.v_ord), min(a.h_ord, b.h_ord)
    a, b = a.restrict(v, h), b.restrict(v, h)
    n = a.n
    shape = np.broadcast_shapes(a.shape, b.shape)
    ny, nx = size(n, v), size(n, h)
    if v == 0 and h == 0:
        return Jet(a.coef * b.coef, n, 0, 0)
    # cheap tables when one factor does not depend on y (or on x)
    if _free_of(a.coef, -2):
        py = _diag_pairs(n, v, True)
    elif _free_of(b.coef, -2):
        py = _diag_pairs(n, v, False)
    else:
        py = _pairs(n, v)
    if _free_of(a.coef, -1):
        px = _diag_pairs(n, h, True)
    elif _free_of(b.coef, -1):
        px = _diag_pairs(n, h, False)
    else:
        px = _pairs(n, h)
    A = np.ascontiguousarray(np.broadcast_to(a.coef, shape + (ny, nx))).reshape(-1, ny, nx)
    B = np.ascontiguousarray(np.broadcast_to(b.coef, shape + (ny, nx))).reshape(-1, ny, nx)
    out = np.zeros_like(A)
    _mul_kernel(A, B, py, px, out)
    return Jet(out.reshape(shape + (ny, nx)), n, v, h)


def _int_power(u, p):
    result = None
    base = u
    while p:
        if p & 1:
            result = base if result is None else result * base
        p >>= 1
        if p:
            base = base * base
    if result is None:
        return Jet.constant(np.ones(u.shape), u.n, u.v_ord, u.h_ord)
    return result


# --------------------------------------------------------------------------
# composition with univariate functions


def _check_finite(jet, what):
    bad = ~np.isfinite(jet.coef)
    if bad.any():
        loc = np.argwhere(bad)[0]
        iy, ix = int(loc[-2]), int(loc[-1])
        my = tuple(int(k) for k in monomials(jet.n, jet.v_ord)[iy])
        mx = tuple(int(k) for k in monomials(jet.n, jet.h_ord)[ix])
        sample = tuple(int(k) for k in loc[:-2])
        raise JetEvaluationError(
            f"non-finite coefficient in {what} at batch index {sample}, "
            f"multi-index y{my} x{mx}",
            sample=sample, y_index=my, x_index=mx,
        )
    return jet


def _compose(u, taylor_coeffs, what):
    """f(u) given ``taylor_coeffs[..., k] = f^(k)(u0) / k!`` for k <= v_ord + h_ord."""
    K = u.v_ord + u.h_ord
    c = taylor_coeffs
    if not np.all(np.isfinite(c[..., 0])):
        bad = np.argwhere(~np.isfinite(c[..., 0]))[0]
        raise JetEvaluationError(
            f"{what} undefined at value {u.value[tuple(bad)]!r} (batch index {tuple(bad)}),"
            f" multi-index y{(0,) * u.n} x{(0,) * u.n}",
            sample=tuple(int(k) for k in bad), y_index=(0,) * u.n, x_index=(0,) * u.n,
        )
    delta = u.copy()
    delta.coef[..., 0, 0] = 0.0
    result = Jet.constant(c[..., K], u.n, u.v_ord, u.h_ord)
    for k in range(K - 1, -1, -1):
        result = result * delta
        result.coef[..., 0, 0] += c[..., k]
    return _check_finite(result, what)


def _orders(u):
    return np.arange(u.v_ord + u.h_ord + 1)


def reciprocal(u):
    u0 = u.value[..., None]
    k = _orders(u)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = (-1.0) ** k / u0 ** (k + 1)
    return _compose(u, c, "reciprocal")


def power(u, p):
    """u**p for real p (u > 0 unless p is an integer)."""
    if not isinstance(u, Jet):
        return np.power(u, p)
    if float(p).is_integer() and p >= 0:
        return _int_power(u, int(p))
    u0 = u.value[..., None]
    k = _orders(u)
    binom = np.array([_gen_binom(p, int(j)) for j in k])
    with np.errstate(divide="ignore", invalid="ignore"):
        if float(p).is_integer():
            c = binom * u0 ** (p - k)
        else:
            c = np.where(u0 > 0, binom * np.abs(u0) ** (p - k), np.nan)
    return _compose(u, c, f"power {p}")


def _gen_binom(p, k):
    out = 1.0
    for j in range(k):
        out *= (p - j) / (j + 1)
    return out


def sqrt(u):
    if not isinstance(u, Jet):
        return np.sqrt(u)
    return power(u, 0.5)


def exp(u):
    if not isinstance(u, Jet):
        return np.exp(u)
    k = _orders(u)
    fact = np.array([math.factorial(int(j)) for j in k], dtype=float)
    c = np.exp(u.value)[..., None] / fact
    return _compose(u, c, "exp")


def log(u):
    if not isinstance(u, Jet):
        return np.log(u)
    u0 = u.value[..., None]
    k = _orders(u)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.where(k == 0, np.log(np.where(u0 > 0, u0, np.nan)),
                     (-1.0) ** (k + 1) / (np.maximum(k, 1) * u0 ** k))
    return _compose(u, c, "log")


def sin(u):
    if not isinstance(u, Jet):
        return np.sin(u)
    k = _orders(u)
    fact = np.array([math.factorial(int(j)) for j in k], dtype=float)
    c = np.sin(u.value[..., None] + k * np.pi / 2) / fact
    return _compose(u, c, "sin")


def cos(u):
    if not isinstance(u, Jet):
        return np.cos(u)
    k = _orders(u)
    fact = np.array([math.factorial(int(j)) for j in k], dtype=float)
    c = np.cos(u.value[..., None] + k * np.pi / 2) / fact
    return _compose(u, c, "cos")


def absolute(u):
    """|u| for u bounded away from zero."""
    if not isinstance(u, Jet):
        return np.abs(u)
    sign = np.sign(u.value)
    if np.any(sign == 0):
        raise JetEvaluationError("absolute value at zero is not smooth")
    return u * sign


# --------------------------------------------------------------------------
# array helpers


def stack(items, axis=0):
    """Stack jets (or numbers) into a jet with a new axis."""
    jets = [it for it in items if isinstance(it, Jet)]
    if not jets:
        raise ValueError("stack needs at least one Jet")
    n = jets[0].n
    v = min(j.v_ord for j in jets)
    h = min(j.h_ord for j in jets)
    shape = np.broadcast_shapes(*[j.shape for j in jets],
                                *[np.shape(it) for it in items if not isinstance(it, Jet)])
    parts = []
    for it in items:
        if isinstance(it, Jet):
            j = it.restrict(v, h)
        else:
            j = Jet.constant(np.broadcast_to(np.asarray(it, dtype=float), shape), n, v, h)
        parts.append(np.broadcast_to(j.coef, shape + j.coef.shape[-2:]))
    nd = len(shape) + 1
    ax = axis % nd
    return Jet(np.stack(parts, axis=ax), n, v, h)


def variables(x, y, v_ord, h_ord):
    """Coordinate jets for base points ``x`` and directions ``y`` of shape (..., n).

    Returns two lists of scalar jets: ``xs[i]`` is x^i and ``ys[i]`` is y^i.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.shape[-1]
    xs, ys = [], []
    ny, nx = size(n, v_ord), size(n, h_ord)
    for i in range(n):
        c = np.zeros(x.shape[:-1] + (ny, nx))
        c[..., 0, 0] = x[..., i]
        if h_ord >= 1:
            c[..., 0, 1 + i] = 1.0
        xs.append(Jet(c, n, v_ord, h_ord))
        c = np.zeros(y.shape[:-1] + (ny, nx))
        c[..., 0, 0] = y[..., i]
        if v_ord >= 1:
            c[..., 1 + i, 0] = 1.0
        ys.append(Jet(c, n, v_ord, h_ord))
    return xs, ys


def einsum(subscripts, *operands):
    """Einstein summation over jets and plain arrays.

    Subscripts follow numpy conventions and must be explicit (``->``).
    A leading ``...`` stands for broadcast batch axes.
    """
    ins, out = subscripts.replace(" ", "").split("->")
    ins = ins.split(",")
    if len(ins) != len(operands):
        raise ValueError("operand count does not match subscripts")
    terms = list(zip(ins, operands))
    while len(terms) > 1:
        (sa, a), (sb, b) = terms[0], terms[1]
        later = "".join(s for s, _ in terms[2:]) + out
        keep = "".join(dict.fromkeys(
            c for c in (sa + sb).replace(".", "") if c in later))
        ell = "..." if ("..." in sa or "..." in sb) else ""
        res = _einsum2(sa, a, sb, b, ell + keep)
        terms = [(ell + keep, res)] + terms[2:]
    s, a = terms[0]
    return _einsum1(s, a, out)


def _einsum1(s, a, out):
    if s == out:
        return a
    if not isinstance(a, Jet):
        return np.einsum(f"{s}->{out}", a)
    return Jet(np.einsum(f"{s}YX->{out}YX", a.coef), a.n, a.v_ord, a.h_ord)


def _einsum2(sa, a, sb, b, out):
    ja, jb = isinstance(a, Jet), isinstance(b, Jet)
    if not ja and not jb:
        return np.einsum(f"{sa},{sb}->{out}", a, b)
    if not (ja and jb):
        # linear in the jet operand: contract coefficient blocks directly
        if ja:
            return Jet(np.einsum(f"{sa}YX,{sb}->{out}YX", a.coef, b), a.n, a.v_ord, a.h_ord)
        return Jet(np.einsum(f"{sa},{sb}YX->{out}YX", a, b.coef), b.n, b.v_ord, b.h_ord)
    la, lb, lo = sa.replace("...", ""), sb.replace("...", ""), out.replace("...", "")
    letters = lo + "".join(dict.fromkeys(c for c in la + lb if c not in lo))
    sizes = {}
    for s, j in ((la, a), (lb, b)):
        tshape = j.shape[j.ndim - len(s):]
        for c, k in zip(s, tshape):
            sizes.setdefault(c, k)
    ea = _align(la, a, letters)
    eb = _align(lb, b, letters)
    prod = ea * eb
    nsum = len(letters) - len(lo)
    if nsum:
        prod = prod.sum(axis=tuple(range(prod.ndim - nsum, prod.ndim)))
    return prod


def _align(s, j, letters):
    """Permute/insert axes of jet ``j`` (tensor letters ``s``) to ``letters`` order."""
    nb = j.ndim - len(s)
    order = [s.index(c) for c in letters if c in s]
    perm = list(range(nb)) + [nb + k for k in order]
    coef = np.transpose(j.coef, perm + [j.ndim, j.ndim + 1])
    shape = list(coef.shape[:nb])
    it = iter(coef.shape[nb:j.ndim])
    for c in letters:
        shape.append(next(it) if c in s else 1)
    return Jet(coef.reshape(tuple(shape) + coef.shape[-2:]), j.n, j.v_ord, j.h_ord)


def inverse(m):
    """Inverse of a batch of square jet matrices (last two axes).

    The constant term is inverted with LU; higher orders follow from the
    Neumann series of ``(I + m0^{-1} dm)^{-1}``.
    """
    m0 = m.value
    inv0 = np.linalg.inv(m0)
    n = m0.shape[-1]
    if m.v_ord == 0 and m.h_ord == 0:
        return Jet.constant(inv0, m.n, 0, 0)
    dm = m.copy()
    dm.coef[..., 0, 0] = 0.0
    step = -einsum("...ia,...ab->...ib", inv0, dm)
    eye = np.eye(n)
    acc = None
    for _ in range(m.v_ord + m.h_ord):
        acc = step + eye if acc is None else einsum("...ia,...ab->...ib", step, acc) + eye
    return einsum("...ia,...ab->...ib", acc, inv0)


def trace(jet, a, b):
    """Sum over the diagonal of tensor axes ``a`` and ``b``."""
    return jet.diagonal(a, b).sum(axis=-1)
