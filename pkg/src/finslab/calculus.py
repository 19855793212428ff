"""Horizontal calculus of a homogeneous nonlinear connection on jets.

All functions take a connection field ``N`` (components ``N[k, i] = N_i^k``)
and return Taylor expansions at the requested orders.
"""
from __future__ import annotations

from . import jets

_LETTERS = "bcdefghmpqrstuvw"


def christoffel(N, pt, v_ord, h_ord):
    """Gam[k, i, j] = d N_i^k / d y^j."""
    return N.taylor(pt, v_ord + 1, h_ord).grad_y()


def horizontal(N, T, pt, v_ord, h_ord):
    """delta_j T = d_j T - N_j^a dy_a T, with j appended as the last index."""
    full = T.taylor(pt, v_ord + 1, h_ord + 1)
    dx = full.restrict(v_ord, h_ord + 1).grad_x()
    dy = full.restrict(v_ord + 1, h_ord).grad_y()
    conn = N.taylor(pt, v_ord, h_ord)
    idx = _LETTERS[: T.order]
    return dx - jets.einsum(f"...{idx}a,...aj->...{idx}j", dy, conn)


def covariant(N, T, pt, v_ord, h_ord):
    """Covariant derivative of T along the connection with Gam = dy N."""
    out = horizontal(N, T, pt, v_ord, h_ord)
    if T.order == 0:
        return out
    gam = christoffel(N, pt, v_ord, h_ord)
    tv = T.taylor(pt, v_ord, h_ord)
    r, s = T.rank
    idx = _LETTERS[: T.order]
    for mu in range(r + s):
        swapped = idx[:mu] + "z" + idx[mu + 1:]
        if mu < r:
            term = jets.einsum(f"...{idx[mu]}jz,...{swapped}->...{idx}j", gam, tv)
            out = out + term
        else:
            term = jets.einsum(f"...zj{idx[mu]},...{swapped}->...{idx}j", gam, tv)
            out = out - term
    return out


def torsion(N, pt, v_ord, h_ord):
    """Tor[k, i, j] = N_{i.j}^k - N_{j.i}^k."""
    gam = christoffel(N, pt, v_ord, h_ord)
    return gam - gam.swapaxes(-1, -2)


def curvature(N, pt, v_ord, h_ord):
    """R[k, i, j] = delta_j N_i^k - delta_i N_j^k."""
    dn = horizontal(N, N, pt, v_ord, h_ord)
    return dn - dn.swapaxes(-1, -2)


def ricci(N, pt, v_ord, h_ord):
    """Ric = y^b R_{ba}^a."""
    R = curvature(N, pt, v_ord, h_ord)
    tr = jets.trace(R, 1, 3)  # (S, b) after tracing k with j
    return jets.einsum("...b,...b->...", tr, pt.fiber(v_ord, h_ord))


def spray(N, pt, v_ord, h_ord):
    """Underlying spray G^i = N_a^i y^a / 2."""
    return 0.5 * jets.einsum("...ia,...a->...i", N.taylor(pt, v_ord, h_ord),
                             pt.fiber(v_ord, h_ord))
