"""Geodesics of sprays and connections, and the checks built on them."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .connection import NonlinearConnection
from .fields import ComputedField, Field, Point
from .jets import JetEvaluationError
from .metric import DegenerateMetricError
from .reports import ResidualReport

__all__ = [
    "GeodesicTrajectory",
    "IntegrationError",
    "integrate",
    "l_drift",
    "snap_to_cone",
    "lightlike_coincidence",
    "pregeodesic_equivalence",
]


class IntegrationError(RuntimeError):
    pass


class _StepLimit(Exception):
    pass


@dataclass
class GeodesicTrajectory:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    L: np.ndarray = None
    status: str = "completed"
    meta: dict = field(default_factory=dict)
    dense: object = None

    def at(self, t):
        """State (x, y) at times ``t`` from the dense interpolant."""
        n = self.x.shape[1]
        s = self.dense(np.atleast_1d(t))
        return s[:n].T, s[n:].T

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        n = self.x.shape[1]
        w.writerow(["t"] + [f"x{i + 1}" for i in range(n)] + [f"y{i + 1}" for i in range(n)]
                   + ["L"])
        L = self.L if self.L is not None else np.full(len(self.t), np.nan)
        for row in zip(self.t, self.x, self.y, L):
            w.writerow([repr(float(row[0]))] + [repr(float(v)) for v in row[1]]
                       + [repr(float(v)) for v in row[2]] + [repr(float(row[3]))])
        return buf.getvalue()


def _spray_of(obj) -> Field:
    if isinstance(obj, NonlinearConnection):
        return obj.spray
    if isinstance(obj, Field) and obj.rank == (1, 0):
        return obj
    if hasattr(obj, "spray") and isinstance(obj.spray, Field):
        return obj.spray
    raise TypeError("expected a spray field, a connection or a metric")


def integrate(source, x0, y0, t_end, rtol=1e-11, atol=1e-10, box=None, metric=None,
              samples=201, max_steps=1_000_000, method="DOP853", escape=None):
    """Integrate x'' + 2 G(x, x') = 0 from one or several initial vectors.

    ``source`` is a spray field, a connection (its underlying spray) or a
    metric (its metric spray).  Several initial conditions are integrated
    as one batched system.  Leaving ``box`` stops the integration with
    status ``chart_exit`` and keeps the partial trajectory; ``escape``
    likewise stops with status ``escaped`` once some |y| exceeds it.
    """
    G = _spray_of(source)
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    y0 = np.atleast_2d(np.asarray(y0, dtype=float))
    m, n = x0.shape
    calls = [0]
    limit = 13 * max_steps  # DOP853 uses 12 stages per step plus one error estimate

    def rhs(t, s):
        calls[0] += 1
        if calls[0] > limit:
            raise _StepLimit()
        st = s.reshape(m, 2 * n)
        if not np.all(np.isfinite(st)):
            return np.full(s.shape, np.nan)
        try:
            g = G.values(st[:, :n], st[:, n:])
        except (DegenerateMetricError, JetEvaluationError):
            # a trial stage left the chart; NaN makes the solver shrink the step
            return np.full(s.shape, np.nan)
        return np.concatenate([st[:, n:], -2.0 * g], axis=1).ravel()

    events = []
    if box is not None:
        box = np.asarray(box, dtype=float)

        def leave(t, s):
            st = s.reshape(m, 2 * n)[:, :n]
            return float(np.min(np.minimum(st - box[:, 0], box[:, 1] - st)))

        leave.terminal = True
        leave.direction = -1
        events.append(leave)
    if escape is not None:

        def run_away(t, s):
            return float(escape - np.max(np.abs(s.reshape(m, 2 * n)[:, n:])))

        run_away.terminal = True
        run_away.direction = -1
        events.append(run_away)

    s0 = np.concatenate([x0, y0], axis=1).ravel()
    try:
        sol = solve_ivp(rhs, (0.0, float(t_end)), s0, method=method, rtol=rtol, atol=atol,
                        dense_output=True, events=events or None)
    except _StepLimit:
        raise IntegrationError(f"step limit of {max_steps} exceeded") from None
    if sol.status == -1:
        raise IntegrationError(f"integration failed: {sol.message}")
    status = "completed"
    if sol.status == 1:
        status = "chart_exit" if box is not None and len(sol.t_events[0]) else "escaped"
    t_stop = sol.t[-1]
    grid = np.linspace(0.0, t_stop, samples)
    states = sol.sol(grid).reshape(m, 2 * n, samples)
    trajs = []
    for k in range(m):
        xs = states[k, :n].T
        ys = states[k, n:].T
        L = metric.L.values(xs, ys) if metric is not None else None

        def dense(t, k=k):
            return sol.sol(t).reshape(m, 2 * n, -1)[k]

        trajs.append(GeodesicTrajectory(
            grid, xs, ys, L, status,
            {"method": method, "rtol": rtol, "atol": atol, "steps": int(len(sol.t) - 1),
             "rhs_evaluations": int(sol.nfev), "t_end": float(t_stop)}, dense))
    return trajs if m > 1 else trajs[0]


def l_drift(pair, x0, y0, t_end=10.0, Z=None, A=None, drift_tol=1e-7, criterion_tol=1e-7,
            samples=201, **kw):
    """Drift of L along geodesics of the pair's connection, with the predicted verdict.

    The criterion is |A_a y^a + 2 y_a Z^a / L| evaluated along the trajectory;
    L is predicted constant exactly when it vanishes.  Returns one report per
    initial condition, each with ``drift``, ``criterion`` and ``agree``.
    """
    M, N = pair.metric, pair.connection
    if Z is None and A is None:
        if N.provenance == "assembled":
            Z, A = N.parts.get("Z"), N.parts.get("A")
        else:
            from .palatini import decompose
            dec = decompose(pair, formal=True)
            Z, A = dec.Z_torsion, dec.A_torsion
    trajs = integrate(N, x0, y0, t_end, metric=M, samples=samples, **kw)
    if isinstance(trajs, GeodesicTrajectory):
        trajs = [trajs]
    out = []
    for tr in trajs:
        pt = Point(tr.x, tr.y)
        L = M.L.taylor(pt, 0, 0).value
        crit = np.zeros(len(L))
        if A is not None:
            crit = crit + np.einsum("si,si->s", A.taylor(pt, 0, 0).value, tr.y)
        if Z is not None:
            ylow = M.y_lower.taylor(pt, 0, 0).value
            crit = crit + 2.0 * np.einsum("si,si->s", ylow, Z.taylor(pt, 0, 0).value) / L
        drift = float(np.max(np.abs(L - L[0])))
        cmax = float(np.max(np.abs(crit)))
        out.append({"drift": drift, "criterion": cmax,
                    "drift_zero": drift <= drift_tol, "criterion_holds": cmax <= criterion_tol,
                    "agree": (drift <= drift_tol) == (cmax <= criterion_tol),
                    "status": tr.status, "trajectory": tr})
    return out


def snap_to_cone(metric, x, y, tol=1e-12):
    """One Newton step on L(x, .) = 0 along the vertical gradient of L."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    pt = Point(x, y)
    jet = metric.L.taylor(pt, 1, 0)
    L = jet.value
    grad = jet.grad_y().value
    y_new = y - (L / np.sum(grad * grad, axis=1))[:, None] * grad
    L_new = metric.L.values(x, y_new)
    scale = np.sum(y_new * y_new, axis=1)
    bad = np.abs(L_new) > tol * scale
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise ValueError(f"initial vector is not lightlike: L = {L_new[i]:.3e} after one "
                         f"Newton step at y = {y[i].tolist()}")
    return y_new


def lightlike_coincidence(metric, Z: Field, x0, y0, t_end=10.0, snap=True, samples=401,
                          **kw):
    """Compare geodesics of N^L + dy Z with those of L from the same vectors.

    ``Z`` should be of the form L W so that the spray extends to the cone.
    Returns per-trajectory sup distances (chart coordinates and velocities at
    matched parameter values) together with the L traces.
    """
    from .connection import assemble

    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    y0 = np.atleast_2d(np.asarray(y0, dtype=float))
    if snap:
        y0 = snap_to_cone(metric, x0, y0)
    N = assemble(metric, Z, None, name="N^L+dyZ")
    kw.setdefault("escape", 1e6 * float(np.max(np.abs(y0))))
    out = []
    # one system per vector so a run-away control does not cut the others short
    for xi, yi in zip(x0, y0):
        ta = integrate(N, xi, yi, t_end, metric=metric, samples=samples, **kw)
        tb = integrate(metric, xi, yi, t_end, metric=metric, samples=samples, **kw)
        T = min(ta.t[-1], tb.t[-1])
        grid = np.linspace(0.0, T, samples)
        xa, ya = ta.at(grid)
        xb, yb = tb.at(grid)
        dist = float(np.max(np.linalg.norm(xa - xb, axis=1)))
        vdist = float(np.max(np.linalg.norm(ya - yb, axis=1)))
        out.append({"distance": dist, "velocity_distance": vdist,
                    "L_connection": float(np.max(np.abs(ta.L))),
                    "L_metric": float(np.max(np.abs(tb.L))),
                    "t_end": float(T), "status": (ta.status, tb.status)})
    return out


def pregeodesic_equivalence(G1: Field, G2: Field, x, y, tol=1e-9):
    """Radial test on D = -(G2 - G1)/2: equivalent iff D^i y^j - D^j y^i = 0."""
    pt = Point(x, y)
    D = -0.5 * (G2.taylor(pt, 0, 0).value - G1.taylor(pt, 0, 0).value)
    wedge = np.einsum("si,sj->sij", D, pt.y)
    wedge = wedge - wedge.transpose(0, 2, 1)
    res = np.max(np.abs(wedge.reshape(len(D), -1)), axis=1)
    rep = ResidualReport.from_samples("pregeodesic_equivalence", pt.x, pt.y, res, tol)
    rep.details["verdict"] = "equivalent" if rep.passed else "not_equivalent"
    return rep


def shifted_spray(G: Field, Z: Field, factor=1.0, name=None):
    """G + factor * Z as a spray field."""
    return ComputedField(lambda pt, v, h: G.taylor(pt, v, h) + factor * Z.taylor(pt, v, h),
                         (1, 0), 2, G.domain, name or f"{G.name}+{factor}Z")
