import numpy as np
import pytest

from finslab import catalog, families as fam
from finslab import geodesics as geo
from finslab.connection import assemble, metric_connection
from finslab.palatini import PalatiniPair
from finslab.sampling import boundary_points, sample_points


def test_great_circle_returns():
    S = catalog.sphere(2)
    tr = geo.integrate(S, [np.pi / 2, 0.0], [0.0, 1.0], 2 * np.pi, metric=S)
    assert tr.status == "completed"
    np.testing.assert_allclose(tr.x[-1], [np.pi / 2, 2 * np.pi], atol=1e-9)
    assert np.max(np.abs(tr.L - 1.0)) < 1e-10


def test_tilted_great_circle_stays_on_sphere():
    S = catalog.sphere(2)
    tr = geo.integrate(metric_connection(S), [1.0, 0.0], [0.3, 0.8], 5.0, metric=S)
    # embed and check the orbit lies in a plane through the origin
    th, ph = tr.x[:, 0], tr.x[:, 1]
    P = np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], 1)
    normal = np.cross(P[0], P[len(P) // 3])
    assert np.max(np.abs(P @ normal)) / np.linalg.norm(normal) < 1e-9


def test_chart_exit_and_step_limit():
    S = catalog.sphere(2)
    tr = geo.integrate(S, [np.pi / 2, 0.0], [1.0, 0.0], 10.0, box=S.box, metric=S)
    assert tr.status == "chart_exit"
    assert tr.t[-1] < 10.0
    with pytest.raises(geo.IntegrationError, match="step limit"):
        geo.integrate(S, [np.pi / 2, 0.0], [0.0, 1.0], 100.0, max_steps=5)


def test_batched_matches_single():
    S = catalog.sphere(2)
    x0 = np.array([[1.0, 0.0], [1.2, 0.5]])
    y0 = np.array([[0.3, 0.8], [-0.4, 0.2]])
    batch = geo.integrate(S, x0, y0, 3.0)
    single = geo.integrate(S, x0[1], y0[1], 3.0)
    np.testing.assert_allclose(batch[1].x[-1], single.x[-1], atol=1e-9)


def test_trajectory_csv():
    S = catalog.sphere(2)
    tr = geo.integrate(S, [1.0, 0.0], [0.0, 1.0], 1.0, metric=S, samples=3)
    lines = tr.to_csv().splitlines()
    assert lines[0] == "t,x1,x2,y1,y2,L"
    assert len(lines) == 4


def test_l_drift_follows_criterion():
    M = catalog.randers(n=3, b=[0.3, 0, 0])
    x, y = sample_points(M, 2, seed=0)
    Z = fam.quadratic_Z(3, 1, domain=M.domain)
    for A, holds in ((fam.critical_translation(M, Z), True),
                     (fam.translation_family(M, 2), False)):
        rows = geo.l_drift(PalatiniPair(M, assemble(M, Z, A)), x, y, t_end=1.0)
        for r in rows:
            assert r["agree"]
            assert r["criterion_holds"] is holds


def test_lightlike_coincidence_and_control():
    M = catalog.minkowski(4)
    x, y = sample_points(M, 3, seed=1)
    yb = boundary_points(M, x, y)
    yb /= np.linalg.norm(yb, axis=1, keepdims=True)
    Z = fam.L_times(M, 0)
    rows = geo.lightlike_coincidence(M, Z, x, yb, t_end=10.0)
    assert max(r["distance"] for r in rows) < 1e-6
    ctrl = geo.lightlike_coincidence(M, Z, x[:1], y[:1], t_end=10.0, snap=False)
    assert ctrl[0]["distance"] > 1e-2


def test_snap_rejects_timelike_vectors():
    M = catalog.minkowski(4)
    with pytest.raises(ValueError, match="not lightlike"):
        geo.snap_to_cone(M, np.zeros(4), [1.0, 0.1, 0.0, 0.0])


def test_pregeodesic_equivalence():
    S = catalog.sphere(2)
    x, y = sample_points(S, 10, seed=0)
    G = S.spray
    rho = fam.radial_Z(S.F)
    assert geo.pregeodesic_equivalence(G, geo.shifted_spray(G, rho, -2.0), x, y).passed
    bad = geo.shifted_spray(G, fam.quadratic_Z(2, 0), 1.0)
    assert geo.pregeodesic_equivalence(G, bad, x, y).details["verdict"] == "not_equivalent"
