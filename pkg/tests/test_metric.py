import numpy as np
import pytest

from finslab import catalog
from finslab.fields import check_homogeneity
from finslab.metric import DegenerateMetricError, properness_probe
from finslab.oracles import ClassicalGeometry
from finslab.sampling import boundary_points, sample_points

GENERIC_RANDERS = dict(n=3, b=[0.3, 0.0, 0.0],
                       b_slope=[[0.0, 0.1, 0.0], [0.0, 0.0, 0.1], [0.1, 0.0, 0.0]])

ALL = [
    ("euclidean", {"n": 3}),
    ("flat_polar", {"n": 2}),
    ("sphere", {"n": 3}),
    ("minkowski", {"n": 4}),
    ("schwarzschild", {}),
    ("randers", {"n": 3, "b": [0.3, 0.0, 0.0]}),
    ("randers", GENERIC_RANDERS),
    ("quartic", {"n": 3, "mix": 1.0, "wobble": 0.3}),
]
RIEMANNIAN = [("flat_polar", {"n": 3}), ("sphere", {"n": 2}), ("sphere", {"n": 3}),
              ("schwarzschild", {}), ("minkowski", {"n": 3})]


def _samples(M, count=20, seed=0):
    return sample_points(M, count, seed=seed)


def test_randers_fundamental_tensor_closed_form():
    M = catalog.randers(**GENERIC_RANDERS)
    x, y = _samples(M)
    b = np.array([0.3, 0, 0]) + x @ np.array(GENERIC_RANDERS["b_slope"]).T
    alpha = np.linalg.norm(y, axis=1)
    F = alpha + np.sum(b * y, axis=1)
    yt = y / alpha[:, None]
    ref = ((F / alpha)[:, None, None] * (np.eye(3) - np.einsum("si,sj->sij", yt, yt))
           + np.einsum("si,sj->sij", yt + b, yt + b))
    np.testing.assert_allclose(M.g.values(x, y), ref, atol=1e-12)


def test_flat_metrics_have_constant_g():
    E = catalog.euclidean(3)
    x, y = _samples(E)
    np.testing.assert_allclose(E.g.values(x, y), np.broadcast_to(np.eye(3), (20, 3, 3)),
                               atol=1e-14)
    M = catalog.minkowski(4)
    x, y = _samples(M)
    np.testing.assert_allclose(M.g.values(x, y),
                               np.broadcast_to(np.diag([1.0, -1, -1, -1]), (20, 4, 4)),
                               atol=1e-14)


@pytest.mark.parametrize("name, params", ALL)
def test_euler_homogeneity(name, params):
    M = catalog.build(name, **params)
    x, y = _samples(M, 30)
    for T, deg in [(M.L, 2), (M.F, 1), (M.g, 0), (M.g_inv, 0), (M.cartan, -1),
                   (M.mean_cartan, -1), (M.spray, 2), (M.berwald, 1), (M.landsberg, 0),
                   (M.mean_landsberg, 0), (M.ricci, 2)]:
        assert check_homogeneity(T, deg, x, y).passed, T.name


@pytest.mark.parametrize("name, params", ALL)
def test_cartan_and_landsberg_structure(name, params):
    M = catalog.build(name, **params)
    x, y = _samples(M)
    C = M.cartan.values(x, y)
    Lan = M.landsberg.values(x, y)
    assert np.max(np.abs(C - C.transpose(0, 2, 1, 3))) < 1e-10
    assert np.max(np.abs(np.einsum("sijk,sk->sij", C, y))) < 1e-10
    assert np.max(np.abs(np.einsum("sijk,sk->sij", Lan, y))) < 1e-9
    gi = M.g_inv.values(x, y)
    np.testing.assert_allclose(np.einsum("sij,sjk->sik", M.g.values(x, y), gi),
                               np.broadcast_to(np.eye(M.n), gi.shape), atol=1e-10)


def test_landsberg_vanishes_exactly_on_berwald_randers():
    berwald = catalog.randers(n=3, b=[0.3, 0, 0])
    generic = catalog.randers(**GENERIC_RANDERS)
    x, y = _samples(berwald)
    assert np.max(np.abs(berwald.landsberg.values(x, y))) < 1e-12
    assert np.max(np.abs(berwald.cartan.values(x, y))) > 1e-2
    assert np.min(np.max(np.abs(generic.mean_landsberg.values(x, y)), axis=1)) > 1e-4


@pytest.mark.parametrize("name, params", RIEMANNIAN)
def test_spray_and_ricci_against_classical_oracle(name, params):
    M = catalog.build(name, **params)
    x, y = _samples(M, 10)
    geo = ClassicalGeometry.from_metric(M)
    Gam = geo.christoffel(x)
    G_ref = 0.5 * np.einsum("skij,si,sj->sk", Gam, y, y)
    np.testing.assert_allclose(M.spray.values(x, y), G_ref, atol=1e-9)
    np.testing.assert_allclose(M.berwald.values(x, y),
                               np.einsum("skij,sj->ski", Gam, y), atol=1e-9)
    Ric_ref = np.einsum("sab,sa,sb->s", geo.ricci(x), y, y)
    np.testing.assert_allclose(M.ricci.values(x, y), Ric_ref, atol=1e-8)


def test_unit_sphere_scalar_curvature():
    geo = ClassicalGeometry.from_metric(catalog.sphere(2))
    x = np.array([[0.7, 0.1], [1.4, -2.0]])
    np.testing.assert_allclose(geo.scalar(x), [2.0, 2.0], atol=1e-8)


def test_properness_classifications():
    E = catalog.euclidean(3)
    x, y = _samples(E)
    rep = properness_probe(E, x, y, rays=(np.zeros((3, 3)), np.eye(3)))
    assert rep.details["classification"] == "finsler"

    M = catalog.minkowski(4)
    x, y = _samples(M)
    rep = properness_probe(M, x, y, boundary=(x, boundary_points(M, x, y)))
    assert rep.details["classification"] == "proper_lorentz_finsler"
    assert rep.details["boundary"]["L_to_zero"]

    Q = catalog.quartic(n=3)
    x, y = _samples(Q)
    rep = properness_probe(Q, x, y, rays=(np.zeros((3, 3)), np.eye(3)))
    assert rep.details["classification"] == "improper"
    assert any(p["check"] == "nondegenerate" for p in rep.details["problems"])


def test_degenerate_direction_raises():
    Q = catalog.quartic(n=3)
    with pytest.raises(DegenerateMetricError):
        Q.g_inv.values(np.zeros((1, 3)), np.array([[1.0, 0.0, 0.0]]))


def test_catalog_errors():
    with pytest.raises(catalog.UnknownMetricError) as info:
        catalog.build("minkowsky")
    assert "minkowski" in info.value.suggestions
    with pytest.raises(ValueError, match="Randers"):
        catalog.randers(n=2, b=[0.9, 0.5])


def test_sampling_is_seeded_and_on_indicatrix():
    M = catalog.schwarzschild()
    x1, y1 = sample_points(M, 25, seed=4)
    x2, y2 = sample_points(M, 25, seed=4)
    x3, _ = sample_points(M, 25, seed=5)
    assert np.array_equal(x1, x2) and np.array_equal(y1, y2)
    assert not np.array_equal(x1, x3)
    np.testing.assert_allclose(M.L.values(x1, y1), 1.0, atol=1e-12)
    assert np.all(M.domain.contains(x1, y1))
    box = M.box
    assert np.all((x1 >= box[:, 0]) & (x1 <= box[:, 1]))


def test_boundary_points_are_null():
    M = catalog.schwarzschild()
    x, y = sample_points(M, 10, seed=1)
    yb = boundary_points(M, x, y)
    assert np.max(np.abs(M.L.values(x, yb))) < 1e-12
