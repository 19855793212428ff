import numpy as np
import pytest

from finslab import catalog, families as fam
from finslab import oracles as orc
from finslab.connection import assemble
from finslab.palatini import PalatiniPair
from finslab.sampling import sample_points


def test_finite_differences_on_polynomials():
    def f(x):
        return x[:, 0] ** 3 * x[:, 1] + np.sin(x[:, 1])

    x = np.array([[0.4, -0.3], [1.1, 0.7]])
    grad = orc.fd_gradient(f, x)
    ref = np.stack([3 * x[:, 0] ** 2 * x[:, 1], x[:, 0] ** 3 + np.cos(x[:, 1])], 1)
    np.testing.assert_allclose(grad, ref, atol=1e-10)
    hess = orc.fd_hessian(f, x)
    assert hess.shape == (2, 2, 2)
    np.testing.assert_allclose(hess[:, 0, 1], 3 * x[:, 0] ** 2, atol=1e-8)
    np.testing.assert_allclose(hess[:, 1, 1], -np.sin(x[:, 1]), atol=1e-8)


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_fiber_quadrature_volumes(dim):
    fq = orc.FiberQuadrature(dim, 256)
    assert fq.self_test()
    np.testing.assert_allclose(np.linalg.norm(fq.points, axis=1), 1.0, atol=1e-14)
    assert orc.sphere_volume(2) == pytest.approx(4 * np.pi)


def test_fiber_quadrature_integrates_low_degree_moments():
    fq = orc.FiberQuadrature(2, 400)
    z2 = fq.weights @ fq.points[:, 2] ** 2
    assert z2 == pytest.approx(4 * np.pi / 3, abs=1e-12)
    assert abs(fq.weights @ fq.points[:, 0]) < 1e-12


@pytest.mark.parametrize("name, params", [("sphere", {"n": 2}),
                                          ("randers", {"n": 3, "b": [0.2, 0.1, 0]}),
                                          ("minkowski", {"n": 3})])
def test_divergence_formulas_match_finite_differences(name, params):
    M = catalog.build(name, **params)
    x, y = sample_points(M, 6, seed=3)
    N = assemble(M, fam.quadratic_Z(M.n, 1, domain=M.domain), fam.translation_family(M, 2))
    pair = PalatiniPair(M, N)
    for X in fam.vector_field_grid(M, seed=0):
        assert orc.divergence_oracle_horizontal(pair, X, x, y).passed, X.name
        assert orc.divergence_oracle_vertical(M, X, x, y).passed, X.name


def test_gap_table_csv_rows():
    M = catalog.euclidean(2)
    x, y = sample_points(M, 3, seed=0)
    t = orc.divergence_oracle_vertical(M, fam.direction_field(M), x, y)
    lines = t.to_csv().splitlines()
    assert lines[0] == "check_id,x,y,formula,oracle,gap"
    assert len(lines) == 4
    assert t.report().passed


def test_laplacian_identity_on_scalars():
    for M in (catalog.randers(n=3, b=[0.3, 0, 0]), catalog.minkowski(4)):
        x, y = sample_points(M, 10, seed=1)
        f = fam.ratio_scalar(M, seed=2)
        assert orc.laplacian_identity(M, f, x, y).passed


def test_ehp_small_resolution_on_sphere():
    S = catalog.sphere(2)
    res = orc.ehp_quadrature(S, base_nodes=16, fiber_nodes=64)
    assert res.relative_gap < 1e-3
    assert res.y_dependence < 1e-8
    assert res.to_dict()["fiber_volume"] == pytest.approx(2 * np.pi)


def test_ehp_rejects_y_dependent_integrand():
    R = catalog.randers(n=2, b=[0.3, 0.0], b_slope=[[0.0, 0.2], [0.1, 0.0]])
    with pytest.raises(orc.PreconditionError, match="depends on y"):
        orc.ehp_quadrature(R, base_nodes=4, fiber_nodes=16)


def _harmonic(n, nu):
    if nu == 0:
        return lambda ys: 1.0
    if nu == 1:
        return lambda ys: ys[0]
    return lambda ys: ys[0] * ys[1]


@pytest.mark.parametrize("n", [3, 4])
@pytest.mark.parametrize("nu", [0, 1, 2])
def test_sphere_spectrum(n, nu):
    out = orc.sphere_spectrum_check(n, _harmonic(n, nu), nu)
    assert out["gap"] <= 1e-8
    assert out["expected"] == nu * (nu + n - 2)


def test_einstein_probe_on_flat_space():
    M = catalog.minkowski(4)
    x, y = sample_points(M, 5, seed=0)
    out = orc.einstein_scalar_probe(PalatiniPair(M), 2.0, x, y)
    assert out["kappa_below_2n"]
    assert out["residual"].passed
    assert out["ricci"].max < 1e-12


def test_classical_geometry_divergence_of_rotation_is_zero():
    geo = orc.ClassicalGeometry.from_metric(catalog.euclidean(2))
    x = np.array([[0.2, 0.5], [-0.4, 0.1]])
    div = geo.divergence(lambda p: np.stack([-p[:, 1], p[:, 0]], 1), x)
    np.testing.assert_allclose(div, 0.0, atol=1e-9)
