import numpy as np
import pytest

from finslab import catalog, families as fam
from finslab import palatini as pal
from finslab.connection import assemble, metric_connection, translate
from finslab.oracles import metric_equation_oracle
from finslab.reports import sup_norm
from finslab.sampling import boundary_points, sample_points

GENERIC = dict(n=3, b=[0.3, 0, 0], b_slope=[[0, 0.1, 0], [0, 0, 0.1], [0.1, 0, 0]])


@pytest.fixture(scope="module")
def mink():
    M = catalog.minkowski(4)
    x, y = sample_points(M, 20, seed=9)
    c = fam.null_covector(4, np.random.default_rng(0))
    return M, x, y, fam.null_power_solution(M, c, +1, 0.7)


def test_null_power_exponent_solves_quadratic(mink):
    M, _, _, Z = mink
    m, n = Z.exponent, M.n
    assert 4 * m * m - 2 * n * m + (n - 2) == pytest.approx(0.0, abs=1e-14)


def test_affine_equation_on_berwald_cases():
    for M in (catalog.sphere(2), catalog.schwarzschild(), catalog.randers(n=3, b=[0.3, 0, 0])):
        x, y = sample_points(M, 15, seed=1)
        for N in (metric_connection(M), translate(metric_connection(M),
                                                  fam.translation_family(M, 4))):
            E = pal.affine_residual(pal.PalatiniPair(M, N), x, y)
            assert np.max(sup_norm(E)) <= 1e-8, (M.name, N.name)


def test_affine_equation_detects_landsberg():
    M = catalog.randers(**GENERIC)
    x, y = sample_points(M, 20, seed=2)
    E = sup_norm(pal.affine_residual(pal.PalatiniPair(M), x, y))
    lan = sup_norm(M.landsberg.values(x, y))
    assert np.all(E >= 1e-3 * lan)
    assert np.all(lan > 0)


def test_exact_solution_solves_torsionfree_system(mink):
    M, x, y, Z = mink
    out = pal.torsionfree_residuals(M, Z, x, y)
    for key in ("res4", "res5", "res6"):
        assert out[key].passed, (key, out[key].max)
    assert out["consistency"]["warning"] is None


def test_torsionfree_residuals_flag_generic_Z():
    M = catalog.randers(n=3, b=[0.2, 0.0, 0.1])
    x, y = sample_points(M, 10, seed=0)
    Z = fam.quadratic_Z(3, 1, domain=M.domain)
    out = pal.torsionfree_residuals(M, Z, x, y)
    assert not out["res4"].passed
    r5 = np.array(out["res5"].details["signed"])
    r6 = np.array(out["res6"].details["signed"])
    assert np.max(np.abs(r5)) > 1e-3 and np.max(np.abs(r6)) > 1e-3


def test_decomposition_round_trip(mink):
    M, x, y, Z = mink
    A = fam.translation_family(M, 3)
    P = pal.PalatiniPair(M, assemble(M, Z, A))
    assert np.max(sup_norm(P.affine_values(x, y))) <= 1e-8
    dec = pal.decompose(P, x, y)
    vals = dec.evaluate(x, y)
    np.testing.assert_allclose(vals["Z"], Z.values(x, y), atol=1e-9)
    np.testing.assert_allclose(vals["A"], A.values(x, y), atol=1e-9)
    np.testing.assert_allclose(vals["Z_torsion"], vals["Z"], atol=1e-8)
    assert dec.is_solution


def test_decompose_refuses_non_solutions():
    M = catalog.minkowski(4)
    x, y = sample_points(M, 10, seed=0)
    P = pal.PalatiniPair(M, assemble(M, fam.quadratic_Z(4, 2, domain=M.domain)))
    with pytest.raises(pal.NotASolutionError) as info:
        pal.decompose(P, x, y)
    assert info.value.diagnostic["route_gap"] > 1e-8
    dec = pal.decompose(P, x, y, formal=True)
    # the torsion route still inverts the assembly
    out = dec.check(x, y)
    assert np.max(out["reassembly_torsion"]) < 1e-9


def test_classification_labels(mink):
    M, x, y, Z = mink
    assert pal.classify(pal.PalatiniPair(M), x, y).label == "formally_classical"
    A = fam.translation_family(M, 1)
    c = pal.classify(pal.PalatiniPair(M, assemble(M, Z, A)), x, y)
    assert c.label == "same_fiber"
    np.testing.assert_allclose(c.representative.values(x, y),
                               assemble(M, Z).values(x, y), atol=1e-9)
    R = catalog.randers(**GENERIC)
    xr, yr = sample_points(R, 10, seed=0)
    assert pal.classify(pal.PalatiniPair(R), xr, yr).label == "non_solution"


def test_compatibility_suite_closed_forms_and_conditions(mink):
    M, x, y, Z = mink
    A = fam.critical_translation(M, Z)
    suite = pal.metric_compatibility_suite(pal.PalatiniPair(M, assemble(M, Z, A)), x, y)
    for k in ("nabla_g", "nabla_y_lower", "nabla_L", "trace_nabla_g"):
        assert suite.closed_forms[k].passed, k
    assert suite.consistent
    assert suite.conditions["L_along_geodesics"]["tensor_vanishes"]
    generic = pal.metric_compatibility_suite(
        pal.PalatiniPair(M, assemble(M, Z, fam.translation_family(M, 0))), x, y)
    assert generic.consistent
    assert not generic.conditions["L_along_geodesics"]["tensor_vanishes"]


def test_metric_equation_classical_reduction():
    for M, flat in ((catalog.sphere(3), False), (catalog.flat_polar(2), True),
                    (catalog.schwarzschild(), True)):
        x, y = sample_points(M, 10, seed=5)
        P = pal.PalatiniPair(M)
        table = metric_equation_oracle(P, x, y)
        assert table.passed, (M.name, table.max_gap)
        if flat:
            assert np.max(np.abs(P.metric_values(x, y))) <= 1e-6


def test_sigma_recovers_exact_solution_potential(mink):
    M, x, y, Z = mink
    sk = pal.sigma_kappa(M, Z)
    sigma, K, Ky = sk.evaluate(x, y)
    np.testing.assert_allclose(sigma, Z.sigma.values(x, y), atol=1e-10)
    assert np.max(np.abs(K)) < 1e-12  # C = 0 on flat space


def test_boundary_divisibility_probe():
    M = catalog.minkowski(4)
    x, y = sample_points(M, 3, seed=0)
    yb = boundary_points(M, x, y)
    lw = pal.boundary_divisibility_probe(M, fam.L_times(M, 1), x, yb)
    assert [v["bounded"] for v in lw.verdicts] == [True, False, False]
    fw = pal.boundary_divisibility_probe(M, fam.F_times(M, 1), x, yb)
    assert not fw.bounded(1)


def test_near_boundary_guard():
    M = catalog.minkowski(4)
    x, y = sample_points(M, 3, seed=0)
    yb = boundary_points(M, x, y)
    P = pal.PalatiniPair(M, assemble(M, fam.L_times(M, 0)))
    with pytest.raises(pal.NearBoundaryError):
        pal.metric_compatibility_suite(P, x, yb * 1e-9)
