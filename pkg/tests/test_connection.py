import numpy as np
import pytest

from finslab import catalog, families as fam, jets
from finslab import connection as C
from finslab.fields import canonical_field
from finslab.sampling import sample_points


def sphere_levi_civita():
    def gamma(xs):
        s, c = jets.sin(xs[0]), jets.cos(xs[0])
        return [[[0.0, 0.0], [0.0, -s * c]],
                [[0.0, c / s], [c / s, 0.0]]]
    return C.linear_connection(gamma, 2, name="sphere LC")


def user_example(n):
    def fn(xs, ys):
        F = jets.sqrt(sum(y * y for y in ys))
        return [[jets.sin(xs[i]) * ys[k] + 0.1 * ys[k] * ys[i] / F for i in range(n)]
                for k in range(n)]
    return C.user_connection(fn, name="user example")


@pytest.fixture(scope="module")
def minkowski():
    M = catalog.minkowski(4)
    return M, sample_points(M, 20, seed=2)


def test_linear_connection_reproduces_berwald_of_sphere():
    S = catalog.sphere(2)
    x, y = sample_points(S, 20, seed=1)
    N = sphere_levi_civita()
    np.testing.assert_allclose(N.values(x, y), S.berwald.values(x, y), atol=1e-12)
    np.testing.assert_allclose(N.christoffel.values(x, y)[:, 0, 1, 1],
                               -np.sin(x[:, 0]) * np.cos(x[:, 0]), atol=1e-12)


def test_canonical_field_is_parallel(minkowski):
    M, (x, y) = minkowski
    B = canonical_field(M.domain)
    R = catalog.randers(n=3, b=[0.2, 0.1, 0.0])
    xr, yr = sample_points(R, 20, seed=1)
    cases = [
        (C.metric_connection(M), x, y),
        (C.assemble(M, fam.L_times(M, 1), fam.translation_family(M, 2)), x, y),
        (C.assemble(R, fam.quadratic_Z(3, 4), fam.isotropic_one_form(3, 5)), xr, yr),
        (user_example(3), xr, yr),
    ]
    S = catalog.sphere(2)
    xs, ys = sample_points(S, 20, seed=3)
    cases.append((sphere_levi_civita(), xs, ys))
    for N, xx, yy in cases:
        val = N.covariant(B).values(xx, yy)
        assert np.max(np.abs(val)) <= 1e-10, N.name


def test_berwald_connection_is_torsion_free_and_translation_adds_torsion(minkowski):
    M, (x, y) = minkowski
    NL = C.metric_connection(M)
    assert C.is_symmetric(NL, x, y)
    assert C.is_symmetric(C.assemble(M, fam.L_times(M, 0)), x, y)
    assert not C.is_symmetric(C.translate(NL, fam.translation_family(M, 0)), x, y)


def test_ricci_invariant_under_translation():
    R = catalog.randers(n=3, b=[0.3, 0, 0], b_slope=[[0, 0.1, 0], [0, 0, 0.1], [0.1, 0, 0]])
    x, y = sample_points(R, 20, seed=0)
    for N in (C.metric_connection(R), C.assemble(R, fam.quadratic_Z(3, 1)), user_example(3)):
        base = N.ricci.values(x, y)
        for seed in range(3):
            shifted = C.translate(N, fam.translation_family(R, seed)).ricci.values(x, y)
            assert np.max(np.abs(shifted - base)) <= 1e-9


def test_spray_of_connection_and_back():
    S = catalog.sphere(2)
    x, y = sample_points(S, 10, seed=0)
    N = C.metric_connection(S)
    G = C.underlying_spray(N)
    np.testing.assert_allclose(G.values(x, y), S.spray.values(x, y), atol=1e-13)
    np.testing.assert_allclose(C.spray_connection(G).values(x, y), N.values(x, y), atol=1e-12)


def test_assembly_rejects_wrong_homogeneity(minkowski):
    M, (x, y) = minkowski
    with pytest.raises(C.HomogeneityError):
        C.assemble(M, fam.translation_family(M, 0))
    with pytest.raises(C.HomogeneityError):
        C.assemble(M, None, fam.L_times(M, 0))
    # declared degree right but the field is not homogeneous
    bad = fam.quadratic_Z(4, 0, domain=M.domain)
    bad_fn = bad.fn
    bad.fn = lambda xs, ys: [c + ys[0] for c in bad_fn(xs, ys)]
    with pytest.raises(C.HomogeneityError, match="Euler"):
        C.assemble(M, bad, samples=(x, y))


def test_curvature_trace_gives_ricci(minkowski):
    R = catalog.randers(n=3, b=[0.3, 0, 0], b_slope=[[0, 0.1, 0], [0, 0, 0.1], [0.1, 0, 0]])
    x, y = sample_points(R, 10, seed=0)
    N = C.metric_connection(R)
    Rk, Ric = C.curvature_and_ricci(N, x, y)
    assert Rk.shape == (10, 3, 3, 3)
    np.testing.assert_allclose(Ric, R.ricci.values(x, y), atol=1e-10)
