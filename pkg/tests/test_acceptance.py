"""Acceptance suite: one test per criterion, each recording a pass/fail line.

Run with ``pytest tests/test_acceptance.py`` (the lines are printed in the
terminal summary) or directly with ``python3 tests/test_acceptance.py``.
"""
import sys
import time

import numpy as np
import pytest

from finslab import catalog, families as fam, jets
from finslab import connection as C
from finslab import geodesics as geo
from finslab import oracles as orc
from finslab import palatini as pal
from finslab import scenario as scn
from finslab.fields import canonical_field, check_homogeneity
from finslab.reports import sup_norm
from finslab.sampling import boundary_points, sample_points

RESULTS = {}

GENERIC_RANDERS = dict(n=3, b=[0.3, 0.0, 0.0],
                       b_slope=[[0.0, 0.1, 0.0], [0.0, 0.0, 0.1], [0.1, 0.0, 0.0]])
CATALOG = [
    ("euclidean", {"n": 3}),
    ("flat_polar", {"n": 2}),
    ("sphere", {"n": 2}),
    ("sphere", {"n": 3}),
    ("minkowski", {"n": 4}),
    ("schwarzschild", {}),
    ("randers", {"n": 3, "b": [0.3, 0.0, 0.0]}),
    ("randers", GENERIC_RANDERS),
    ("quartic", {"n": 3, "mix": 1.0, "wobble": 0.3}),
]
PSEUDO_RIEMANNIAN = [("euclidean", {"n": 3}), ("flat_polar", {"n": 2}), ("sphere", {"n": 2}),
                     ("sphere", {"n": 3}), ("minkowski", {"n": 4}), ("schwarzschild", {})]


def record(number, title, passed, detail):
    RESULTS[number] = (title, bool(passed), detail)
    print(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {title}  ({detail})")
    assert passed, detail


def _user_connection(n):
    def fn(xs, ys):
        F = jets.sqrt(sum(y * y for y in ys))
        return [[jets.sin(xs[i]) * ys[k] + 0.1 * ys[k] * ys[i] / F for i in range(n)]
                for k in range(n)]
    return C.user_connection(fn, name="user")


def _sphere_levi_civita():
    def gamma(xs):
        s, c = jets.sin(xs[0]), jets.cos(xs[0])
        return [[[0.0, 0.0], [0.0, -s * c]],
                [[0.0, c / s], [c / s, 0.0]]]
    return C.linear_connection(gamma, 2, name="linear")


def test_criterion_01_euler_homogeneity():
    metrics = [catalog.build(name, **p) for name, p in CATALOG]
    samples = [sample_points(M, 100, seed=1) for M in metrics]

    def run():
        worst = 0.0
        for M, (x, y) in zip(metrics, samples):
            for T, deg in [(M.L, 2), (M.g, 0), (M.cartan, -1), (M.spray, 2),
                           (M.berwald, 1), (M.landsberg, 0), (M.ricci, 2)]:
                rep = check_homogeneity(T, deg, x, y, tol=1e-9)
                worst = max(worst, rep.max)
        return worst

    # first call pays for the compiled kernels
    catalog.euclidean(2).ricci.values(*sample_points(catalog.euclidean(2), 2, seed=0))
    t0 = time.perf_counter()
    worst = run()
    elapsed = time.perf_counter() - t0
    record(1, "Euler homogeneity", worst <= 1e-9 and elapsed < 5.0,
           f"max residual {worst:.2e}, {len(metrics)} metrics x 100 samples in {elapsed:.2f} s")


def test_criterion_02_canonical_field_parallel():
    M = catalog.minkowski(4)
    x, y = sample_points(M, 50, seed=2)
    R = catalog.randers(n=3, b=[0.2, 0.1, 0.0])
    xr, yr = sample_points(R, 50, seed=3)
    S = catalog.sphere(2)
    xs, ys = sample_points(S, 50, seed=4)
    cases = [
        (C.metric_connection(R), xr, yr),
        (C.assemble(M, fam.L_times(M, 1), fam.translation_family(M, 2)), x, y),
        (C.assemble(R, fam.quadratic_Z(3, 4), fam.isotropic_one_form(3, 5)), xr, yr),
        (_sphere_levi_civita(), xs, ys),
        (_user_connection(3), xr, yr),
    ]
    B = canonical_field(R.domain)
    worst = max(float(np.max(np.abs(N.covariant(B).values(xx, yy)))) for N, xx, yy in cases)
    record(2, "canonical field parallel", worst <= 1e-10,
           f"max |nabla y| {worst:.2e} over 5 connections x 50 samples")


def test_criterion_03_ricci_translation_invariance():
    R = catalog.randers(**GENERIC_RANDERS)
    x, y = sample_points(R, 50, seed=5)
    bases = [C.metric_connection(R), C.assemble(R, fam.quadratic_Z(3, 1)), _user_connection(3)]
    worst = 0.0
    for N in bases:
        base = N.ricci.values(x, y)
        for seed in range(3):
            shifted = C.translate(N, fam.translation_family(R, seed)).ricci.values(x, y)
            worst = max(worst, float(np.max(np.abs(shifted - base))))
    record(3, "Ricci translation invariance", worst <= 1e-9,
           f"max |delta Ric| {worst:.2e} over 3 A x 3 connections x 50 samples")


def test_criterion_04_decomposition_round_trip():
    M = catalog.minkowski(4)
    x, y = sample_points(M, 20, seed=6)
    rng = np.random.default_rng(2024)
    rec, route = 0.0, 0.0
    for k in range(20):
        c = fam.null_covector(4, rng)
        root = +1 if k % 2 == 0 else -1
        Z = fam.null_power_solution(M, c, root, float(rng.uniform(0.2, 1.5)))
        A = fam.translation_family(M, seed=100 + k)
        dec = pal.decompose(pal.PalatiniPair(M, C.assemble(M, Z, A)), x, y)
        vals = dec.evaluate(x, y)
        rec = max(rec, float(np.max(np.abs(vals["Z"] - Z.values(x, y)))),
                  float(np.max(np.abs(vals["A"] - A.values(x, y)))))
        route = max(route, float(np.max(np.abs(vals["Z"] - vals["Z_torsion"]))),
                    float(np.max(np.abs(vals["A"] - vals["A_torsion"]))))
    record(4, "decomposition round trip", rec <= 1e-9 and route <= 1e-8,
           f"recovery {rec:.2e}, route gap {route:.2e} on 20 pairs")


def test_criterion_05_affine_certificates():
    worst, cases = 0.0, 0
    for name, p in PSEUDO_RIEMANNIAN + [("randers", {"n": 3, "b": [0.3, 0.0, 0.0]})]:
        M = catalog.build(name, **p)
        x, y = sample_points(M, 20, seed=7)
        NL = C.metric_connection(M)
        for N in (NL, C.translate(NL, fam.translation_family(M, 8))):
            E = pal.affine_residual(pal.PalatiniPair(M, N), x, y)
            worst = max(worst, float(np.max(sup_norm(E))))
            cases += 1
    G = catalog.randers(**GENERIC_RANDERS)
    x, y = sample_points(G, 20, seed=7)
    E = sup_norm(pal.affine_residual(pal.PalatiniPair(G), x, y))
    ratio = float(np.min(E / sup_norm(G.landsberg.values(x, y))))
    record(5, "affine-equation certificates", worst <= 1e-8 and ratio >= 1e-3,
           f"max residual {worst:.2e} on {cases} Landsberg-free cases, "
           f"generic Randers min residual/|Lan| {ratio:.2e}")


def test_criterion_06_metric_equation_reduction():
    t0 = time.perf_counter()
    gap, flat = 0.0, 0.0
    for name, p in PSEUDO_RIEMANNIAN:
        M = catalog.build(name, **p)
        x, y = sample_points(M, 20, seed=8)
        P = pal.PalatiniPair(M)
        gap = max(gap, orc.metric_equation_oracle(P, x, y).max_gap)
        if name in ("flat_polar", "schwarzschild"):
            flat = max(flat, float(np.max(np.abs(P.metric_values(x, y)))))
    elapsed = time.perf_counter() - t0
    record(6, "metric-equation reduction", gap <= 1e-8 and flat <= 1e-6 and elapsed < 20.0,
           f"closed-form gap {gap:.2e}, Ricci-flat residual {flat:.2e}, {elapsed:.1f} s")


def test_criterion_07_divergence_identities():
    div, lap, count = 0.0, 0.0, 0
    for name, p in CATALOG:
        M = catalog.build(name, **p)
        x, y = sample_points(M, 8, seed=9)
        connections = [C.metric_connection(M),
                       C.assemble(M, fam.quadratic_Z(M.n, 1, domain=M.domain),
                                  fam.translation_family(M, 2))]
        for X in fam.vector_field_grid(M, seed=3):
            for N in connections:
                t = orc.divergence_oracle_horizontal(pal.PalatiniPair(M, N), X, x, y)
                div = max(div, t.max_gap)
            div = max(div, orc.divergence_oracle_vertical(M, X, x, y).max_gap)
            count += 1
        lap = max(lap, orc.laplacian_identity(M, fam.ratio_scalar(M, 4), x, y).max)
    record(7, "divergence identities", div <= 1e-5 and lap <= 1e-9,
           f"max formula/oracle gap {div:.2e} on {count} metric x field cells, "
           f"pointwise identity {lap:.2e}")


def test_criterion_08_ehp_recovery():
    S = catalog.sphere(2)
    t0 = time.perf_counter()
    res = orc.ehp_quadrature(S, base_nodes=64, fiber_nodes=256)
    elapsed = time.perf_counter() - t0
    record(8, "EHP recovery on the unit 2-sphere",
           res.relative_gap <= 1e-3 and elapsed < 30.0,
           f"S = {res.lhs:.6f} vs {res.rhs:.6f}, relative gap {res.relative_gap:.2e}, "
           f"{elapsed:.1f} s")


def test_criterion_09_lightlike_coincidence():
    M = catalog.minkowski(4)
    x, y = sample_points(M, 10, seed=10)
    yb = boundary_points(M, x, y)
    yb /= np.linalg.norm(yb, axis=1, keepdims=True)
    Z = fam.L_times(M, seed=3)
    dist = max(r["distance"] for r in geo.lightlike_coincidence(M, Z, x, yb, t_end=10.0))
    yt = y / np.linalg.norm(y, axis=1, keepdims=True)
    ctrl = geo.lightlike_coincidence(M, Z, x[:1], yt[:1], t_end=10.0, snap=False)
    control = ctrl[0]["distance"]
    record(9, "lightlike coincidence", dist <= 1e-6 and control > 1e-2,
           f"null sup distance {dist:.2e} (10 ICs), timelike control {control:.2e}")


def test_criterion_10_sphere_spectrum():
    harmonics = {0: lambda ys: 1.0, 1: lambda ys: ys[0] - 2.0 * ys[1],
                 2: lambda ys: ys[0] * ys[1] + ys[1] * ys[2]}
    worst = 0.0
    for n in (3, 4):
        for nu, H in harmonics.items():
            worst = max(worst, orc.sphere_spectrum_check(n, H, nu)["gap"])
    record(10, "sphere spectrum", worst <= 1e-8, f"max eigenvalue gap {worst:.2e}")


def test_criterion_11_l_drift_grid():
    M = catalog.sphere(3)
    x, y = sample_points(M, 3, seed=11)
    Zs = {"zero": None, "quadratic": fam.quadratic_Z(3, 5, domain=M.domain),
          "L_times": fam.L_times(M, 6)}
    mismatches, rows, holds, shortest = 0, 0, 0, np.inf
    for Z in Zs.values():
        extra = fam.orthogonal_part(M, fam.translation_family(M, 7))
        As = {"critical": fam.critical_translation(M, Z),
              "critical+orthogonal": fam.critical_translation(M, Z, extra=extra),
              "translation": fam.translation_family(M, 8)}
        for A in As.values():
            out = geo.l_drift(pal.PalatiniPair(M, C.assemble(M, Z, A)), x, y, t_end=2.0,
                              box=M.box)
            rows += len(out)
            mismatches += sum(not r["agree"] for r in out)
            holds += sum(r["criterion_holds"] for r in out)
            shortest = min(shortest, min(r["trajectory"].t[-1] for r in out))
    record(11, "geodesic L-drift", mismatches == 0,
           f"{mismatches} mismatches over {rows} trajectories on a 3 x 3 (Z, A) grid, "
           f"criterion holds on {holds}, shortest run t = {shortest:.2f}")


def test_criterion_12_determinism():
    cfg = scn.parse_config(scn.demo_config("paper-suite"))
    first = scn.run_campaign(cfg)
    second = scn.run_campaign(cfg)
    record(12, "determinism", first.hash == second.hash,
           f"hash {first.hash[:16]}... twice, verdict {first.verdict}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
