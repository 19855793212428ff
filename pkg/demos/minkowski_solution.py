"""
A non-classical torsion-free solution on flat spacetime
========================================================

On Minkowski space the potential s = L^m (c.y)^(1-2m), with c a null
covector and m a root of 4m^2 - 2nm + (n-2) = 0, gives a vertical field Z
whose connection N^L + dy Z solves the affine equation without being the
Levi-Civita one.  We check the equation, then assemble with a random
translation and decompose again.
"""
import numpy as np

from finslab import catalog, families as fam
from finslab.connection import assemble
from finslab.palatini import PalatiniPair, decompose, torsionfree_residuals
from finslab.reports import sup_norm
from finslab.sampling import sample_points

M = catalog.minkowski(4)
x, y = sample_points(M, 20, seed=4)
rng = np.random.default_rng(1)
c = fam.null_covector(4, rng)

for root in (+1, -1):
    Z = fam.null_power_solution(M, c, root, amplitude=0.8)
    out = torsionfree_residuals(M, Z, x, y)
    worst = max(out[k].max for k in ("res4", "res5", "res6"))
    print(f"root {root:+d}: m = {Z.exponent:.4f}, torsion-free residuals <= {worst:.2e}")

Z = fam.null_power_solution(M, c, +1, amplitude=0.8)
A = fam.translation_family(M, seed=5)
P = PalatiniPair(M, assemble(M, Z, A))
print(f"affine residual of N^L + dy Z + A y: {np.max(sup_norm(P.affine_values(x, y))):.2e}")

dec = decompose(P, x, y)
vals = dec.evaluate(x, y)
print(f"recovered Z error: {np.max(np.abs(vals['Z'] - Z.values(x, y))):.2e}")
print(f"recovered A error: {np.max(np.abs(vals['A'] - A.values(x, y))):.2e}")
print(f"gap between the two recovery routes: {dec.diagnostic['route_gap']:.2e}")
