"""
Landsberg curvature decides whether the canonical connection is critical
========================================================================

A Randers metric with a constant one-form is Berwald, so its Landsberg
tensor vanishes and the Berwald connection solves the affine equation.
Letting the one-form vary with the base point breaks this.
"""
import numpy as np

from finslab import catalog, families as fam
from finslab.connection import metric_connection, translate
from finslab.palatini import PalatiniPair, affine_residual, classify
from finslab.reports import sup_norm
from finslab.sampling import sample_points

berwald = catalog.randers(n=3, b=[0.3, 0.0, 0.0])
generic = catalog.randers(n=3, b=[0.3, 0.0, 0.0],
                          b_slope=[[0.0, 0.1, 0.0], [0.0, 0.0, 0.1], [0.1, 0.0, 0.0]])

for M in (berwald, generic):
    x, y = sample_points(M, 20, seed=0)
    lan = np.max(sup_norm(M.landsberg.values(x, y)))
    res = np.max(sup_norm(affine_residual(PalatiniPair(M), x, y)))
    print(f"{M.name:>8}  max |Lan| = {lan:.3e}   affine residual of N^L = {res:.3e}")

# any projective translation of a solution is again a solution
x, y = sample_points(berwald, 20, seed=1)
N = translate(metric_connection(berwald), fam.translation_family(berwald, seed=3))
res = np.max(sup_norm(affine_residual(PalatiniPair(berwald, N), x, y)))
print(f"translated Berwald connection: affine residual = {res:.3e}")
print("classification:", classify(PalatiniPair(berwald, N), x, y).label)

x, y = sample_points(generic, 20, seed=1)
print("generic Randers with N^L:", classify(PalatiniPair(generic), x, y).label)
