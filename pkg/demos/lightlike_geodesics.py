"""
Lightlike geodesics do not see a Z of the form L W
==================================================

Adding dy(L W) to the Minkowski connection changes the spray by terms
proportional to L, so null geodesics are unchanged while timelike ones
drift away.
"""
import numpy as np

from finslab import catalog, families as fam
from finslab.geodesics import lightlike_coincidence
from finslab.sampling import boundary_points, sample_points

M = catalog.minkowski(4)
x, y = sample_points(M, 5, seed=2)
Z = fam.L_times(M, seed=1)

null = boundary_points(M, x, y)
null /= np.linalg.norm(null, axis=1, keepdims=True)
for r in lightlike_coincidence(M, Z, x, null, t_end=10.0):
    print(f"null vector:     sup distance {r['distance']:.2e}, max |L| {r['L_connection']:.1e}")

timelike = y[:1] / np.linalg.norm(y[:1])
r = lightlike_coincidence(M, Z, x[:1], timelike, t_end=10.0, snap=False)[0]
print(f"timelike vector: sup distance {r['distance']:.2e}")
