"""
The Finsler action on the round sphere and fiber harmonics
==========================================================

For a quadratic Lagrangian the fiber integral of g^ab Ric_.a.b against
the density reduces to the Einstein-Hilbert integral times twice the
volume of the unit fiber sphere.  The fiber Laplacian -L g^ab d_a d_b acts
on H(y)/|y|^nu with eigenvalue nu (nu + n - 2).
"""
import time

import numpy as np

from finslab import catalog
from finslab.oracles import ehp_quadrature, sphere_spectrum_check

S = catalog.sphere(2)
for nodes in ((16, 64), (32, 128), (64, 256)):
    t0 = time.perf_counter()
    r = ehp_quadrature(S, base_nodes=nodes[0], fiber_nodes=nodes[1])
    print(f"{nodes[0]:>3} base nodes per axis, {nodes[1]:>3} fiber nodes: "
          f"S = {r.lhs:.10f}  reference = {r.rhs:.10f}  "
          f"rel gap {r.relative_gap:.1e}  ({time.perf_counter() - t0:.1f} s)")

harmonics = {0: lambda ys: 1.0, 1: lambda ys: ys[0], 2: lambda ys: ys[0] * ys[1]}
for n in (3, 4):
    for nu, H in harmonics.items():
        out = sphere_spectrum_check(n, H, nu)
        print(f"n = {n}, nu = {nu}: eigenvalue {out['eigenvalue']:.10f} "
              f"(expected {out['expected']:.0f})")
