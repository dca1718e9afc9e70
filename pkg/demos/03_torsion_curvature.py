#!/usr/bin/env python3
# Torsion and curvature tables for a genuinely velocity-dependent space,
# then the sphere again to recover the classical Riemann tensor.

import numpy as np

from jetlag import parse
from jetlag.geometry import (LagrangeSpace, torsion, curvature,
                             bianchi_residuals)

n = 2

# quartic term makes the metric depend on y, so the vertical blocks wake up
L = parse("(1 + 0.1*x2)*y1^2 + sin(x1)^2*y2^2 + 0.05*(y1^2 + y2^2)^2", n)
sp = LagrangeSpace(n, L, parse("1 + t/2", n))
z = np.array([0.4, 1.1, 0.3, 0.6, 0.9])

tor = torsion(sp, z)
print("torsion blocks (max abs), keyed by (row, column) of the block table:")
for (row, col), block in tor.cells().items():
    print(f"  {row:11s} {col:6s} {np.abs(block).max():.3e}")

cur = curvature(sp, z)
print("curvature blocks (max abs):")
for (row, col), block in cur.cells().items():
    print(f"  {row:11s} {col:6s} {np.abs(block).max():.3e}")

res = bianchi_residuals(sp, z)
print("closure identities:", {k: float(np.abs(v).max()) for k, v in res.items()})

# on the sphere the R block is the Riemann tensor; lower an index and
# read off the sectional component sin(x1)^2
g = [[parse("1", n), parse("0", n)], [parse("0", n), parse("sin(x1)^2", n)]]
sphere = LagrangeSpace.from_family("quadratic", n, parse("1", n), g)
zs = np.array([0.0, 0.9, 0.2, 0.4, 1.0])
R = curvature(sphere, zs).R_ijk
low = np.einsum("ip,pmjk->mijk", sphere.geometry_at(zs).g, R)
print("R_1212 =", low[0, 1, 0, 1], " sin^2 x1 =", np.sin(zs[1]) ** 2)
