#!/usr/bin/env python3
"""Geometry of the unit 2-sphere as a time-dependent Lagrange space.

The kinetic energy L = y1^2 + sin(x1)^2 y2^2 is quadratic in velocity,
so the fundamental metric reproduces the round sphere metric and the
connection coefficients are the usual Christoffel symbols.
"""

import numpy as np

from jetlag import parse
from jetlag.geometry import LagrangeSpace, canonical_spray, metric_signature

n = 2
g11 = parse("1", n)
g22 = parse("sin(x1)^2", n)
zero = parse("0", n)
sp = LagrangeSpace.from_family("quadratic", n, parse("1", n),
                               [[g11, zero], [zero, g22]])

z = np.array([0.0, np.pi / 4, 0.7, 0.3, 1.2])
geo = sp.geometry_at(z)

print("metric g at colatitude pi/4:")
print(geo.g)
print("signature:", metric_signature(geo.g), "(positive definite)")

# the spatial spray coefficients encode the geodesic equation
sv = canonical_spray(sp, z)
print("spray G^i:", sv.Gspat)
print("temporal part:", sv.Htemp, "(zero, the clock metric is constant)")

cart = geo.cartan
print("L^1_22 =", cart.L[0, 1, 1], "  expected -sin cos =",
      -np.sin(z[1]) * np.cos(z[1]))
print("L^2_12 =", cart.L[1, 0, 1], "  expected cot =", 1 / np.tan(z[1]))
print("vertical block C:", np.abs(cart.C).max(), "(zero for quadratic L)")

# metric compatibility of the spatial Cartan coefficients, checked by hand:
# dg_ij/dx^k minus both connection corrections should vanish
residual = (geo.dg_x
            - np.einsum("mik,mj->kij", cart.L, geo.g)
            - np.einsum("mjk,im->kij", cart.L, geo.g))
print("metricity residual:", np.abs(residual).max())
