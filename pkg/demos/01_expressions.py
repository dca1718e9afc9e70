#!/usr/bin/env python3
# Build scalar fields on the 1-jet bundle from text, evaluate them, and
# take exact derivatives.  Variables are t, x1..xn, y1..yn.

import numpy as np

from jetlag import parse

n = 2
f = parse("sin(x1)^2 * y2 + exp(2*t) / (1 + y1^2)", n)

z = np.array([0.3, 1.1, -0.4, 0.5, 2.0])   # (t, x1, x2, y1, y2)
print("f(z)      =", f.evaluate(z))

# differentiate takes one order per variable, here d/dx1 then d/dy2
df = f.differentiate((0, 1, 0, 0, 1))
print("d2f/dx1dy2 =", df.evaluate(z))
print("exact      =", 2 * np.sin(z[1]) * np.cos(z[1]))

# derivatives are fields too, so they compose
g = df.differentiate((1, 0, 0, 0, 0))
print("d/dt of that:", g.evaluate(z), "(structurally zero)")

# central differences as a sanity check
h = 1e-6
fd = (f.evaluate(z + [0, h, 0, 0, 0]) - f.evaluate(z - [0, h, 0, 0, 0])) / (2 * h)
dx1 = f.differentiate((0, 1, 0, 0, 0)).evaluate(z)
print("dx1 exact vs centered:", dx1, fd, "diff", abs(dx1 - fd))

print("variables used:", sorted(f.variables()), "(0 is t, 1..n space, n+1..2n velocity)")
