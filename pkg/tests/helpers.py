"""Shared test oracles, independent of the production numerics.

The finite-difference oracle here is a 3-point central difference with one
Richardson level; the package itself uses a 5-point stencil, so agreement
between the two is evidence, not circularity.  The metric oracles build
Christoffel/Riemann data straight from user-level metric component fields.
"""

from __future__ import annotations

import random

import numpy as np

from jetlag.expr import Const, Node, Var, add, call, div, mul, neg, power

# ---------------------------------------------------------------------------
# finite-difference oracle
# ---------------------------------------------------------------------------


def fd_partial(fn, z, axis, rel_step=1e-4):
    """O(h^4) derivative of fn (arrays ok) along one coordinate axis."""
    z = np.asarray(z, dtype=float)
    h = rel_step * (1.0 + abs(z[axis]))

    def f(shift):
        zz = z.copy()
        zz[axis] += shift
        return np.asarray(fn(zz), dtype=float)

    d_h = (f(h) - f(-h)) / (2 * h)
    d_h2 = (f(h / 2) - f(-h / 2)) / h
    return (4.0 * d_h2 - d_h) / 3.0


def fd_gradient(fn, z, rel_step=1e-4):
    z = np.asarray(z, dtype=float)
    return np.stack([fd_partial(fn, z, a, rel_step) for a in range(len(z))])


# ---------------------------------------------------------------------------
# metric oracles: gamma / Riemann / Ricci from component ScalarFields
# ---------------------------------------------------------------------------


def metric_at(g_fields, z):
    n = len(g_fields)
    g = np.array([[g_fields[i][j].evaluate(z) for j in range(n)] for i in range(n)])
    return 0.5 * (g + g.T)


def christoffel_oracle(g_fields, z):
    """gamma^i_jk of a spatial metric given as an n x n grid of ScalarFields."""
    n = len(g_fields)
    g = metric_at(g_fields, z)
    g_inv = np.linalg.inv(g)
    dg = np.empty((n, n, n))  # dg[k, i, j] = d g_ij / d x^k
    for k in range(n):
        dg[k] = fd_partial(lambda q: metric_at(g_fields, q), z, 1 + k)
    gamma = np.empty((n, n, n))
    for i in range(n):
        for j in range(n):
            for k in range(n):
                s = 0.0
                for m in range(n):
                    s += g_inv[i, m] * (dg[k][j, m] + dg[j][k, m] - dg[m][j, k])
                gamma[i, j, k] = 0.5 * s
    return gamma


def riemann_oracle(g_fields, z):
    """r^l_ijk = d_k gamma^l_ij - d_j gamma^l_ik + gamma gamma - gamma gamma."""
    n = len(g_fields)
    gamma = christoffel_oracle(g_fields, z)
    dgamma = np.empty((n, n, n, n))  # dgamma[k, l, i, j] = d_k gamma^l_ij
    for k in range(n):
        dgamma[k] = fd_partial(lambda q: christoffel_oracle(g_fields, q), z, 1 + k)
    r = np.empty((n, n, n, n))
    for l in range(n):
        for i in range(n):
            for j in range(n):
                for k in range(n):
                    val = dgamma[k][l, i, j] - dgamma[j][l, i, k]
                    for m in range(n):
                        val += gamma[m, i, j] * gamma[l, m, k]
                        val -= gamma[m, i, k] * gamma[l, m, j]
                    r[l, i, j, k] = val
    return r


def ricci_oracle(g_fields, z):
    r = riemann_oracle(g_fields, z)
    return np.einsum("mijm->ij", r)


# ---------------------------------------------------------------------------
# sphere closed forms (unit 2-sphere, coordinates x1 = polar, x2 = azimuth)
# ---------------------------------------------------------------------------


def sphere_gamma_closed(x1: float) -> np.ndarray:
    gamma = np.zeros((2, 2, 2))
    gamma[0, 1, 1] = -np.sin(x1) * np.cos(x1)
    gamma[1, 0, 1] = gamma[1, 1, 0] = np.cos(x1) / np.sin(x1)
    return gamma


def great_circle(x0, y0, s):
    """Exact unit-sphere geodesic through (x0, y0) at parameter s.

    x0 = (theta, phi), y0 = (theta_dot, phi_dot); requires unit g-speed so
    that s is arc length.  Returns (theta(s), phi(s)).
    """
    th, ph = x0
    p = np.array(
        [np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)]
    )
    d_th = np.array(
        [np.cos(th) * np.cos(ph), np.cos(th) * np.sin(ph), -np.sin(th)]
    )
    d_ph = np.array([-np.sin(th) * np.sin(ph), np.sin(th) * np.cos(ph), 0.0])
    v = y0[0] * d_th + y0[1] * d_ph
    speed = np.linalg.norm(v)
    assert abs(speed - 1.0) < 1e-12, "great_circle expects unit initial speed"
    gam = np.cos(s) * p + np.sin(s) * v
    theta = np.arccos(np.clip(gam[2], -1.0, 1.0))
    phi = np.arctan2(gam[1], gam[0])
    return np.array([theta, phi])


# ---------------------------------------------------------------------------
# random AST generator (used by the derivative-oracle property and the
# round-trip property; rejection keyed only on boundedness/domain margins,
# never on agreement with the engine under test)
# ---------------------------------------------------------------------------


def random_ast(rng: random.Random, n: int, depth: int) -> Node:
    if depth <= 0 or rng.random() < 0.28:
        if rng.random() < 0.35:
            return Const(round(rng.uniform(-3, 3), 3))
        return Var(rng.randrange(2 * n + 1))
    kind = rng.choice(
        ["add", "sub", "mul", "div", "pow", "sin", "cos", "tan", "exp", "log", "sqrt", "abs", "neg"]
    )
    a = random_ast(rng, n, depth - 1)
    if kind == "add":
        return add(a, random_ast(rng, n, depth - 1))
    if kind == "sub":
        return add(a, neg(random_ast(rng, n, depth - 1)))
    if kind == "mul":
        return mul(a, random_ast(rng, n, depth - 1))
    if kind == "div":
        # keep the denominator away from zero
        b = random_ast(rng, n, depth - 2) if depth >= 2 else Var(rng.randrange(2 * n + 1))
        return div(a, add(Const(round(rng.uniform(1.5, 3.0), 3)), mul(b, b)))
    if kind == "pow":
        if rng.random() < 0.5:
            return power(a, rng.choice([2, 3]))
        return power(add(Const(round(rng.uniform(1.5, 3.0), 3)), mul(a, a)), 0.7)
    if kind == "sin":
        return call("sin", a)
    if kind == "cos":
        return call("cos", a)
    if kind == "tan":
        # bound the argument well inside (-pi/2, pi/2)
        return call("tan", mul(Const(0.4), call("sin", a)))
    if kind == "exp":
        # bound the argument so nested exponentials stay tame
        return call("exp", call("sin", a))
    if kind == "log":
        return call("log", add(Const(round(rng.uniform(0.5, 2.0), 3)), mul(a, a)))
    if kind == "sqrt":
        return call("sqrt", add(Const(round(rng.uniform(0.5, 2.0), 3)), mul(a, a)))
    if kind == "abs":
        return call("abs", add(Const(round(rng.uniform(1.0, 2.0), 3)), mul(a, a)))
    if kind == "neg":
        return neg(a)
    raise AssertionError(kind)


def usable_test_points(field, rng: random.Random, count: int, bound=1e3):
    """Random points where the field and a small FD stencil are well behaved."""
    n = field.n
    points = []
    attempts = 0
    while len(points) < count and attempts < 200 * count:
        attempts += 1
        z = np.array([rng.uniform(-1, 1) for _ in range(2 * n + 1)])
        ok = True
        for axis in range(2 * n + 1):
            for shift in (-2e-4, -1e-4, 0.0, 1e-4, 2e-4):
                zz = z.copy()
                zz[axis] += shift * (1.0 + abs(z[axis]))
                try:
                    v = field.evaluate(zz)
                except Exception:
                    ok = False
                    break
                if not np.isfinite(v) or abs(v) > bound:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            points.append(z)
    return points
