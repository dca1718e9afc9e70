"""Core geometry: metric, sprays, connections, torsion, curvature, gauge laws.

Numeric oracles come from tests/helpers.py and use a different finite
difference scheme (3-point + one Richardson step at rel_step 1e-4) than the
production code, so agreement is evidence rather than tautology.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import (
    christoffel_oracle,
    fd_partial,
    riemann_oracle,
    sphere_gamma_closed,
)
from jetlag.dtensor import (
    ChartMap,
    DTensorField,
    DTensorValue,
    SlotKind,
    covariant_derivative,
    transform_nonlinear,
    transform_point,
    transform_spatial_spray,
    transform_temporal_spray,
    transform_tensor,
)
from jetlag.expr import JetPoint, parse
from jetlag.geometry import (
    LagrangeSpace,
    NonRegularError,
    berwald_connection,
    bianchi_residuals,
    canonical_nonlinear_connection,
    canonical_spray,
    cartan_connection,
    curvature,
    fundamental_metric,
    metric_signature,
    temporal_christoffel,
    torsion,
    transformed_space,
)

N = 2
RNG = np.random.default_rng(20240819)


# ---------------------------------------------------------------------------
# space builders (module level: LagrangeSpace caches make sharing cheap)
# ---------------------------------------------------------------------------

def const_one():
    return parse("1", N)


def flat_space():
    g = [[parse("1", N), parse("0", N)], [parse("0", N), parse("1", N)]]
    return LagrangeSpace.from_family("quadratic", N, const_one(), g)


def sphere_space():
    g = [[parse("1", N), parse("0", N)],
         [parse("0", N), parse("sin(x1)^2", N)]]
    return LagrangeSpace.from_family("quadratic", N, const_one(), g)


def sphere_g_fields():
    return [[parse("1", N), parse("0", N)],
            [parse("0", N), parse("sin(x1)^2", N)]]


def edyn_space():
    # autonomous metric, linear velocity term: the classic reduction case
    g = sphere_g_fields()
    U = [parse("0", N), parse("x1", N)]
    return LagrangeSpace.from_family("electrodynamics", N, const_one(), g,
                                     U_fields=U)


def edyn_rich_space():
    # time-dependent potentials and scalar term, h(t) nonconstant; the
    # metric itself stays autonomous, which is what the family requires
    g = [[parse("2 + 0.3*sin(x1 + 0.5*x2)", N), parse("0.2*x1*x2", N)],
         [parse("0.2*x1*x2", N), parse("1.5 + 0.25*cos(x2)", N)]]
    U = [parse("0.3*t*x2", N), parse("x1", N)]
    F = parse("x1*x2", N)
    return LagrangeSpace.from_family("electrodynamics", N, parse("1 + t/2", N),
                                     g, U_fields=U, F_field=F)


def nonaut_space():
    g = [[parse("1 + 0.1*t", N), parse("0", N)],
         [parse("0", N), parse("(1 + 0.1*t)*sin(x1)^2", N)]]
    U = [parse("0", N), parse("t*x1", N)]
    return LagrangeSpace.from_family("nonautonomous", N, parse("1 + t/2", N),
                                     g, U_fields=U)


def quartic_space():
    # genuinely velocity-dependent metric: C block is nonzero everywhere
    L = parse("(1/(1 + t/2))*((1 + 0.1*x2)*y1^2 + sin(x1)^2*y2^2"
              " + 0.05*(y1^2 + y2^2)^2)", N)
    return LagrangeSpace(N, L, parse("1 + t/2", N))


def exp_time_space():
    g = [[parse("1", N), parse("0", N)], [parse("0", N), parse("1", N)]]
    return LagrangeSpace.from_family("quadratic", N, parse("exp(2*t)", N), g)


SPHERE_Z = np.array([0.0, np.pi / 4, 0.3, 0.0, 1.0])
GEN_Z = np.array([0.3, 0.9, -0.4, 0.7, 1.2])


def random_points(count, t_lo=0.0, t_hi=1.0):
    pts = []
    for _ in range(count):
        t = RNG.uniform(t_lo, t_hi)
        x = RNG.uniform((0.6, -1.0), (1.2, 1.0))
        y = RNG.uniform(-1.5, 1.5, N)
        pts.append(np.concatenate([[t], x, y]))
    return pts


# ---------------------------------------------------------------------------
# fundamental metric
# ---------------------------------------------------------------------------

class TestFundamentalMetric:
    def test_flat_identity(self):
        g, g_inv, h11, h_inv = fundamental_metric(flat_space(), GEN_Z)
        assert np.allclose(g, np.eye(N), atol=1e-14)
        assert np.allclose(g_inv, np.eye(N), atol=1e-14)
        assert h11 == 1.0 and h_inv == 1.0

    def test_sphere_values(self):
        g, _, _, _ = fundamental_metric(sphere_space(), SPHERE_Z)
        assert np.allclose(g, np.diag([1.0, 0.5]), atol=1e-12)

    def test_constant_h_cancels(self):
        # L carries 1/h11 and g carries h11/2 * L_yy: constant h drops out
        g = sphere_g_fields()
        sp2 = LagrangeSpace.from_family("quadratic", N, parse("2", N), g)
        g1, _, _, _ = fundamental_metric(sphere_space(), SPHERE_Z)
        g2, _, _, _ = fundamental_metric(sp2, SPHERE_Z)
        assert np.allclose(g1, g2, atol=1e-12)

    def test_symmetry_exact(self):
        g, _, _, _ = fundamental_metric(quartic_space(), GEN_Z)
        assert np.array_equal(g, g.T)

    def test_velocity_term_drops_out(self):
        # a term linear in y has vanishing second vertical derivative
        g1, _, _, _ = fundamental_metric(sphere_space(), SPHERE_Z)
        g2, _, _, _ = fundamental_metric(edyn_space(), SPHERE_Z)
        assert np.allclose(g1, g2, atol=1e-14)

    def test_degenerate_raises(self):
        sp = LagrangeSpace(N, parse("y1^3 + y2^3", N), const_one())
        z = np.array([0.0, 0.5, 0.5, 0.0, 0.0])
        with pytest.raises(NonRegularError) as err:
            fundamental_metric(sp, z)
        assert err.value.det is not None
        assert abs(err.value.det) < 1e-10

    def test_vanishing_h_raises(self):
        sp = LagrangeSpace(N, parse("y1^2 + y2^2", N), parse("t", N))
        z = np.zeros(2 * N + 1)
        with pytest.raises(NonRegularError):
            fundamental_metric(sp, z)


class TestMetricSignature:
    def test_flat_positive(self):
        g, _, _, _ = fundamental_metric(flat_space(), GEN_Z)
        assert metric_signature(g) == (2, 0)

    def test_indefinite(self):
        sp = LagrangeSpace(N, parse("y1^2 - y2^2", N), const_one())
        g, _, _, _ = fundamental_metric(sp, GEN_Z)
        assert metric_signature(g) == (1, 1)

    def test_near_singular_raises(self):
        with pytest.raises(NonRegularError):
            metric_signature(np.diag([1.0, 1e-13]))


# ---------------------------------------------------------------------------
# temporal Christoffel coefficient
# ---------------------------------------------------------------------------

class TestTemporalChristoffel:
    def test_constant_h(self):
        assert temporal_christoffel(const_one(), 0.7) == 0.0

    def test_exponential(self):
        # h = exp(2t): (1/2) h^-1 h' = 1 for every t
        h = parse("exp(2*t)", N)
        for t in (-1.0, 0.0, 2.5):
            assert temporal_christoffel(h, t) == pytest.approx(1.0, abs=1e-12)

    def test_linear(self):
        assert temporal_christoffel(parse("t", N), 2.0) == pytest.approx(0.25)

    def test_spatial_dependence_rejected(self):
        with pytest.raises(ValueError):
            temporal_christoffel(parse("t + x1", N), 0.0)

    def test_zero_h_raises(self):
        with pytest.raises(NonRegularError):
            temporal_christoffel(parse("t", N), 0.0)


# ---------------------------------------------------------------------------
# canonical spray
# ---------------------------------------------------------------------------

class TestCanonicalSpray:
    def test_sphere_value(self):
        # geodesic spray of the unit sphere at x1 = pi/4, y = (0, 1):
        # 2 G^1 = gamma^1_22 y^2 y^2 = -sin cos = -1/2
        s = canonical_spray(sphere_space(), SPHERE_Z)
        assert s.Gspat == pytest.approx([-0.25, 0.0], abs=1e-12)
        assert np.array_equal(s.Htemp, np.zeros(N))

    def test_nonautonomous_closed_form(self):
        # hand-expanded B for quadratic L with g(t, x): the H terms cancel
        # and a (1/2) g^-1 dg/dt y term joins the Christoffel contraction
        sp = nonaut_space()
        for z in random_points(5):
            gamma = christoffel_oracle(sp.g_fields, z)
            y = z[N + 1:]
            g_mat, g_inv, h11, _ = fundamental_metric(sp, z)
            dg_t = fd_partial(lambda q: fundamental_metric(sp, q)[0], z, 0)
            pure = (0.5 * np.einsum("ijk,j,k->i", gamma, y, y)
                    + 0.5 * g_inv @ dg_t @ y)
            U = sp.U_fields
            Uv = np.array([u.evaluate(z) for u in U])
            dU_x = np.array([[fd_partial(lambda q, uu=U[l]: uu.evaluate(q),
                                         z, 1 + j) for j in range(N)]
                             for l in range(N)])
            dU_t = np.array([fd_partial(lambda q, uu=U[l]: uu.evaluate(q), z, 0)
                             for l in range(N)])
            two_form = dU_x - dU_x.T  # U_(l)j
            H = temporal_christoffel(sp.h11, z[0])
            pot = 0.25 * h11 * (g_inv @ (two_form @ y + dU_t + Uv * H))
            s = canonical_spray(sp, z)
            assert np.allclose(s.Gspat, pure + pot, atol=1e-7)

    def test_reduced_formula_electrodynamics(self):
        sp = edyn_rich_space()
        for z in random_points(5):
            y = z[N + 1:]
            gamma = christoffel_oracle(sp.g_fields, z)
            g_mat, g_inv, h11, _ = fundamental_metric(sp, z)
            U = sp.U_fields
            Uv = np.array([u.evaluate(z) for u in U])
            dU_x = np.array([[fd_partial(lambda q, uu=U[l]: uu.evaluate(q),
                                         z, 1 + j) for j in range(N)]
                             for l in range(N)])
            dU_t = np.array([fd_partial(lambda q, uu=U[l]: uu.evaluate(q), z, 0)
                             for l in range(N)])
            dF_x = np.array([fd_partial(lambda q: sp.F_field.evaluate(q),
                                        z, 1 + l) for l in range(N)])
            H = temporal_christoffel(sp.h11, z[0])
            two_form = dU_x - dU_x.T
            expect = (0.5 * np.einsum("ijk,j,k->i", gamma, y, y)
                      + 0.25 * h11 * (g_inv @ (two_form @ y + dU_t
                                               + Uv * H - dF_x)))
            s = canonical_spray(sp, z)
            assert np.allclose(s.Gspat, expect, atol=1e-7)

    def test_flat_potential_value(self):
        # g = id, U = (0, x1), y = (1, 0): G = (0, 1/4)
        g = [[parse("1", N), parse("0", N)], [parse("0", N), parse("1", N)]]
        sp = LagrangeSpace.from_family("electrodynamics", N, const_one(), g,
                                       U_fields=[parse("0", N), parse("x1", N)])
        z = np.array([0.0, 0.3, -0.2, 1.0, 0.0])
        s = canonical_spray(sp, z)
        assert s.Gspat == pytest.approx([0.0, 0.25], abs=1e-12)

    def test_temporal_component(self):
        # Htemp = -H/2 y on every space
        sp = exp_time_space()
        for z in random_points(3):
            s = canonical_spray(sp, z)
            assert np.allclose(s.Htemp, -0.5 * z[N + 1:], atol=1e-12)


# ---------------------------------------------------------------------------
# canonical nonlinear connection
# ---------------------------------------------------------------------------

class TestNonlinearConnection:
    def test_N_is_vertical_gradient_of_G(self):
        # the defining relation, cross-checked with the independent stencil
        for sp in (quartic_space(), nonaut_space()):
            for z in random_points(3):
                nl = canonical_nonlinear_connection(sp, z)
                fd = np.empty((N, N))
                for j in range(N):
                    fd[:, j] = fd_partial(
                        lambda q: canonical_spray(sp, q).Gspat, z, 1 + N + j)
                assert np.max(np.abs(nl.N - fd)) < 1e-6

    def test_reduced_formula_electrodynamics(self):
        sp = edyn_rich_space()
        for z in random_points(4):
            y = z[N + 1:]
            gamma = christoffel_oracle(sp.g_fields, z)
            _, g_inv, h11, _ = fundamental_metric(sp, z)
            U = sp.U_fields
            dU_x = np.array([[fd_partial(lambda q, uu=U[k]: uu.evaluate(q),
                                         z, 1 + j) for j in range(N)]
                             for k in range(N)])
            two_form = dU_x - dU_x.T
            expect = (np.einsum("ijk,k->ij", gamma, y)
                      + 0.25 * h11 * (g_inv @ two_form))
            nl = canonical_nonlinear_connection(sp, z)
            assert np.allclose(nl.N, expect, atol=1e-7)

    def test_flat_potential_value(self):
        g = [[parse("1", N), parse("0", N)], [parse("0", N), parse("1", N)]]
        sp = LagrangeSpace.from_family("electrodynamics", N, const_one(), g,
                                       U_fields=[parse("0", N), parse("x1", N)])
        z = np.array([0.0, 0.3, -0.2, 1.0, 0.0])
        nl = canonical_nonlinear_connection(sp, z)
        assert nl.N == pytest.approx(np.array([[0.0, -0.25], [0.25, 0.0]]),
                                     abs=1e-12)

    def test_temporal_component(self):
        # M = -H y; with h = exp(2t) the coefficient H is exactly 1
        sp = exp_time_space()
        z = GEN_Z
        nl = canonical_nonlinear_connection(sp, z)
        assert np.allclose(nl.M, -z[N + 1:], atol=1e-12)


# ---------------------------------------------------------------------------
# Cartan connection
# ---------------------------------------------------------------------------

def engine_metric_derivative(sp, z, kind):
    cart = lambda q: cartan_connection(sp, q)
    nl = lambda q: canonical_nonlinear_connection(sp, q)
    gfield = DTensorField((SlotKind.SPACE_DOWN, SlotKind.SPACE_DOWN), N,
                          lambda q: fundamental_metric(sp, q)[0])
    return covariant_derivative(gfield, z, cart, nl, kind).components


def engine_h_derivative(sp, z, kind):
    cart = lambda q: cartan_connection(sp, q)
    nl = lambda q: canonical_nonlinear_connection(sp, q)
    hfield = DTensorField((SlotKind.TIME_DOWN, SlotKind.TIME_DOWN), N,
                          lambda q: np.array([[sp.h11.evaluate(q)]]))
    return covariant_derivative(hfield, z, cart, nl, kind).components


class TestCartanConnection:
    def test_sphere_blocks(self):
        cart = cartan_connection(sphere_space(), SPHERE_Z)
        assert cart.L[0, 1, 1] == pytest.approx(-0.5, abs=1e-12)
        assert cart.L[1, 0, 1] == pytest.approx(1.0, abs=1e-12)
        assert cart.L[1, 1, 0] == pytest.approx(1.0, abs=1e-12)
        assert np.array_equal(cart.Gt, np.zeros((N, N)))
        assert np.array_equal(cart.C, np.zeros((N, N, N)))
        assert cart.H == 0.0

    def test_sphere_closed_form(self):
        x1 = float(SPHERE_Z[1])
        cart = cartan_connection(sphere_space(), SPHERE_Z)
        assert np.allclose(cart.L, sphere_gamma_closed(x1), atol=1e-12)

    def test_quadratic_equals_christoffel(self):
        sp = nonaut_space()
        for z in random_points(4):
            cart = cartan_connection(sp, z)
            gamma = christoffel_oracle(sp.g_fields, z)
            assert np.allclose(cart.L, gamma, atol=1e-7)

    def test_time_block_nonautonomous(self):
        # Gt = (1/2) g^-1 dg/dt for a velocity-independent metric
        sp = nonaut_space()
        for z in random_points(3):
            g_mat, g_inv, _, _ = fundamental_metric(sp, z)
            dg_t = fd_partial(lambda q: fundamental_metric(sp, q)[0], z, 0)
            cart = cartan_connection(sp, z)
            assert np.allclose(cart.Gt, 0.5 * g_inv @ dg_t, atol=1e-7)

    def test_lower_index_symmetry(self):
        cart = cartan_connection(quartic_space(), GEN_Z)
        assert cart.symmetry_residual() == 0.0

    @pytest.mark.parametrize("kind,tol", [("space", 1e-9), ("vert", 1e-9),
                                          ("time", 1e-10)])
    def test_metric_covariant_derivatives_vanish(self, kind, tol):
        for sp in (sphere_space(), edyn_rich_space(), nonaut_space(),
                   quartic_space()):
            for z in random_points(2):
                out = engine_metric_derivative(sp, z, kind)
                assert np.max(np.abs(out)) < tol

    @pytest.mark.parametrize("kind", ["time", "space", "vert"])
    def test_h_metricity(self, kind):
        for sp in (nonaut_space(), exp_time_space()):
            for z in random_points(2):
                out = engine_h_derivative(sp, z, kind)
                assert np.max(np.abs(out)) < 1e-12

    def test_uniqueness_probe_spatial(self):
        # any other symmetric L block breaks horizontal metricity
        sp = quartic_space()
        z = GEN_Z
        base = cartan_connection(sp, z)
        bumped = type(base)(base.H, base.Gt, base.L + 1e-3, base.C)
        nl = lambda q: canonical_nonlinear_connection(sp, q)
        gfield = DTensorField((SlotKind.SPACE_DOWN, SlotKind.SPACE_DOWN), N,
                              lambda q: fundamental_metric(sp, q)[0])
        out = covariant_derivative(gfield, z, lambda q: bumped, nl, "space")
        assert np.max(np.abs(out.components)) > 1e-4

    def test_uniqueness_probe_vertical(self):
        sp = quartic_space()
        z = GEN_Z
        base = cartan_connection(sp, z)
        bumped = type(base)(base.H, base.Gt, base.L, base.C + 1e-3)
        nl = lambda q: canonical_nonlinear_connection(sp, q)
        gfield = DTensorField((SlotKind.SPACE_DOWN, SlotKind.SPACE_DOWN), N,
                              lambda q: fundamental_metric(sp, q)[0])
        out = covariant_derivative(gfield, z, lambda q: bumped, nl, "vert")
        assert np.max(np.abs(out.components)) > 1e-4


class TestBerwald:
    def test_electrodynamics_reduction(self):
        # velocity-linear term leaves the metric untouched, so the Cartan
        # connection collapses onto the pair (H, 0, gamma, 0)
        sp = edyn_rich_space()
        for z in random_points(3):
            cart = cartan_connection(sp, z)
            ber = berwald_connection(sp.h11, sp.g_fields, z)
            assert cart.H == pytest.approx(ber.H, abs=1e-12)
            assert np.allclose(cart.L, ber.L, atol=1e-12)
            # dg/dt cancels only analytically when h depends on t, so the
            # time block carries rounding residue rather than exact zeros
            assert np.max(np.abs(cart.Gt)) < 1e-12
            assert np.array_equal(cart.C, np.zeros((N, N, N)))

    def test_sphere_gamma(self):
        ber = berwald_connection(const_one(), sphere_g_fields(), SPHERE_Z)
        assert np.allclose(ber.L, sphere_gamma_closed(float(SPHERE_Z[1])),
                           atol=1e-12)

    def test_degenerate_metric_raises(self):
        g = [[parse("1", N), parse("1", N)], [parse("1", N), parse("1", N)]]
        with pytest.raises(NonRegularError):
            berwald_connection(const_one(), g, SPHERE_Z)


# ---------------------------------------------------------------------------
# torsion
# ---------------------------------------------------------------------------

class TestTorsion:
    def test_cartan_structural_zeros(self):
        # symmetry of L and C kills the pure horizontal and vertical blocks
        for sp in (sphere_space(), edyn_rich_space(), quartic_space()):
            tor = torsion(sp, GEN_Z)
            assert np.array_equal(tor.T_ij, np.zeros((N, N, N)))
            assert np.array_equal(tor.S, np.zeros((N, N, N)))

    def test_autonomous_time_blocks_vanish(self):
        # h = 1 and autonomous metric: H = 0, M = 0, Gt = 0
        tor = torsion(sphere_space(), SPHERE_Z)
        assert np.max(np.abs(tor.T_1j)) < 1e-12
        assert np.max(np.abs(tor.P_1)) < 1e-12
        assert np.max(np.abs(tor.R_1j)) < 1e-12

    def test_sphere_curvature_cell(self):
        tor = torsion(sphere_space(), SPHERE_Z)
        # R block contracts the Riemann tensor with y: r^1_{221} y^2 = sin^2
        assert tor.R_ij[0, 1, 0] == pytest.approx(0.5, abs=1e-9)

    def test_R_block_matches_riemann(self):
        sp = sphere_space()
        for z in random_points(4):
            tor = torsion(sp, z)
            r = riemann_oracle(sp.g_fields, z)
            expect = np.einsum("mkij,k->mij", r, z[N + 1:])
            assert np.allclose(tor.R_ij, expect, atol=1e-6)

    def test_electrodynamics_R_1j(self):
        # time-space mixed block: -(h11 g^mk / 4)(H U_(k)j + dU_(k)j/dt)
        sp = edyn_rich_space()
        for z in random_points(3):
            _, g_inv, h11, _ = fundamental_metric(sp, z)
            H = temporal_christoffel(sp.h11, z[0])
            U = sp.U_fields

            def two_form(q):
                dU = np.array([[fd_partial(
                    lambda w, uu=U[k]: uu.evaluate(w), q, 1 + j)
                    for j in range(N)] for k in range(N)])
                return dU - dU.T

            tf = two_form(z)
            dtf = fd_partial(two_form, z, 0)
            expect = -0.25 * h11 * g_inv @ (H * tf + dtf)
            tor = torsion(sp, z)
            assert np.allclose(tor.R_1j, expect, atol=1e-6)

    def test_electrodynamics_R_ij(self):
        # spatial block: riemann contraction plus the antisymmetrized
        # covariant derivative of the potential two-form (the block is
        # antisymmetric in (i, j) by definition, so only that part survives)
        sp = edyn_rich_space()
        for z in random_points(3):
            y = z[N + 1:]
            _, g_inv, h11, _ = fundamental_metric(sp, z)
            gamma = christoffel_oracle(sp.g_fields, z)
            r = riemann_oracle(sp.g_fields, z)
            U = sp.U_fields
            dU = np.array([[fd_partial(lambda w, uu=U[k]: uu.evaluate(w),
                                       z, 1 + j) for j in range(N)]
                           for k in range(N)])
            tf = dU - dU.T
            dtf = np.array([fd_partial(lambda w: (lambda d: d - d.T)(
                np.array([[fd_partial(lambda v, uu=U[k]: uu.evaluate(v),
                                      w, 1 + j) for j in range(N)]
                          for k in range(N)])), z, 1 + p) for p in range(N)])
            # cov[k, i, j] = U_(k)i | j with the spatial Christoffel symbols
            cov = np.empty((N, N, N))
            for k in range(N):
                for i in range(N):
                    for j in range(N):
                        v = dtf[j][k, i]
                        for m in range(N):
                            v -= gamma[m, k, j] * tf[m, i]
                            v -= gamma[m, i, j] * tf[k, m]
                        cov[k, i, j] = v
            acov = cov - cov.transpose(0, 2, 1)
            expect = (np.einsum("mkij,k->mij", r, y)
                      + 0.25 * h11 * np.einsum("mk,kij->mij", g_inv, acov))
            tor = torsion(sp, z)
            assert np.allclose(tor.R_ij, expect, atol=1e-5)

    def test_P_block_cross_check(self):
        # P compares the vertical gradient of N against the L block
        sp = quartic_space()
        z = GEN_Z
        tor = torsion(sp, z)
        cart = cartan_connection(sp, z)
        fd = np.empty((N, N, N))
        for j in range(N):
            fd[:, :, j] = fd_partial(
                lambda q: canonical_nonlinear_connection(sp, q).N, z, 1 + N + j)
        expect = fd - np.transpose(cart.L, (0, 2, 1))
        assert np.allclose(tor.P_i, expect, atol=1e-6)

    def test_vertical_space_block_is_C(self):
        cart = cartan_connection(quartic_space(), GEN_Z)
        tor = torsion(quartic_space(), GEN_Z)
        assert np.allclose(tor.P_c, cart.C, atol=1e-12)

    def test_cells_inventory(self):
        tor = torsion(sphere_space(), SPHERE_Z)
        cells = tor.cells()
        assert len(cells) == 8
        assert ("space-space", "vert") in cells


# ---------------------------------------------------------------------------
# curvature
# ---------------------------------------------------------------------------

class TestCurvature:
    def test_sphere_values(self):
        cur = curvature(sphere_space(), SPHERE_Z)
        # r^2_{112} = 1 everywhere on the unit sphere
        assert cur.R_ijk[1, 0, 0, 1] == pytest.approx(1.0, abs=1e-9)
        g, _, _, _ = fundamental_metric(sphere_space(), SPHERE_Z)
        # lowered[m, i, j, k] = g_ip R^p_mjk; cell (1,2,1,2) is sin^2(x1)
        lowered = np.einsum("ip,pmjk->mijk", g, cur.R_ijk)
        assert lowered[0, 1, 0, 1] == pytest.approx(0.5, abs=1e-9)

    def test_matches_riemann_oracle(self):
        for sp in (sphere_space(), edyn_rich_space()):
            for z in random_points(3):
                cur = curvature(sp, z)
                r = riemann_oracle(sp.g_fields, z)
                assert np.allclose(cur.R_ijk, r, atol=1e-6)

    def test_electrodynamics_other_blocks_vanish(self):
        sp = edyn_rich_space()
        for z in random_points(3):
            cur = curvature(sp, z)
            assert np.max(np.abs(cur.R_i1k)) < 1e-9
            assert np.max(np.abs(cur.P_i1k)) < 1e-9
            assert np.max(np.abs(cur.P_ijk)) < 1e-9
            assert np.max(np.abs(cur.S_ijk)) < 1e-9

    def test_last_pair_antisymmetry(self):
        cur = curvature(quartic_space(), GEN_Z)
        assert np.max(np.abs(cur.R_ijk + cur.R_ijk.transpose(0, 1, 3, 2))) \
            < 1e-15
        assert np.max(np.abs(cur.S_ijk + cur.S_ijk.transpose(0, 1, 3, 2))) \
            < 1e-15

    def test_lowered_antisymmetries(self):
        # metricity forces antisymmetry in the first lowered index pair
        sp = quartic_space()
        for z in random_points(3):
            cur = curvature(sp, z)
            g, _, _, _ = fundamental_metric(sp, z)
            low_R1 = np.einsum("ip,pmk->imk", g, cur.R_i1k)
            low_R = np.einsum("ip,pmjk->imjk", g, cur.R_ijk)
            low_P = np.einsum("ip,pmjk->imjk", g, cur.P_ijk)
            assert np.max(np.abs(low_R1 + low_R1.transpose(1, 0, 2))) < 1e-8
            assert np.max(np.abs(low_R + low_R.transpose(1, 0, 2, 3))) < 1e-8
            assert np.max(np.abs(low_P + low_P.transpose(1, 0, 2, 3))) < 1e-8

    def test_vertical_curvature_nonzero_when_y_dependent(self):
        cur = curvature(quartic_space(), GEN_Z)
        assert np.max(np.abs(cur.S_ijk)) > 1e-4

    def test_cells_inventory(self):
        cur = curvature(sphere_space(), SPHERE_Z)
        assert len(cur.cells()) == 5


# ---------------------------------------------------------------------------
# Bianchi identities
# ---------------------------------------------------------------------------

def _engine_bianchi(sp, z):
    # same residuals assembled through the generic d-tensor engine instead
    # of the adapted connection jets; cross-validates both routes
    cart = lambda q: cartan_connection(sp, q)
    nl = lambda q: canonical_nonlinear_connection(sp, q)
    C = cart(z).C
    tor = torsion(sp, z)
    cur = curvature(sp, z)

    T1field = DTensorField(
        (SlotKind.SPACE_UP, SlotKind.TIME_DOWN, SlotKind.SPACE_DOWN), N,
        lambda q: torsion(sp, q).T_1j[:, None, :])
    T1_cov = covariant_derivative(T1field, z, cart, nl,
                                  "space").components[:, 0, :, :]
    term = cur.R_i1k + T1_cov + np.einsum("lkm,mj->ljk", C, tor.R_1j)
    b1 = term - np.transpose(term, (0, 2, 1))

    t2 = cur.R_ijk - np.einsum("lkm,mij->lijk", C, tor.R_ij)
    b2 = (t2 + np.transpose(t2, (0, 2, 3, 1))
          + np.transpose(t2, (0, 3, 1, 2)))

    Cfield = DTensorField(
        (SlotKind.SPACE_UP, SlotKind.SPACE_DOWN, SlotKind.VERT_DOWN), N,
        lambda q: cartan_connection(sp, q).C)
    C_cov = covariant_derivative(Cfield, z, cart, nl, "space").components
    t3 = (cur.P_ijk + np.transpose(C_cov, (0, 1, 3, 2))
          + np.einsum("lkm,mjp->ljkp", C, tor.P_i))
    b3 = t3 - np.transpose(t3, (0, 2, 1, 3))
    return {"b1": b1, "b2": b2, "b3": b3}


class TestBianchi:
    @pytest.mark.parametrize("builder", [nonaut_space, edyn_rich_space,
                                         quartic_space])
    def test_identities(self, builder):
        res = bianchi_residuals(builder(), GEN_Z)
        assert np.max(np.abs(res["b1"])) < 1e-6
        assert np.max(np.abs(res["b2"])) < 1e-6
        assert np.max(np.abs(res["b3"])) < 1e-6

    def test_matches_tensor_engine_assembly(self):
        sp = quartic_space()
        lib = bianchi_residuals(sp, GEN_Z)
        eng = _engine_bianchi(sp, GEN_Z)
        for key in ("b1", "b2", "b3"):
            assert np.max(np.abs(lib[key] - eng[key])) < 1e-8

    def test_quartic_blocks_have_scale(self):
        # guard against the identities passing vacuously
        cur = curvature(quartic_space(), GEN_Z)
        assert np.max(np.abs(cur.R_i1k)) > 1e-3
        assert np.max(np.abs(cur.R_ijk)) > 1e-2
        assert np.max(np.abs(cur.P_ijk)) > 1e-2


# ---------------------------------------------------------------------------
# gauge behaviour
# ---------------------------------------------------------------------------

def random_chart(rng):
    A = rng.uniform(-1, 1, (N, N))
    A += np.sign(np.linalg.det(A) or 1.0) * 1.2 * np.eye(N)
    assert abs(np.linalg.det(A)) > 0.3
    c = rng.uniform(-1, 1, N)
    return ChartMap(parse("exp(t)", N), A, c, t_inverse=parse("log(t)", N))


class TestGaugeTwoPath:
    @pytest.mark.parametrize("builder", [nonaut_space, quartic_space])
    def test_spray_and_connection(self, builder):
        sp = builder()
        ch = random_chart(np.random.default_rng(7))
        sp_t = transformed_space(sp, ch)
        for z in random_points(2):
            p = JetPoint(z[0], tuple(z[1:N + 1]), tuple(z[N + 1:]))
            q = transform_point(ch, p)
            s = canonical_spray(sp, p)
            nl = canonical_nonlinear_connection(sp, p)
            s2 = canonical_spray(sp_t, q)
            nl2 = canonical_nonlinear_connection(sp_t, q)
            assert np.allclose(transform_temporal_spray(s.Htemp, ch, p),
                               s2.Htemp, atol=1e-8)
            assert np.allclose(transform_spatial_spray(s.Gspat, ch, p),
                               s2.Gspat, atol=1e-8)
            moved = transform_nonlinear(nl, ch, p)
            assert np.allclose(moved.M, nl2.M, atol=1e-8)
            assert np.allclose(moved.N, nl2.N, atol=1e-8)

    def test_metric_two_path(self):
        sp = nonaut_space()
        ch = random_chart(np.random.default_rng(9))
        sp_t = transformed_space(sp, ch)
        z = GEN_Z
        p = JetPoint(z[0], tuple(z[1:N + 1]), tuple(z[N + 1:]))
        q = transform_point(ch, p)
        g, _, h11, _ = fundamental_metric(sp, p)
        gv = DTensorValue((SlotKind.SPACE_DOWN, SlotKind.SPACE_DOWN), g, N)
        hv = DTensorValue((SlotKind.TIME_DOWN, SlotKind.TIME_DOWN),
                          np.array([[h11]]), N)
        g2, _, h2, _ = fundamental_metric(sp_t, q)
        assert np.allclose(transform_tensor(gv, ch, p).components, g2,
                           atol=1e-10)
        assert np.allclose(transform_tensor(hv, ch, p).components,
                           np.array([[h2]]), atol=1e-10)

    def test_requires_inverse(self):
        ch = ChartMap(parse("exp(t)", N), np.eye(N), np.zeros(N))
        with pytest.raises(ValueError):
            transformed_space(nonaut_space(), ch)

    def test_dimension_mismatch(self):
        ch = ChartMap(parse("t", 3), np.eye(3), np.zeros(3),
                      t_inverse=parse("t", 3))
        with pytest.raises(ValueError):
            transformed_space(nonaut_space(), ch)


# ---------------------------------------------------------------------------
# caching
# ---------------------------------------------------------------------------

class TestCaching:
    def test_geometry_cache_hit(self):
        sp = sphere_space()
        a = sp.geometry_at(SPHERE_Z)
        b = sp.geometry_at(SPHERE_Z.copy())
        assert a is b

    def test_distinct_points_distinct_entries(self):
        sp = sphere_space()
        a = sp.geometry_at(SPHERE_Z)
        z2 = SPHERE_Z.copy()
        z2[3] = 0.5
        assert sp.geometry_at(z2) is not a


# ---------------------------------------------------------------------------
# flat-space property: constant metric has no geometry
# ---------------------------------------------------------------------------

@given(st.floats(-0.8, 0.8), st.floats(-0.8, 0.8), st.floats(0.2, 2.0),
       st.integers(0, 2**31 - 1))
@settings(max_examples=20, deadline=None)
def test_constant_metric_is_flat(a, b, scale, seed):
    g11 = scale + a * a
    g22 = scale + b * b
    g12 = a * b * 0.5  # dominated by the diagonal, so SPD
    g = [[parse(f"{g11!r}", N), parse(f"{g12!r}", N)],
         [parse(f"{g12!r}", N), parse(f"{g22!r}", N)]]
    sp = LagrangeSpace.from_family("quadratic", N, parse("1", N), g)
    rng = np.random.default_rng(seed)
    z = np.concatenate([[rng.uniform(0, 1)], rng.uniform(-1, 1, 2 * N)])
    s = canonical_spray(sp, z)
    assert np.max(np.abs(s.Gspat)) < 1e-12
    assert np.max(np.abs(canonical_nonlinear_connection(sp, z).N)) < 1e-9
    cur = curvature(sp, z)
    for block in (cur.R_i1k, cur.R_ijk, cur.P_i1k, cur.P_ijk, cur.S_ijk):
        assert np.max(np.abs(block)) < 1e-9
