import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wassflow.errors import DegenerateTargetError, GrowthError, IncompleteTrajectoryError, InvalidInputError
from wassflow.eulerian import EulerianTrajectory
from wassflow.measures import Density1D, Grid1D, TransportMap1D
from wassflow.transport import (
    CostSpec,
    benamou_brenier_action,
    conjugate_gradient,
    convex_cost_trajectory,
    displacement_interpolation,
    geodesic_trajectory,
    kantorovich_gradient,
    legendre_transform,
    perturbed_trajectory,
    quantile_map,
    straight_line_cost_check,
    w2_distance,
)

WIDE = Grid1D(-20.0, 20.0, 4096)
G = Grid1D(-8.0, 12.0, 2048)
QUAD = CostSpec.quadratic()
QUARTIC = CostSpec.power(4.0)


def gauss(m, var, grid=WIDE):
    return Density1D.gaussian(grid, m, var)


class TestQuantileMap:
    def test_self_map(self):
        rho = gauss(0.5, 2.0)
        T = quantile_map(rho, rho)
        bulk = rho.values > 1e-8
        assert np.max(np.abs(T.values - rho.x)[bulk]) <= WIDE.h

    def test_uniform_dilation(self):
        g = Grid1D(0.0, 2.0, 2048)
        T = quantile_map(Density1D.uniform(g, 0.0, 1.0), Density1D.uniform(g))
        inside = g.centers < 1.0
        assert np.max(np.abs(T.values - 2 * g.centers)[inside]) <= 1e-3

    def test_gaussian(self):
        T = quantile_map(gauss(0.0, 1.0), gauss(3.0, 4.0))
        x = np.linspace(-3.0, 3.0, 61)
        assert np.max(np.abs(T(x) - (3 + 2 * x))) <= 1e-2

    def test_degenerate_target(self):
        g = Grid1D(0.0, 1.0, 16)
        spike = np.zeros(16)
        spike[3] = 16.0
        with pytest.raises(DegenerateTargetError):
            quantile_map(Density1D.uniform(g), Density1D(g, spike))


class TestW2:
    def test_identical(self):
        rho = gauss(1.0, 3.0)
        assert w2_distance(rho, rho) == pytest.approx(0.0, abs=1e-8)

    def test_gaussians(self):
        assert w2_distance(gauss(0.0, 1.0), gauss(3.0, 4.0)) == pytest.approx(np.sqrt(10), abs=1e-3)

    def test_translated_uniforms(self):
        g = Grid1D(0.0, 3.0, 3072)
        d = w2_distance(Density1D.uniform(g, 0.0, 1.0), Density1D.uniform(g, 2.0, 3.0))
        assert d == pytest.approx(2.0, abs=1e-4)


gaussians = st.tuples(st.floats(-4.0, 4.0), st.floats(0.3, 4.0))


@settings(max_examples=30, deadline=None)
@given(gaussians, gaussians, gaussians)
def test_metric_axioms(a, b, c):
    p, q, r = gauss(*a), gauss(*b), gauss(*c)
    assert w2_distance(p, q) == w2_distance(q, p)
    assert w2_distance(p, r) <= w2_distance(p, q) + w2_distance(q, r) + 1e-6
    closed = np.hypot(a[0] - b[0], np.sqrt(a[1]) - np.sqrt(b[1]))
    assert w2_distance(p, q) == pytest.approx(closed, rel=1e-3, abs=1e-6)


class TestInterpolation:
    def test_endpoints(self):
        mu, nu = gauss(0.0, 1.0, G), gauss(4.0, 1.0, G)
        assert displacement_interpolation(mu, nu, 0.0) is mu
        assert displacement_interpolation(mu, nu, 1.0).l1_distance(nu) <= 2e-2

    def test_gaussian_midpoint(self):
        mid = displacement_interpolation(gauss(0.0, 1.0, G), gauss(4.0, 1.0, G), 0.5)
        assert mid.l1_distance(gauss(2.0, 1.0, G)) <= 1e-2

    def test_uniform_quarter(self):
        g = Grid1D(0.0, 3.0, 3072)
        out = displacement_interpolation(Density1D.uniform(g, 0.0, 1.0), Density1D.uniform(g, 2.0, 3.0), 0.25)
        assert out.l1_distance(Density1D.uniform(g, 0.5, 1.5)) <= 1e-2

    @pytest.mark.parametrize("t", [0.25, 0.5, 0.75])
    def test_constant_speed(self, t):
        mu, nu = gauss(-2.0, 1.0), gauss(3.0, 4.0)
        rho_t = displacement_interpolation(mu, nu, t)
        assert w2_distance(mu, rho_t) == pytest.approx(t * w2_distance(mu, nu), abs=1e-3)

    def test_intermediate_maps_are_blends(self):
        g = Grid1D(-12.0, 12.0, 2048)
        mu, nu = gauss(-2.0, 1.0, g), gauss(3.0, 4.0, g)
        T = quantile_map(mu, nu)
        F = mu.cdf(g.centers)
        bulk = (F > 1e-6) & (F < 1 - 1e-6)
        for t in (0.25, 0.5, 0.75):
            S = quantile_map(mu, displacement_interpolation(mu, nu, t))
            blend = (1 - t) * g.centers + t * T.values
            assert np.max(np.abs(S.values - blend)[bulk]) <= 2 * g.h

    def test_rejects_t(self):
        with pytest.raises(InvalidInputError):
            displacement_interpolation(gauss(0, 1), gauss(1, 1), 1.5)


class TestLegendre:
    def test_quadratic(self):
        assert legendre_transform(QUAD, 3.0) == pytest.approx(4.5)
        assert legendre_transform(QUAD, 3.0, numeric=True) == pytest.approx(4.5, abs=1e-9)

    def test_quartic(self):
        assert legendre_transform(QUARTIC, 1.0) == pytest.approx(0.75)
        assert legendre_transform(QUARTIC, 1.0, numeric=True) == pytest.approx(0.75, abs=1e-9)

    def test_unbounded(self):
        with pytest.raises(GrowthError):
            legendre_transform(CostSpec(np.abs), 2.0)

    def test_rejects_nonconvex(self):
        with pytest.raises(InvalidInputError):
            CostSpec(lambda z: -np.asarray(z) ** 2)

    @settings(max_examples=100, deadline=None)
    @given(z=st.floats(-5.0, 5.0), q=st.floats(-5.0, 5.0), p=st.sampled_from([1.5, 2.0, 3.0, 4.0]))
    def test_fenchel_young(self, z, q, p):
        cost = CostSpec.power(p)
        assert cost.c(z) + legendre_transform(cost, q) >= z * q - 1e-9
        assert legendre_transform(cost, q, numeric=True) == pytest.approx(legendre_transform(cost, q), rel=1e-6, abs=1e-9)


class TestConvexCostTrajectory:
    def test_quadratic_is_linear_interpolation(self):
        x = np.linspace(-2.0, 2.0, 9)
        T = lambda x: 1.0 + 3.0 * x
        zeta = convex_cost_trajectory(x, lambda x: x - T(x), QUAD, 0.3)
        assert np.allclose(zeta, 0.7 * x + 0.3 * T(x))

    @pytest.mark.parametrize("cost", [QUAD, QUARTIC])
    def test_start(self, cost):
        x = np.linspace(-1.0, 1.0, 5)
        assert np.array_equal(convex_cost_trajectory(x, np.sin, cost, 0.0), x)

    def test_quartic_slope_one(self):
        x = np.linspace(-1.0, 1.0, 5)
        zeta = convex_cost_trajectory(x, np.ones_like, QUARTIC, 0.6)
        assert np.allclose(zeta, x - 0.6)
        assert np.allclose(conjugate_gradient(QUARTIC, 1.0, numeric=True), 1.0, atol=1e-6)


@settings(max_examples=40, deadline=None)
@given(
    incs=st.lists(st.floats(0.01, 3.0), min_size=8, max_size=8),
    p=st.sampled_from([2.0, 4.0]),
    t=st.floats(0.0, 1.0),
)
def test_optimal_paths_do_not_cross(incs, p, t):
    g = Grid1D(-4.0, 4.0, 64)
    knots = np.linspace(-4.0, 4.0, 9)
    vals = np.concatenate(([-5.0], -5.0 + np.cumsum(incs)))
    T = TransportMap1D(g, np.interp(g.centers, knots, vals))
    cost = CostSpec.power(p)
    x = np.linspace(-3.9, 3.9, 200)
    zeta = convex_cost_trajectory(x, kantorovich_gradient(T, cost), cost, t)
    assert np.all(np.diff(zeta) >= -1e-9)


class TestStraightLine:
    def test_quadratic(self):
        line, best = straight_line_cost_check(QUAD, 0.0, 1.0, 16)
        assert line == pytest.approx(0.5)
        assert best >= line - 1e-9

    def test_null_transport(self):
        line, best = straight_line_cost_check(QUAD, 1.3, 1.3, 16)
        assert line == 0.0 and best >= 0.0

    def test_quartic(self):
        line, best = straight_line_cost_check(QUARTIC, 0.0, 2.0, 16)
        assert line == pytest.approx(4.0)
        assert best >= line - 1e-9

    def test_needs_knots(self):
        with pytest.raises(InvalidInputError):
            straight_line_cost_check(QUAD, 0.0, 1.0, 4)


class TestAction:
    def test_translation(self):
        mu = gauss(0.0, 1.0, G)
        times = (np.arange(16) + 0.5) / 16
        dens = [gauss(2 * t, 1.0, G) for t in times]
        traj = EulerianTrajectory(times, dens, [np.full(G.M, 2.0)] * 16)
        assert benamou_brenier_action(traj) == pytest.approx(4.0, rel=1e-9)
        assert w2_distance(mu, gauss(2.0, 1.0, G)) ** 2 == pytest.approx(4.0, rel=1e-3)

    def test_stationary(self):
        rho = gauss(0.0, 1.0, G)
        traj = EulerianTrajectory(np.array([0.0, 1.0]), [rho, rho], [np.zeros(G.M)] * 2)
        assert benamou_brenier_action(traj) == 0.0

    def test_geodesic_and_perturbations(self):
        mu, nu = gauss(0.0, 1.0, G), gauss(4.0, 1.0, G)
        w2sq = w2_distance(mu, nu) ** 2
        A = benamou_brenier_action(geodesic_trajectory(mu, nu))
        assert A == pytest.approx(16.0, rel=0.02)
        assert A == pytest.approx(w2sq, rel=0.02)
        bump = lambda x: np.exp(-((x - 0.5) ** 2))
        for amp in (0.2, -0.3, 0.4):
            eta = lambda t, a=amp: a * np.sin(np.pi * t)
            eta_dot = lambda t, a=amp: a * np.pi * np.cos(np.pi * t)
            Ap = benamou_brenier_action(perturbed_trajectory(mu, nu, eta, eta_dot, bump))
            assert Ap >= w2sq - 1e-6

    def test_needs_velocities(self):
        rho = gauss(0.0, 1.0, G)
        with pytest.raises(IncompleteTrajectoryError):
            benamou_brenier_action(EulerianTrajectory(np.array([0.0, 1.0]), [rho, rho]))
