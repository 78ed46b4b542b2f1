import numpy as np
import pytest
from hypothesis import example, given, settings
from hypothesis import strategies as st

from wassflow.energy import (
    energy_trace,
    dissipation_residual,
    entropy_term,
    free_energy,
    jko_flow,
    jko_objective,
    jko_solve,
    jko_step,
    kl_divergence,
    partition_constant,
    stationary_density,
    tangent_norm_sq,
    wasserstein_gradient_E,
    wasserstein_scalar_product,
)
from wassflow.errors import (
    ConvergenceError,
    InsufficientDataError,
    NormalizationError,
    SupportMismatchError,
)
from wassflow.eulerian import fp_evolve
from wassflow.measures import Density1D, Grid1D, PotentialSpec, TangentVector1D, density_moments

G = Grid1D(-8.0, 8.0, 1024)
WIDE = Grid1D(-20.0, 20.0, 4096)
QUAD = PotentialSpec.quadratic(1.0)
ZERO = PotentialSpec.zero()
GAUSS_ENTROPY = -0.5 * np.log(2 * np.pi * np.e)


class TestEnergy:
    def test_entropy(self):
        assert entropy_term(Density1D.uniform(Grid1D(0.0, 1.0, 64))) == pytest.approx(0.0, abs=1e-14)
        assert entropy_term(Density1D.gaussian(G)) == pytest.approx(-1.418939, abs=1e-3)
        assert entropy_term(Density1D.gaussian(G)) == pytest.approx(GAUSS_ENTROPY, abs=1e-3)

    def test_free_energy(self):
        rho = Density1D.gaussian(G)
        b = free_energy(rho, 1.0, QUAD)
        assert b.total == pytest.approx(-0.918939, abs=1e-3)
        assert free_energy(rho, 1.0, ZERO).total == b.entropy_term
        assert free_energy(rho, 0.0, QUAD).total == b.potential_term

    def test_partition_constant(self):
        assert partition_constant(QUAD, 1.0, G) == pytest.approx(2.506628, abs=1e-4)
        assert partition_constant(PotentialSpec(lambda x: x**2, lambda x: 2 * x), 1.0, G) == pytest.approx(
            np.sqrt(np.pi), abs=1e-4
        )
        assert partition_constant(PotentialSpec.quadratic(2.0), 1.0, G) == pytest.approx(np.sqrt(np.pi), abs=1e-4)

    def test_partition_constant_overflow(self):
        bowl_down = PotentialSpec(lambda x: -(x**2), lambda x: -2 * x)
        with pytest.raises(NormalizationError):
            partition_constant(bowl_down, 1.0, Grid1D(-40.0, 40.0, 256))

    def test_stationary_density(self):
        m, v = density_moments(stationary_density(QUAD, 1.0, G))
        assert m == pytest.approx(0.0, abs=1e-3) and v == pytest.approx(1.0, abs=1e-3)
        assert density_moments(stationary_density(QUAD, 0.5, G))[1] == pytest.approx(0.5, abs=1e-3)
        flat = stationary_density(ZERO, 1.0, Grid1D(0.0, 2.0, 32))
        assert np.allclose(flat.values, 0.5)

    def test_kl(self):
        rho = Density1D.gaussian(WIDE)
        assert kl_divergence(rho, rho) == 0.0
        assert kl_divergence(Density1D.gaussian(WIDE, 1.0, 1.0), rho) == pytest.approx(0.5, abs=1e-3)
        expect = 0.5 * (4 - 1 - np.log(4))
        assert kl_divergence(Density1D.gaussian(WIDE, 0.0, 4.0), rho) == pytest.approx(expect, abs=1e-3)

    def test_kl_support(self):
        g = Grid1D(0.0, 1.0, 16)
        with pytest.raises(SupportMismatchError):
            kl_divergence(Density1D.uniform(g), Density1D.uniform(g, 0.0, 0.5))


class TestTangentSpace:
    def test_zero_tangent(self):
        rho = Density1D.gaussian(G)
        s = TangentVector1D(G, np.zeros(G.M))
        assert wasserstein_scalar_product(s, s, rho) == 0.0
        assert tangent_norm_sq(s, rho) == 0.0

    def test_cosine_on_uniform(self):
        g = Grid1D(0.0, 1.0, 512)
        e = g.edges
        # exact cell averages of phi'' for phi = cos(2 pi x)
        dphi = -2 * np.pi * np.sin(2 * np.pi * e)
        s = TangentVector1D(g, np.diff(dphi) / g.h)
        val = wasserstein_scalar_product(s, s, Density1D.uniform(g))
        assert val == pytest.approx(2 * np.pi**2, rel=1e-2)

    def test_heat_tangent_norm(self):
        rho = Density1D.gaussian(G)
        s = wasserstein_gradient_E(rho, 1.0, ZERO)
        assert tangent_norm_sq(s, rho) == pytest.approx(1.0, rel=0.05)
        assert tangent_norm_sq(2 * s, rho) == pytest.approx(4 * tangent_norm_sq(s, rho), rel=1e-12)

    def test_gradient_vanishes_at_equilibrium(self):
        rho = stationary_density(QUAD, 1.0, G)
        assert np.max(np.abs(wasserstein_gradient_E(rho, 1.0, QUAD).values)) <= 1e-3

    def test_gradient_of_entropy(self):
        rho = Density1D.gaussian(G)
        grad = wasserstein_gradient_E(rho, 1.0, ZERO)
        at0 = np.interp(0.0, G.centers, grad.values)
        assert at0 == pytest.approx(1 / np.sqrt(2 * np.pi), rel=1e-3)


GT = Grid1D(-4.0, 4.0, 64)
RHO_T = Density1D.gaussian(GT)
vectors = st.lists(st.floats(-1.0, 1.0), min_size=GT.M, max_size=GT.M).map(np.array)


def _tangent(v):
    return TangentVector1D(GT, v - v.mean())


@settings(max_examples=100, deadline=None)
@given(vectors, vectors, vectors, st.floats(-3.0, 3.0))
def test_scalar_product_is_symmetric_bilinear(a, b, c, lam):
    sa, sb, sc = _tangent(a), _tangent(b), _tangent(c)
    ip = lambda u, w: wasserstein_scalar_product(u, w, RHO_T)
    scale = 1.0 + abs(ip(sa, sa)) + abs(ip(sb, sb)) + abs(ip(sc, sc))
    assert ip(sa, sb) == pytest.approx(ip(sb, sa), abs=1e-12 * scale)
    assert ip(sa + lam * sb, sc) == pytest.approx(ip(sa, sc) + lam * ip(sb, sc), abs=1e-10 * scale * (1 + abs(lam)))


@settings(max_examples=100, deadline=None)
@given(vectors)
def test_scalar_product_is_positive(a):
    s = _tangent(a)
    if np.max(np.abs(s.values)) < 1e-6:
        return
    assert wasserstein_scalar_product(s, s, RHO_T) > 0


@settings(max_examples=50, deadline=None)
@given(
    m=st.floats(-2.0, 2.0),
    var=st.floats(0.2, 3.0),
    D=st.floats(0.0, 2.0),
    beta=st.floats(0.0, 3.0),
)
@example(m=0.0, var=1.0, D=5e-324, beta=1.0)  # psi'/D overflows
def test_gradient_is_a_tangent(m, var, D, beta):
    rho = Density1D.gaussian(G, m, var)
    grad = wasserstein_gradient_E(rho, D, PotentialSpec.quadratic(beta))
    assert abs(G.h * grad.values.sum()) <= 1e-10


class TestDissipation:
    def test_heat_flow(self):
        traj = fp_evolve(Density1D.gaussian(G), 1.0, ZERO, 0.2, n_save=20)
        r = dissipation_residual(traj, 1.0, ZERO)
        assert np.max(np.abs(r)) <= 0.05

    def test_stationary(self):
        rho = stationary_density(QUAD, 1.0, G)
        r = dissipation_residual([(0.0, rho), (0.1, rho), (0.2, rho)], 1.0, QUAD)
        assert np.allclose(r, 0.0)

    def test_translation_is_not_a_gradient_flow(self):
        # unit-speed translation: dE/dt = 0 while the squared speed is 1
        snaps = [(t, Density1D.gaussian(G, t, 1.0)) for t in np.linspace(0.0, 0.2, 5)]
        r = dissipation_residual(snaps, 1.0, ZERO)
        assert np.all(np.abs(r - 1.0) <= 0.02)

    def test_needs_three_snapshots(self):
        rho = Density1D.gaussian(G)
        with pytest.raises(InsufficientDataError):
            dissipation_residual([(0.0, rho), (1.0, rho)], 1.0, ZERO)

    def test_constant_gap(self):
        # E - D KL(rho | rho_inf) = -D log Z along the flow
        D = 0.7
        traj = fp_evolve(Density1D.gaussian(G, 1.5, 2.0), D, QUAD, 1.0, n_save=10)
        rho_inf = stationary_density(QUAD, D, G)
        target = -D * np.log(partition_constant(QUAD, D, G))
        gaps = [free_energy(r, D, QUAD).total - D * kl_divergence(r, rho_inf) for _, r in traj]
        assert np.max(np.abs(np.array(gaps) - target)) <= 1e-3

    def test_trace_rows(self):
        traj = fp_evolve(Density1D.gaussian(G, 0.0, 2.0), 1.0, QUAD, 0.5, n_save=5)
        rows = energy_trace(traj, 1.0, QUAD)
        assert len(rows) == 6 and all(len(r) == 6 for r in rows)
        assert np.isnan(rows[0][5]) and np.isnan(rows[-1][5])
        total = [r[3] for r in rows]
        assert np.all(np.diff(total) <= 1e-8)


class TestJKO:
    def test_fixed_point(self):
        rho = stationary_density(QUAD, 1.0, G)
        assert jko_step(rho, 0.05, 1.0, QUAD).l1_distance(rho) <= 1e-3

    def test_heat_variance(self):
        out = jko_step(Density1D.gaussian(G), 0.01, 1.0, ZERO)
        assert density_moments(out)[1] == pytest.approx(1.02, abs=0.005)

    @pytest.mark.parametrize("m,var,tau", [(0.0, 4.0, 0.1), (2.0, 0.5, 0.05), (-1.0, 1.0, 0.5)])
    def test_descent(self, m, var, tau):
        prev = Density1D.gaussian(G, m, var)
        res = jko_solve(prev, tau, 1.0, QUAD)
        assert res.objective <= res.initial_objective
        assert jko_objective(res.density, prev, tau, 1.0, QUAD) <= jko_objective(prev, prev, tau, 1.0, QUAD) + 1e-9

    def test_iteration_cap(self):
        with pytest.raises(ConvergenceError) as err:
            jko_solve(Density1D.gaussian(G, 0.0, 4.0), 0.1, 1.0, QUAD, max_iter=1, rtol=0.0)
        assert np.isfinite(err.value.last_objective)

    def test_flow_tracks_fokker_planck(self):
        rho0 = Density1D.gaussian(G, 1.0, 0.5)
        jko = jko_flow(rho0, 0.02, 10, 1.0, QUAD, n_knots=512)
        fp = fp_evolve(rho0, 1.0, QUAD, 0.2, n_save=10)
        assert jko.times[-1] == pytest.approx(0.2)
        assert jko.final.l1_distance(fp.final) <= 0.02
