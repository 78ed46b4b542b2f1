import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wassflow import _rng
from wassflow.errors import InvalidInputError, InvalidScheduleError, MonotonicityError, OutOfDomainError
from wassflow.measures import (
    Density1D,
    DiffusionSchedule,
    Grid1D,
    ParticleEnsemble,
    PotentialSpec,
    TangentVector1D,
    TransportMap1D,
    VelocityField1D,
    build_density_from_samples,
    density_moments,
    named_field,
    sample_from_density,
)

G = Grid1D(-8.0, 8.0, 1024)


class TestGrid:
    def test_geometry(self):
        g = Grid1D(0.0, 1.0, 8)
        assert g.h == 0.125
        assert np.allclose(g.centers, (np.arange(8) + 0.5) / 8)
        assert g.edges[0] == 0.0 and g.edges[-1] == 1.0

    @pytest.mark.parametrize("a,b,M", [(1.0, 0.0, 16), (0.0, 1.0, 4), (0.0, np.inf, 16), (0.0, 1.0, 10.5)])
    def test_rejects(self, a, b, M):
        with pytest.raises(InvalidInputError):
            Grid1D(a, b, M)

    def test_parse(self):
        assert Grid1D.parse("-8:8:1024") == G
        with pytest.raises(InvalidInputError):
            Grid1D.parse("0:1")


class TestDensity:
    def test_rejects_negative_and_unnormalised(self):
        g = Grid1D(0.0, 1.0, 8)
        with pytest.raises(InvalidInputError):
            Density1D(g, -np.ones(8))
        with pytest.raises(InvalidInputError):
            Density1D(g, 2 * np.ones(8))
        with pytest.raises(InvalidInputError):
            Density1D(g, np.ones(7))

    def test_values_are_read_only(self):
        rho = Density1D.gaussian(G)
        with pytest.raises(ValueError):
            rho.values[0] = 1.0

    def test_uniform_quantile_is_identity(self):
        rho = Density1D.uniform(Grid1D(0.0, 1.0, 64))
        assert rho.quantile(0.5) == pytest.approx(0.5)
        assert np.allclose(rho.quantile([0.1, 0.73]), [0.1, 0.73])

    def test_uniform_partial_cells(self):
        rho = Density1D.uniform(Grid1D(0.0, 4.0, 16), 0.6, 2.3)
        assert rho.mass == pytest.approx(1.0, abs=1e-14)
        # cells of width 1/4: [0.5, 0.75] is 60% covered, [2.25, 2.5] 20%
        expect = np.zeros(16)
        expect[3:9] = 1.0
        expect[2], expect[9] = 0.6, 0.2
        assert np.allclose(rho.values, expect / 1.7, atol=1e-14)

    def test_cdf_quantile_roundtrip(self):
        rho = Density1D.gaussian(G, 0.3, 2.0)
        u = np.linspace(0.01, 0.99, 50)
        assert np.allclose(rho.cdf(rho.quantile(u)), u, atol=1e-12)


class TestSamplesAndMoments:
    def test_histogram_split(self):
        # grids need M >= 8, so the two-point split lands in cells 0 and 4
        ens = ParticleEnsemble(np.array([0.1, 0.1, 0.6, 0.6]))
        rho = build_density_from_samples(ens, Grid1D(0.0, 1.0, 8))
        assert np.allclose(rho.values, [4, 0, 0, 0, 4, 0, 0, 0])

    def test_histogram_out_of_domain(self):
        with pytest.raises(OutOfDomainError, match="9.5"):
            build_density_from_samples(ParticleEnsemble(np.array([0.0, 9.5])), G)

    def test_histogram_gaussian(self):
        # finite-sample L1 of a 512-bin histogram at N = 1e5 concentrates near
        # sqrt(2 / (pi N h)) * int sqrt(rho) ~ 0.032, so 0.04 is the honest bound
        g = Grid1D(-8.0, 8.0, 512)
        ens = ParticleEnsemble(_rng.normals(42, 0, 100_000, stream=_rng.SAMPLING))
        rho = build_density_from_samples(ens, g)
        assert rho.mass == pytest.approx(1.0, abs=1e-12)
        assert rho.l1_distance(Density1D.gaussian(g)) <= 0.04

    def test_sampling_moments_and_determinism(self):
        rho = Density1D.gaussian(G)
        a = sample_from_density(rho, 100_000, seed=3)
        b = sample_from_density(rho, 100_000, seed=3)
        assert np.array_equal(a.positions, b.positions)
        assert abs(a.mean()) <= 0.02
        assert 0.97 <= a.variance() <= 1.03

    def test_sampling_prefix_independent_of_n(self):
        rho = Density1D.gaussian(G)
        assert np.array_equal(sample_from_density(rho, 10, 5).positions, sample_from_density(rho, 1000, 5).positions[:10])

    def test_round_trip(self):
        g = Grid1D(-8.0, 8.0, 512)
        rho = Density1D.gaussian(g, 0.5, 1.5)
        back = build_density_from_samples(sample_from_density(rho, 100_000, seed=1), g)
        assert rho.l1_distance(back) <= 0.05

    def test_moments(self):
        m, v = density_moments(Density1D.gaussian(G))
        assert abs(m) <= 1e-6 and v == pytest.approx(1.0, abs=1e-3)
        m, v = density_moments(Density1D.uniform(Grid1D(0.0, 1.0, 256)))
        assert m == pytest.approx(0.5) and v == pytest.approx(1 / 12, abs=1e-4)

    def test_moments_second_order_in_h(self):
        # truncated exponential: not negligible at the walls, so the midpoint
        # error is a genuine h^2 term
        f = lambda x: np.exp(-x)
        vals = []
        for M in (64, 128, 256):
            g = Grid1D(0.0, 4.0, M)
            vals.append(density_moments(Density1D.from_function(g, f))[1])
        d1, d2 = abs(vals[0] - vals[1]), abs(vals[1] - vals[2])
        assert d1 <= 4 * d2 + 1e-15


class TestTangentAndMaps:
    def test_tangent_needs_zero_integral(self):
        with pytest.raises(InvalidInputError):
            TangentVector1D(G, np.ones(G.M))
        s = TangentVector1D(G, np.zeros(G.M))
        assert np.all((2 * s + s).values == 0)

    def test_map_monotone(self):
        with pytest.raises(MonotonicityError):
            TransportMap1D(G, -G.centers)
        T = TransportMap1D.from_function(G, lambda x: 2 * x + 1)
        assert T(0.25) == pytest.approx(1.5)
        assert T(G.b + 1) == pytest.approx(2 * (G.b + 1) + 1)


class TestSchedules:
    def test_vp_defaults(self):
        s = DiffusionSchedule.vp(0.5)
        assert s.D(1.0) == 0.5 and s.grad_psi(2.0, 0.0) == 1.0
        assert s.sigma(1.0) == pytest.approx(1.0)

    def test_ve_needs_nondecreasing_alpha(self):
        with pytest.raises(InvalidScheduleError):
            DiffusionSchedule("VE_SDE", D=lambda t: np.ones_like(t), alpha=lambda t: -t)

    def test_ode_has_zero_diffusion(self):
        with pytest.raises(InvalidScheduleError):
            DiffusionSchedule("ODE", D=lambda t: np.ones_like(np.asarray(t, dtype=float)), drift=lambda x, t: x)
        with pytest.raises(InvalidScheduleError):
            DiffusionSchedule("ODE")

    def test_negative_diffusion(self):
        with pytest.raises(InvalidScheduleError):
            DiffusionSchedule.vp(1.0, D=-1.0)

    def test_potential(self):
        p = PotentialSpec.quadratic(2.0)
        assert p.psi(1.0) == 1.0 and p.grad_psi(1.0) == 2.0 and p.hess(0.3) == 2.0


class TestFields:
    def test_named(self):
        f, g = named_field("neg-sine")
        assert g.a == pytest.approx(-np.pi)
        assert f.lipschitz == pytest.approx(1.0, abs=1e-3)
        with pytest.raises(InvalidInputError):
            named_field("nope")

    def test_constant_and_linear(self):
        assert VelocityField1D.constant(3.0)(np.zeros(3)).tolist() == [3.0] * 3
        assert VelocityField1D.linear(2.0).lipschitz == 2.0


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**63), start=st.integers(0, 10_000), n=st.integers(1, 50))
def test_rng_is_counter_based(seed, start, n):
    whole = _rng.uniforms(seed, 0, start + n)
    assert np.array_equal(_rng.uniforms(seed, start, n), whole[start:])
    assert np.all((whole > 0) & (whole < 1))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-7.9, 7.9), min_size=1, max_size=200))
def test_histogram_is_normalised(xs):
    rho = build_density_from_samples(ParticleEnsemble(np.array(xs)), Grid1D(-8.0, 8.0, 64))
    assert rho.mass == pytest.approx(1.0, abs=1e-12)
    assert np.all(rho.values >= 0)
