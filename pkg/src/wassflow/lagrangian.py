"""Particle simulators: Ito process, DDPM chain, probability-flow ODE, characteristics.

Noise for step k of an ensemble of N particles is draws k N .. (k+1) N - 1 of the
counter-based stream keyed by the seed, so the DDPM chain and the VP
Euler-Maruyama scheme driven by the same seed see the same increments.

The probability-flow ODE moves particles with

    dx/dt = -psi'(x, t) - D(t) d/dx log rho_t(x),

whose continuity equation is the Fokker-Planck equation used by the grid
solver; integrating it with t_end < start time runs the same flow backwards.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _rng
from .errors import InvalidInputError, InvalidScheduleError, LowDensityError, WrongPatternError
from .measures import Density1D, DiffusionSchedule, ParticleEnsemble, VelocityField1D

SCORE_FLOOR = 1e-12


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    positions: np.ndarray  # shape (n_times, n_particles)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        p = np.asarray(self.positions, dtype=float)
        if p.ndim == 1:
            p = p[:, None]
        if p.shape[0] != t.size:
            raise InvalidInputError("times and positions differ in length")
        if not np.all(np.isfinite(p)):
            raise InvalidInputError("trajectory positions must be finite")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "positions", p)

    @property
    def final(self) -> np.ndarray:
        return self.positions[-1]


def _n_steps(span, dt):
    if dt <= 0:
        raise InvalidInputError("dt must be positive")
    return max(1, int(np.ceil(abs(span) / dt - 1e-9)))


def simulate_sde(ens0: ParticleEnsemble, sched: DiffusionSchedule, t_end: float, dt: float, seed: int = 0) -> ParticleEnsemble:
    """Euler-Maruyama for dX = -psi'(X, t) dt + sqrt(2 D(t)) dW from ens0.time to t_end."""
    if sched.pattern == "ODE":
        raise WrongPatternError("the ODE pattern has no noise; use simulate_probability_flow_ode")
    t0 = ens0.time
    if t_end <= t0:
        raise InvalidInputError("t_end must exceed the ensemble time")
    n = _n_steps(t_end - t0, dt)
    h = (t_end - t0) / n
    x = np.array(ens0.positions)
    N = x.size
    for k in range(n):
        t = t0 + k * h
        xi = _rng.normals(seed, k * N, N)
        x = x - sched.grad_psi(x, t) * h + np.sqrt(2.0 * sched.D(t) * h) * xi
    return ParticleEnsemble(x, t_end)


def ddpm_chain(ens0: ParticleEnsemble, betas: Sequence[float], seed: int = 0) -> ParticleEnsemble:
    """x_k = sqrt(1 - 2 beta_k) x_{k-1} + sqrt(2 beta_k) xi_k.

    The returned ensemble's time is the input time plus the number of steps.
    """
    betas = np.atleast_1d(np.asarray(betas, dtype=float))
    if betas.size == 0:
        raise InvalidScheduleError("empty beta schedule")
    bad = (betas <= 0) | (betas >= 0.5) | ~np.isfinite(betas)
    if np.any(bad):
        raise InvalidScheduleError(f"beta must lie in (0, 0.5); got {betas[bad][0]}")
    x = np.array(ens0.positions)
    N = x.size
    for k, b in enumerate(betas):
        xi = _rng.normals(seed, k * N, N)
        x = np.sqrt(1.0 - 2.0 * b) * x + np.sqrt(2.0 * b) * xi
    return ParticleEnsemble(x, ens0.time + betas.size)


# ---------------------------------------------------------------------------
# scores


class ScoreField:
    """d/dx log rho on a grid, linearly interpolated between cell centres.

    Central differences inside, one-sided at the two end cells. A query is
    valid only when both bracketing centres have valid stencils.
    """

    def __init__(self, rho: Density1D, floor: float = SCORE_FLOOR):
        g = rho.grid
        self.grid = g
        p = rho.values
        ok = p > floor
        logp = np.log(np.where(ok, p, 1.0))
        s = np.empty(g.M)
        s[1:-1] = (logp[2:] - logp[:-2]) / (2 * g.h)
        s[0] = (logp[1] - logp[0]) / g.h
        s[-1] = (logp[-1] - logp[-2]) / g.h
        valid = ok.copy()
        valid[1:-1] &= ok[2:] & ok[:-2]
        valid[0] &= ok[1]
        valid[-1] &= ok[-2]
        self.values = s
        self.valid = valid

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        g = self.grid
        outside = (x < g.a) | (x > g.b)
        if np.any(outside):
            i = int(np.flatnonzero(outside)[0])
            raise LowDensityError(f"particle {i} at x={x[i]:.6g} left the grid", particle=i)
        xc = g.centers
        j = np.clip(np.searchsorted(xc, x) - 1, 0, g.M - 1)
        j1 = np.minimum(j + 1, g.M - 1)
        bad = ~(self.valid[j] & self.valid[j1])
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise LowDensityError(f"density below {SCORE_FLOOR} near particle {i} at x={x[i]:.6g}", particle=i)
        return np.interp(x, xc, self.values)


def exact_score(rho: Density1D, x=None) -> np.ndarray:
    """Score of a grid density at ``x`` (default: every cell centre)."""
    field = ScoreField(rho)
    return field(rho.x if x is None else x)


class _ScoreSource:
    def __init__(self, source):
        if hasattr(source, "times") and hasattr(source, "densities"):
            pairs = list(zip(source.times, source.densities))
        else:
            pairs = list(source)
        if not pairs:
            raise InvalidInputError("empty score source")
        pairs.sort(key=lambda p: p[0])
        self.times = np.array([float(t) for t, _ in pairs])
        self.fields = [ScoreField(r) for _, r in pairs]

    def __call__(self, x, t):
        ts = self.times
        tol = 1e-9 * max(1.0, abs(ts[-1]))
        if t < ts[0] - tol or t > ts[-1] + tol:
            raise InvalidInputError(f"score source covers [{ts[0]}, {ts[-1]}], queried at t={t}")
        if ts.size == 1:
            return self.fields[0](x)
        k = int(np.clip(np.searchsorted(ts, t) - 1, 0, ts.size - 2))
        w = np.clip((t - ts[k]) / (ts[k + 1] - ts[k]), 0.0, 1.0)
        if w == 0.0:
            return self.fields[k](x)
        if w == 1.0:
            return self.fields[k + 1](x)
        return (1.0 - w) * self.fields[k](x) + w * self.fields[k + 1](x)


def _rk4(f, x, t0, t1, n):
    h = (t1 - t0) / n
    for k in range(n):
        t = t0 + k * h
        k1 = f(x, t)
        k2 = f(x + 0.5 * h * k1, t + 0.5 * h)
        k3 = f(x + 0.5 * h * k2, t + 0.5 * h)
        k4 = f(x + h * k3, t + h)
        x = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


def simulate_probability_flow_ode(
    ens0: ParticleEnsemble,
    sched: DiffusionSchedule,
    score_source,
    t_end: float,
    dt: float,
) -> ParticleEnsemble:
    """RK4 for the deterministic flow sharing the Fokker-Planck marginals.

    ``score_source`` is a sequence of (time, Density1D) or a trajectory from
    ``fp_evolve``; scores are interpolated linearly in time and space. It may be
    None for the ODE pattern or when D vanishes.
    """
    t0 = ens0.time
    if t_end == t0:
        return ens0
    n = _n_steps(t_end - t0, dt)
    if sched.pattern == "ODE":
        def velocity(x, t):
            return np.asarray(sched.drift(x, t), dtype=float) * np.ones_like(x)
    else:
        score = _ScoreSource(score_source) if score_source is not None else None

        def velocity(x, t):
            d = float(sched.D(t))
            v = -sched.grad_psi(x, t)
            if d == 0.0:
                return v
            if score is None:
                raise InvalidInputError("a score source is required when D > 0")
            return v - d * score(x, t)

    return ParticleEnsemble(_rk4(velocity, np.array(ens0.positions), t0, t_end, n), t_end)


def trace_characteristics(v: VelocityField1D, x0, t_end: float, dt: float, t0: float = 0.0) -> Trajectory:
    """RK4 paths of d gamma/dt = v(gamma, t), recorded at every step."""
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    n = _n_steps(t_end - t0, dt)
    h = (t_end - t0) / n
    times = t0 + h * np.arange(n + 1)
    out = np.empty((n + 1, x.size))
    out[0] = x
    for k in range(n):
        x = _rk4(v, x, times[k], times[k + 1], 1)
        out[k + 1] = x
    return Trajectory(times, out)
