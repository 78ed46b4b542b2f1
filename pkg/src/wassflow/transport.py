"""Exact one-dimensional optimal transport.

In 1-D the monotone rearrangement T = Q_nu o F_mu is optimal for every strictly
convex cost c(x - y), so no Kantorovich plan is ever formed. Potentials are
carried only through their gradients.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import (
    DegenerateTargetError,
    GrowthError,
    IncompleteTrajectoryError,
    InvalidInputError,
)
from .eulerian import EulerianTrajectory, pushforward_by_map
from .measures import Density1D, Grid1D, TransportMap1D

N_QUANTILES = 4096
_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def quantile_knots(n=N_QUANTILES):
    return (np.arange(n) + 0.5) / n


def quantile_map(mu: Density1D, nu: Density1D) -> TransportMap1D:
    """Monotone rearrangement of mu onto nu, sampled on mu's cell centres."""
    if nu.grid.h * nu.values.max() >= 1.0 - 1e-9:
        raise DegenerateTargetError("target density is concentrated in a single cell")
    return TransportMap1D(mu.grid, nu.quantile(mu.cdf(mu.x)))


def w2_distance(mu: Density1D, nu: Density1D, n_quantiles: int = N_QUANTILES) -> float:
    """(int_0^1 |Q_mu - Q_nu|^2 du)^(1/2) by the midpoint rule in u."""
    u = quantile_knots(n_quantiles)
    d = mu.quantile(u) - nu.quantile(u)
    return float(np.sqrt(np.mean(d * d)))


def _blend(mu: Density1D, tmap: TransportMap1D, t: float) -> TransportMap1D:
    x = mu.x
    return TransportMap1D(mu.grid, (1.0 - t) * x + t * tmap.values)


def displacement_interpolation(mu: Density1D, nu: Density1D, t: float) -> Density1D:
    """[(1 - t) id + t T]# mu on mu's grid."""
    if not 0.0 <= t <= 1.0:
        raise InvalidInputError("t must lie in [0, 1]")
    if t == 0.0:
        return mu
    return pushforward_by_map(mu, _blend(mu, quantile_map(mu, nu), t))


def _eulerian_velocity(grid: Grid1D, zeta_centers: np.ndarray, vel_centers: np.ndarray) -> np.ndarray:
    """Velocity at the grid centres of a flow given in Lagrangian form."""
    return np.interp(grid.centers, zeta_centers, vel_centers)


def geodesic_trajectory(mu: Density1D, nu: Density1D, n_times: int = 32) -> EulerianTrajectory:
    """Displacement interpolation sampled at the time midpoints (k + 1/2) / n."""
    tmap = quantile_map(mu, nu)
    x = mu.x
    times = (np.arange(n_times) + 0.5) / n_times
    dens, vels = [], []
    for t in times:
        blend = _blend(mu, tmap, t)
        dens.append(pushforward_by_map(mu, blend))
        vels.append(_eulerian_velocity(mu.grid, blend.values, tmap.values - x))
    return EulerianTrajectory(times, dens, vels)


def perturbed_trajectory(
    mu: Density1D,
    nu: Density1D,
    eta: Callable,
    eta_dot: Callable,
    bump: Callable,
    n_times: int = 32,
) -> EulerianTrajectory:
    """Admissible path zeta_t = (1-t) x + t T(x) + eta(t) bump(x), eta(0) = eta(1) = 0.

    The caller keeps zeta_t increasing in x; the velocity is d zeta_t / dt read
    back at Eulerian positions.
    """
    tmap = quantile_map(mu, nu)
    x = mu.x
    phi = bump(x)
    times = (np.arange(n_times) + 0.5) / n_times
    dens, vels = [], []
    for t in times:
        zeta = (1.0 - t) * x + t * tmap.values + eta(t) * phi
        m = TransportMap1D(mu.grid, zeta)
        dens.append(pushforward_by_map(mu, m))
        vels.append(_eulerian_velocity(mu.grid, m.values, tmap.values - x + eta_dot(t) * phi))
    return EulerianTrajectory(times, dens, vels)


def benamou_brenier_action(traj: EulerianTrajectory) -> float:
    """int_0^1 int rho v^2 dx dt.

    Each snapshot stands for the part of [0, 1] closer to it than to its
    neighbours, which is the midpoint rule for midpoint samples and the
    trapezoid rule when both endpoints are present.
    """
    if traj.velocities is None:
        raise IncompleteTrajectoryError("the trajectory carries no velocities")
    t = traj.times
    if t[0] < -1e-12 or t[-1] > 1.0 + 1e-12:
        raise InvalidInputError("action is defined for trajectories inside [0, 1]")
    mids = 0.5 * (t[1:] + t[:-1])
    bounds = np.concatenate(([0.0], mids, [1.0]))
    w = np.diff(bounds)
    kinetic = np.array([r.grid.h * np.sum(r.values * v * v) for r, v in zip(traj.densities, traj.velocities)])
    return float(np.sum(w * kinetic))


# ---------------------------------------------------------------------------
# convex costs


@dataclass(frozen=True)
class CostSpec:
    """Convex cost c(z) with c(0) = 0 and optionally its conjugate c*.

    ``p`` marks the power family |z|^p / p, which has closed forms for c*, c'
    and (c*)'.
    """

    c: Callable
    conjugate: Optional[Callable] = None
    p: Optional[float] = None

    def __post_init__(self):
        if abs(float(self.c(0.0))) > 1e-12:
            raise InvalidInputError("cost must vanish at 0")
        z = np.linspace(-4.0, 4.0, 1024)
        cz = np.asarray(self.c(z), dtype=float)
        gap = 0.5 * (cz[:-2] + cz[2:]) - cz[1:-1]
        if np.any(gap < -1e-12 * np.maximum(1.0, np.abs(cz[1:-1]))):
            raise InvalidInputError("cost fails midpoint convexity")
        if self.p is not None and self.p <= 1:
            raise InvalidInputError("power costs need p > 1")
        if self.conjugate is not None or self.p is not None:
            rng = np.random.default_rng(0)
            zs, qs = rng.uniform(-3, 3, 64), rng.uniform(-3, 3, 64)
            fy = self.c(zs) + np.array([legendre_transform(self, q) for q in qs]) - zs * qs
            if np.any(fy < -1e-8):
                raise InvalidInputError("conjugate violates the Fenchel-Young inequality")

    @classmethod
    def power(cls, p: float) -> "CostSpec":
        p = float(p)
        return cls(lambda z: np.abs(z) ** p / p, p=p)

    @classmethod
    def quadratic(cls) -> "CostSpec":
        return cls.power(2.0)

    def gradient(self, z, eps=1e-6):
        z = np.asarray(z, dtype=float)
        if self.p is not None:
            return np.sign(z) * np.abs(z) ** (self.p - 1.0)
        return (self.c(z + eps) - self.c(z - eps)) / (2 * eps)


def _golden_max(f, lo, hi, tol=1e-12, max_iter=300):
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol * max(1.0, abs(a) + abs(b)):
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    z = 0.5 * (a + b)
    return z, f(z)


def legendre_transform(cost: CostSpec, q: float, numeric: bool = False, bound: float = 1e8) -> float:
    """c*(q) = sup_z (q z - c(z)).

    Closed form for the power family unless ``numeric``; otherwise the maximiser
    is bracketed by doubling steps and refined by golden-section search.
    """
    q = float(q)
    if not numeric:
        if cost.p is not None:
            pc = cost.p / (cost.p - 1.0)
            return abs(q) ** pc / pc
        if cost.conjugate is not None:
            return float(cost.conjugate(q))

    def f(z):
        return q * z - float(cost.c(z))

    # walk uphill from 0 until the objective turns down
    direction = 1.0 if f(1e-3) >= f(-1e-3) else -1.0
    prev, cur, step = 0.0, 0.0, 1.0
    fcur = f(cur)
    while True:
        nxt = cur + direction * step
        fn = f(nxt)
        if not np.isfinite(fn) or abs(nxt) > bound:
            raise GrowthError(f"sup_z (q z - c(z)) is unbounded for q={q} within |z| <= {bound:g}")
        if fn < fcur:
            break
        prev, cur, fcur = cur, nxt, fn
        step *= 2.0
    lo, hi = sorted((prev, nxt))
    _, val = _golden_max(f, lo, hi)
    return float(max(val, fcur))


def conjugate_gradient(cost: CostSpec, q, numeric: bool = False):
    """(c*)'(q); equals (c')^{-1}(q)."""
    q = np.asarray(q, dtype=float)
    if cost.p is not None and not numeric:
        return np.sign(q) * np.abs(q) ** (1.0 / (cost.p - 1.0))
    qs = np.atleast_1d(q)
    eps = 1e-4 * np.maximum(1.0, np.abs(qs))
    out = np.array(
        [(legendre_transform(cost, a + e, numeric) - legendre_transform(cost, a - e, numeric)) / (2 * e) for a, e in zip(qs, eps)]
    )
    return out.reshape(q.shape)


def kantorovich_gradient(tmap: TransportMap1D, cost: CostSpec) -> Callable:
    """psi' = c'(x - T(x)), the potential gradient whose flow ends at T."""
    return lambda x: cost.gradient(np.asarray(x, dtype=float) - tmap(x))


def convex_cost_trajectory(x, psi_gradient: Callable, cost: CostSpec, t: float, numeric: bool = False):
    """zeta_t(x) = x - t (c*)'(psi'(x))."""
    if not 0.0 <= t <= 1.0:
        raise InvalidInputError("t must lie in [0, 1]")
    x = np.asarray(x, dtype=float)
    return x - t * conjugate_gradient(cost, psi_gradient(x), numeric)


def path_cost(cost: CostSpec, knots: np.ndarray) -> float:
    """int_0^1 c(d zeta / dt) dt for a piecewise-linear path on uniform knots."""
    knots = np.asarray(knots, dtype=float)
    dt = 1.0 / (knots.size - 1)
    return float(np.sum(dt * cost.c(np.diff(knots) / dt)))


def straight_line_cost_check(cost: CostSpec, x: float, y: float, k: int = 16, n_trials: int = 200, seed: int = 0):
    """Cost of the straight path from x to y and of the cheapest perturbed path.

    Perturbations alternate between sinusoids and random piecewise-linear bumps
    on the k + 1 knots, with endpoints held fixed.
    """
    if k < 8:
        raise InvalidInputError("need at least 8 path knots")
    t = np.linspace(0.0, 1.0, k + 1)
    line = x + t * (y - x)
    line_cost = path_cost(cost, line)
    rng = np.random.default_rng(seed)
    scale = max(abs(y - x), 1.0)
    best = np.inf
    for trial in range(n_trials):
        amp = scale * rng.uniform(0.01, 0.5)
        if trial % 2 == 0:
            m = rng.integers(1, max(2, k // 2))
            bump = np.sin(m * np.pi * t)
        else:
            bump = np.concatenate(([0.0], rng.standard_normal(k - 1), [0.0]))
        best = min(best, path_cost(cost, line + amp * bump))
    return line_cost, float(best)
