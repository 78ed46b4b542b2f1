"""Grid solvers: Fokker-Planck, continuity transport, pressureless Burgers.

Sign convention: the Fokker-Planck equation is

    d rho / dt = (D rho' + rho psi')'

so particles drift with velocity -psi'(x) plus noise of variance 2 D dt.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import _flux
from .errors import InvalidInputError, MonotonicityError, ShockEncounteredError, StabilityError
from .measures import Density1D, Grid1D, PotentialSpec, TransportMap1D, VelocityField1D

CFL = 0.9


@dataclass(frozen=True)
class EulerianTrajectory:
    times: np.ndarray
    densities: Sequence[Density1D]
    velocities: Optional[Sequence[np.ndarray]] = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.size != len(self.densities):
            raise InvalidInputError("times and densities differ in length")
        if np.any(np.diff(t) <= 0):
            raise InvalidInputError("trajectory times must be strictly increasing")
        if self.velocities is not None and len(self.velocities) != t.size:
            raise InvalidInputError("times and velocities differ in length")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "densities", tuple(self.densities))
        if self.velocities is not None:
            object.__setattr__(self, "velocities", tuple(np.asarray(v, dtype=float) for v in self.velocities))

    def __len__(self):
        return self.times.size

    def __iter__(self):
        return iter(zip(self.times, self.densities))

    @property
    def final(self) -> Density1D:
        return self.densities[-1]


@dataclass(frozen=True)
class ShockReport:
    shock_detected: bool
    shock_time: Optional[float]
    crossing: Optional[tuple]
    predicted_time: float

    def to_json(self):
        x1, x2 = self.crossing if self.crossing else (None, None)
        pred = self.predicted_time if np.isfinite(self.predicted_time) else None
        return {
            "shock_detected": self.shock_detected,
            "shock_time": self.shock_time,
            "predicted_time": pred,
            "x1": x1,
            "x2": x2,
        }


# ---------------------------------------------------------------------------
# Fokker-Planck


def _as_time_function(D):
    if callable(D):
        return D, True
    d = float(D)
    return (lambda t: d), False


def _as_potential_function(pot):
    if isinstance(pot, PotentialSpec):
        return (lambda t: pot), False
    return pot, True


class FokkerPlanckStepper:
    """Explicit conservative finite-volume stepping with zero-flux boundaries.

    ``D`` is a number or a function of time; ``pot`` is a :class:`PotentialSpec`
    or a function of time returning one.
    """

    def __init__(self, rho0: Density1D, D, pot, dt: float, t0: float = 0.0):
        self.grid = rho0.grid
        self.values = np.array(rho0.values)
        self.t = float(t0)
        self.dt = float(dt)
        self._D, dyn_d = _as_time_function(D)
        self._pot, dyn_p = _as_potential_function(pot)
        self._dynamic = dyn_d or dyn_p
        self._coeffs = None if self._dynamic else self._coefficients(self.t)

    def _coefficients(self, t):
        D = float(self._D(t))
        if D < 0:
            raise InvalidInputError(f"negative diffusivity {D} at t={t}")
        cp, cm = _flux.sg_coefficients(self.grid, D, self._pot(t).psi(self.grid.centers))
        bound = 1.0 / _flux.max_rate(cp, cm, self.grid.h) if np.any(cp + cm > 0) else np.inf
        if self.dt > bound * (1 + 1e-12):
            raise StabilityError(self.dt, bound)
        return cp, cm

    def step(self):
        cp, cm = self._coeffs if not self._dynamic else self._coefficients(self.t)
        J = _flux.interior_fluxes(self.values, cp, cm)
        self.values = self.values - self.dt * _flux.divergence(J, self.grid.h)
        self.t += self.dt
        return self.values

    def density(self) -> Density1D:
        return Density1D(self.grid, self.values)


def stable_dt(grid: Grid1D, D, pot, t_end: float, n_probe: int = 65) -> float:
    """CFL-limited step: CFL / (largest cell outflow rate over the horizon)."""
    Df, _ = _as_time_function(D)
    pf, _ = _as_potential_function(pot)
    rate = 0.0
    for t in np.linspace(0.0, t_end, n_probe):
        cp, cm = _flux.sg_coefficients(grid, float(Df(t)), pf(t).psi(grid.centers))
        rate = max(rate, _flux.max_rate(cp, cm, grid.h))
    return CFL / rate if rate > 0 else t_end


def fp_evolve(
    rho0: Density1D,
    D,
    pot,
    t_end: float,
    dt: Optional[float] = None,
    n_save: int = 100,
) -> EulerianTrajectory:
    """Evolve the Fokker-Planck equation to ``t_end``.

    Snapshots are stored at ``n_save + 1`` uniformly spaced times including
    0 and ``t_end``. With ``dt=None`` the step is chosen automatically and
    rounded down so each snapshot interval holds a whole number of steps.
    """
    if t_end <= 0:
        raise InvalidInputError("t_end must be positive")
    if n_save < 1:
        raise InvalidInputError("n_save must be at least 1")
    if dt is None:
        dt = stable_dt(rho0.grid, D, pot, t_end)
    per_save = max(1, int(np.ceil(t_end / n_save / dt - 1e-9)))
    n_steps = per_save * n_save
    stepper = FokkerPlanckStepper(rho0, D, pot, t_end / n_steps)
    if t_end / n_steps > dt * (1 + 1e-12):
        raise AssertionError("internal step exceeds the requested one")
    times = [0.0]
    dens = [rho0]
    for k in range(1, n_steps + 1):
        stepper.step()
        if k % per_save == 0:
            times.append(k * t_end / n_steps)
            dens.append(stepper.density())
    return EulerianTrajectory(np.array(times), dens)


# ---------------------------------------------------------------------------
# continuity equation


def _upwind_rhs(values, v_edges, h):
    vi = v_edges[1:-1]
    J = np.maximum(vi, 0.0) * values[:-1] + np.minimum(vi, 0.0) * values[1:]
    return -_flux.divergence(J, h)


def continuity_evolve(
    rho0: Density1D,
    v: VelocityField1D,
    t_end: float,
    n_save: int = 10,
    t0: float = 0.0,
) -> EulerianTrajectory:
    """Transport rho0 by d rho/dt + (rho v)' = 0 with first-order upwind fluxes.

    Time stepping is SSP-RK2 with the step limited by the outflow CFL bound.
    Velocities at the snapshot times are stored with the trajectory.
    """
    if t_end <= 0:
        raise InvalidInputError("t_end must be positive")
    grid = rho0.grid
    h = grid.h
    xe = grid.edges

    def edge_velocity(t):
        ve = v(xe, t)
        if not np.all(np.isfinite(ve)):
            raise ShockEncounteredError(t, f"velocity is not finite at t={t:.6g}")
        ve = np.array(ve)
        ve[0] = ve[-1] = 0.0
        return ve

    def rate(ve):
        return max(float(np.max(np.maximum(ve[1:], 0.0) - np.minimum(ve[:-1], 0.0))) / h, 1e-300)

    save_times = t0 + np.linspace(0.0, t_end, n_save + 1)
    u = np.array(rho0.values)
    t = float(t0)
    times, dens, vels = [t], [rho0], [v(grid.centers, t)]
    for target in save_times[1:]:
        while t < target - 1e-14 * max(1.0, abs(target)):
            ve = edge_velocity(t)
            dt = min(CFL / rate(ve), target - t)
            if dt <= 1e-10 * max(1.0, abs(t)) and dt < target - t:
                # the stable step collapses: the field steepens without bound
                raise ShockEncounteredError(t, f"velocity gradient blows up near t={t:.6g}")
            u1 = u + dt * _upwind_rhs(u, ve, h)
            ve1 = edge_velocity(t + dt)
            if dt * rate(ve1) > 1.0 + 1e-12:
                dt = 0.5 * dt
                continue
            u = 0.5 * u + 0.5 * (u1 + dt * _upwind_rhs(u1, ve1, h))
            t += dt
        t = float(target)
        times.append(t)
        dens.append(Density1D(grid, u))
        vels.append(v(grid.centers, t))
    return EulerianTrajectory(np.array(times), dens, vels)


# ---------------------------------------------------------------------------
# pressureless Burgers by characteristics


def _preimage(v0: Callable, t: float, x: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Solve y + t v0(y) = x for each x by bracketing and bisection."""
    x = np.asarray(x, dtype=float)
    if t == 0:
        return x.copy()

    def g(y):
        return y + t * v0(y, 0.0)

    width = 1.0 + np.abs(t * v0(x, 0.0))
    lo = x - width
    hi = x + width
    for _ in range(200):
        bad = g(lo) > x
        if not bad.any():
            break
        lo = np.where(bad, lo - width, lo)
        width = np.where(bad, 2 * width, width)
    width = 1.0 + np.abs(t * v0(x, 0.0))
    for _ in range(200):
        bad = g(hi) < x
        if not bad.any():
            break
        hi = np.where(bad, hi + width, hi)
        width = np.where(bad, 2 * width, width)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        below = g(mid) < x
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.max(hi - lo) <= tol:
            break
    return 0.5 * (lo + hi)


def _check_injective(v0: Callable, t: float, lo: float, hi: float, n: int = 4096):
    y = np.linspace(lo, hi, n)
    slope = np.diff(v0(y, 0.0)) / np.diff(y)
    worst = float(np.max(-slope))
    if worst > 0 and t * worst >= 1.0:
        raise ShockEncounteredError(1.0 / worst, f"characteristics cross at t={1.0 / worst:.6g} <= {t:.6g}")


def burgers_evolve(v0: VelocityField1D, t_query: float, grid: Grid1D) -> np.ndarray:
    """v_t on the grid centres: v_t(x) = v0(y) where y + t v0(y) = x."""
    if t_query < 0:
        raise InvalidInputError("t_query must be nonnegative")
    x = grid.centers
    y = _preimage(v0, t_query, x)
    pad = 0.5 * grid.h
    _check_injective(v0, t_query, float(y.min()) - pad, float(y.max()) + pad, max(4 * grid.M, 1024))
    return v0(y, 0.0)


def burgers_field(v0: VelocityField1D, t: float, grid: Optional[Grid1D] = None) -> VelocityField1D:
    """The Burgers solution at time t as a velocity field evaluated exactly off-grid."""
    if grid is not None:
        burgers_evolve(v0, t, grid)  # raises if already past the shock

    def evaluate(x, s=0.0):
        return v0(_preimage(v0, t, x), 0.0)

    lip = v0.lipschitz
    if grid is not None:
        vt = evaluate(grid.centers)
        lip = float(np.max(np.abs(np.diff(vt) / grid.h)))
    return VelocityField1D(evaluate, lip)


def shock_time(v0: VelocityField1D, grid: Grid1D, t_max: float, n_times: int = 1024) -> ShockReport:
    """Predict and detect the first crossing of characteristics x + t v0(x)."""
    if t_max <= 0:
        raise InvalidInputError("t_max must be positive")
    x = grid.centers
    v = v0(x, 0.0)
    steep = float(np.max(-np.diff(v) / np.diff(x)))
    predicted = 1.0 / steep if steep > 0 else np.inf
    ts = np.linspace(0.0, t_max, n_times)
    gaps = np.diff(x)[None, :] + ts[:, None] * np.diff(v)[None, :]
    hit = gaps <= 0
    rows = np.flatnonzero(hit.any(axis=1))
    if rows.size == 0:
        return ShockReport(False, None, None, predicted)
    j = int(rows[0])
    i = int(np.argmax(hit[j]))
    t_shock = 0.5 * (ts[j - 1] + ts[j]) if j > 0 else 0.0
    return ShockReport(True, float(t_shock), (float(x[i]), float(x[i + 1])), predicted)


def pushforward_by_map(mu: Density1D, tmap: TransportMap1D, grid: Optional[Grid1D] = None) -> Density1D:
    """T#mu as cell averages on ``grid`` (default: mu's grid).

    Uses F_{T#mu}(y) = F_mu(T^{-1}(y)) at the target edges, which conserves mass
    exactly and handles flat pieces of T (atoms) without special cases. Mass the
    map sends past either end of the target grid is collected in the end cell,
    matching the zero-flux walls of the grid solvers.
    """
    if tmap.grid != mu.grid:
        raise InvalidInputError("map and density must share a grid")
    target = grid or mu.grid
    Te = tmap.at_edges()
    if np.any(np.diff(Te) < 0):
        raise MonotonicityError("pushforward needs a nondecreasing map")
    x_back = np.interp(target.edges, Te, mu.grid.edges)
    F = mu.cdf(x_back)
    F[0], F[-1] = 0.0, 1.0
    return Density1D.normalize(target, np.clip(np.diff(F), 0.0, None) / target.h)


def lagrangian_map(v0: VelocityField1D, t: float, grid: Grid1D) -> TransportMap1D:
    """zeta_t(x) = x + t v0(x) on the grid centres."""
    x = grid.centers
    return TransportMap1D(grid, x + t * v0(x, 0.0))


def solve_optimality_system(
    mu: Density1D,
    v0: VelocityField1D,
    t_end: float,
    n_save: int = 10,
) -> EulerianTrajectory:
    """Continuity equation driven by the Burgers field that starts from v0."""
    grid = mu.grid
    rep = shock_time(v0, grid, max(t_end, 1e-12))
    if rep.predicted_time <= t_end:
        raise ShockEncounteredError(rep.predicted_time)

    def field(x, t):
        return v0(_preimage(v0, t, x), 0.0)

    steep = 1.0 / rep.predicted_time if np.isfinite(rep.predicted_time) else 0.0
    lip = v0.lipschitz / max(1.0 - t_end * steep, 1e-12)
    traj = continuity_evolve(mu, VelocityField1D(field, lip), t_end, n_save=n_save)
    vels = [burgers_evolve(v0, t, grid) for t in traj.times]
    return EulerianTrajectory(traj.times, traj.densities, vels)
