"""Free energy D * int rho log rho + int rho psi and its Wasserstein geometry.

Sign note on the KL form: with rho_inf = exp(-psi/D) / Z, substitution gives

    E(rho) = D * (KL(rho || rho_inf) - log Z),

so along any Fokker-Planck trajectory ``E - D * KL`` stays at ``-D log Z``.
Writing the constant as ``+D log Z`` is a sign slip; the code and the tests use
``-D log Z``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.linalg import solve_banded

from . import _flux
from .errors import (
    ConvergenceError,
    DegenerateDensityError,
    InsufficientDataError,
    InvalidInputError,
    NormalizationError,
    SupportMismatchError,
)
from .measures import Density1D, Grid1D, PotentialSpec, TangentVector1D, _check_same_grid

KL_FLOOR = 1e-300
RHO_FLOOR = 1e-12


@dataclass(frozen=True)
class EnergyBreakdown:
    entropy_term: float
    potential_term: float
    total: float
    D: float


def entropy_term(rho: Density1D) -> float:
    """h * sum p log p with 0 log 0 = 0."""
    p = rho.values
    pos = p > 0
    return float(rho.grid.h * np.sum(p[pos] * np.log(p[pos])))


def potential_term(rho: Density1D, pot: PotentialSpec) -> float:
    return float(rho.grid.h * np.sum(rho.values * pot.psi(rho.x)))


def free_energy(rho: Density1D, D: float, pot: PotentialSpec) -> EnergyBreakdown:
    if D < 0:
        raise InvalidInputError("diffusivity must be nonnegative")
    ent = entropy_term(rho)
    ptl = potential_term(rho, pot)
    return EnergyBreakdown(ent, ptl, D * ent + ptl, float(D))


def partition_constant(pot: PotentialSpec, D: float, grid: Grid1D) -> float:
    """Z = int exp(-psi / D) by the midpoint rule."""
    if D <= 0:
        raise InvalidInputError("the partition constant needs D > 0")
    with np.errstate(over="ignore"):
        Z = grid.h * np.sum(np.exp(-pot.psi(grid.centers) / D))
    if not np.isfinite(Z) or Z <= 0:
        raise NormalizationError(f"exp(-psi/D) is not integrable on the grid (Z = {Z})")
    return float(Z)


def stationary_density(pot: PotentialSpec, D: float, grid: Grid1D) -> Density1D:
    """Boltzmann law exp(-psi / D) / Z on the grid."""
    Z = partition_constant(pot, D, grid)
    psi = pot.psi(grid.centers)
    # shift before exponentiating; Z carries the same factor
    shift = psi.min()
    w = np.exp(-(psi - shift) / D)
    return Density1D.normalize(grid, w)


def kl_divergence(rho: Density1D, sigma: Density1D) -> float:
    _check_same_grid(rho, sigma)
    p, q = rho.values, sigma.values
    pos = p > 0
    if np.any(q[pos] <= 0):
        i = int(np.flatnonzero(pos & (q <= 0))[0])
        raise SupportMismatchError(f"reference density vanishes at x={rho.x[i]:.6g} where rho > 0")
    qf = np.maximum(q[pos], KL_FLOOR)
    return float(rho.grid.h * np.sum(p[pos] * np.log(p[pos] / qf)))


# ---------------------------------------------------------------------------
# tangent space


def _edge_fluxes(s: np.ndarray, h: float, rho: np.ndarray) -> np.ndarray:
    """Interior-edge primitive S(k) = h * sum_{j<k} s_j.

    Summed from the left below the median cell and from the right above it so
    the tails keep relative accuracy.
    """
    left = h * np.cumsum(s)[:-1]
    right = -h * np.cumsum(s[::-1])[::-1][1:]
    cdf = np.cumsum(rho)
    split = np.searchsorted(cdf, 0.5 * cdf[-1])
    k = np.arange(s.size - 1)
    return np.where(k < split, left, right)


def wasserstein_scalar_product(s1: TangentVector1D, s2: TangentVector1D, rho: Density1D) -> float:
    """<s1, s2>_rho = int rho phi1' phi2' where s_i = (rho phi_i')'.

    In one dimension rho phi_i' is the primitive of s_i, so no elliptic solve is
    needed. Edges where rho drops below 1e-12 are skipped; if they carry more
    than a 1e-6 share of the flux the density is treated as degenerate.
    """
    if s1.grid != rho.grid or s2.grid != rho.grid:
        raise InvalidInputError("tangent vectors and density must share a grid")
    h = rho.grid.h
    S1 = _edge_fluxes(s1.values, h, rho.values)
    S2 = S1 if s2 is s1 else _edge_fluxes(s2.values, h, rho.values)
    r = 0.5 * (rho.values[:-1] + rho.values[1:])
    ok = r > RHO_FLOOR
    flux = np.abs(S1) + np.abs(S2)
    total = flux.sum()
    if total == 0.0:
        return 0.0
    lost = flux[~ok].sum()
    if lost > 1e-6 * total:
        raise DegenerateDensityError(
            f"tangent carries flux {lost:.3g} through cells where rho < {RHO_FLOOR}"
        )
    return float(h * np.sum(S1[ok] * S2[ok] / r[ok]))


def tangent_norm_sq(s: TangentVector1D, rho: Density1D) -> float:
    """Squared tangent norm: the minimal kinetic energy int rho v^2 moving rho along s."""
    return wasserstein_scalar_product(s, s, rho)


def fp_coefficients(grid: Grid1D, D: float, pot: PotentialSpec):
    return _flux.sg_coefficients(grid, D, pot.psi(grid.centers))


def wasserstein_gradient_E(rho: Density1D, D: float, pot: PotentialSpec) -> TangentVector1D:
    """grad E = -((D rho' + rho psi'))' in conservative flux form."""
    if D < 0:
        raise InvalidInputError("diffusivity must be nonnegative")
    cp, cm = fp_coefficients(rho.grid, D, pot)
    J = _flux.interior_fluxes(rho.values, cp, cm)
    return TangentVector1D(rho.grid, _flux.divergence(J, rho.grid.h))


def _snapshots(trajectory):
    if hasattr(trajectory, "times") and hasattr(trajectory, "densities"):
        return list(trajectory.times), list(trajectory.densities)
    pairs = list(trajectory)
    return [t for t, _ in pairs], [r for _, r in pairs]


def dissipation_residual(trajectory, D: float, pot: PotentialSpec) -> np.ndarray:
    """dE/dt + ||d rho / dt||^2 at each interior snapshot, by central differences."""
    times, dens = _snapshots(trajectory)
    if len(dens) < 3:
        raise InsufficientDataError("need at least three snapshots")
    times = np.asarray(times, dtype=float)
    dts = np.diff(times)
    dt = dts.mean()
    if np.any(np.abs(dts - dt) > 1e-9 * max(1.0, abs(dt))):
        raise InvalidInputError("snapshots must be uniformly spaced in time")
    E = np.array([free_energy(r, D, pot).total for r in dens])
    out = np.empty(len(dens) - 2)
    for k in range(1, len(dens) - 1):
        dEdt = (E[k + 1] - E[k - 1]) / (2 * dt)
        s = TangentVector1D(dens[k].grid, (dens[k + 1].values - dens[k - 1].values) / (2 * dt))
        out[k - 1] = dEdt + tangent_norm_sq(s, dens[k])
    return out


def energy_trace(trajectory, D: float, pot: PotentialSpec):
    """Rows (t, entropy, potential, total, KL to stationary, dissipation residual).

    The residual is NaN at the first and last snapshot.
    """
    times, dens = _snapshots(trajectory)
    rows = []
    rho_inf = stationary_density(pot, D, dens[0].grid) if D > 0 else None
    resid = np.full(len(dens), np.nan)
    if len(dens) >= 3:
        try:
            resid[1:-1] = dissipation_residual(list(zip(times, dens)), D, pot)
        except InvalidInputError:
            pass
    for k, (t, r) in enumerate(zip(times, dens)):
        b = free_energy(r, D, pot)
        kl = kl_divergence(r, rho_inf) if rho_inf is not None else np.nan
        rows.append((float(t), b.entropy_term, b.potential_term, b.total, kl, float(resid[k])))
    return rows


# ---------------------------------------------------------------------------
# minimizing movement


@dataclass(frozen=True)
class JKOResult:
    density: Density1D
    knots: np.ndarray
    map_values: np.ndarray
    objective: float
    initial_objective: float
    iterations: int


def _knot_edges(rho: Density1D, n_knots: int) -> np.ndarray:
    """Cell-edge indices at the quantiles k / n_knots of rho, plus both ends."""
    F = rho.cdf_edges()
    u = np.arange(1, n_knots) / n_knots
    idx = np.searchsorted(F, u)
    return np.unique(np.concatenate(([0], idx, [rho.grid.M])))


class _JKOProblem:
    """Objective over piecewise-linear monotone maps T with T(a) = a, T(b) = b:

        D (H(rho) - sum_i m_i log T'(x_i)) + sum_i m_i (psi(T x_i) + (T x_i - x_i)^2 / (2 tau))

    which equals E(T#rho) + W2^2(T#rho, rho) / (2 tau) for the cell-constant rho.
    Setting ``anchor`` to S(x_i) for an earlier monotone map S replaces the
    transport term by W2^2(T#rho, S#rho), which is how several steps are chained
    without leaving the mass coordinates of the first density.
    """

    def __init__(self, rho, tau, D, pot, n_knots, anchor=None):
        g = rho.grid
        self.rho, self.tau, self.D, self.pot = rho, tau, D, pot
        self.kidx = _knot_edges(rho, n_knots)
        self.xi = g.edges[self.kidx]
        self.x = g.centers
        self.m = g.h * rho.values
        cell = np.arange(g.M)
        self.seg = np.searchsorted(self.kidx, cell, side="right") - 1
        self.lam = (self.x - self.xi[self.seg]) / (self.xi[self.seg + 1] - self.xi[self.seg])
        self.dxi = np.diff(self.xi)
        self.w = np.bincount(self.seg, weights=self.m, minlength=self.dxi.size)
        self.H0 = entropy_term(rho)
        self.nk = self.xi.size
        self.anchor = self.x if anchor is None else anchor

    def evaluate(self, T):
        y = T[self.seg] + self.lam * (T[self.seg + 1] - T[self.seg])
        return y

    def objective(self, T):
        s = np.diff(T) / self.dxi
        if np.any(s <= 0):
            return np.inf
        y = self.evaluate(T)
        pos = self.w > 0
        ent = self.H0 - np.sum(self.w[pos] * np.log(s[pos]))
        return self.D * ent + np.sum(self.m * (self.pot.psi(y) + (y - self.anchor) ** 2 / (2 * self.tau)))

    def derivatives(self, T):
        """Gradient and tridiagonal Hessian (diag, off) in the knot values."""
        nk = self.nk
        s = np.diff(T) / self.dxi
        y = self.evaluate(T)
        grad = np.zeros(nk)
        diag = np.zeros(nk)
        off = np.zeros(nk - 1)
        # entropy part
        a = self.D * self.w / (s * self.dxi)
        grad[:-1] += a
        grad[1:] -= a
        b = self.D * self.w / (s * self.dxi) ** 2
        diag[:-1] += b
        diag[1:] += b
        off -= b
        # potential and transport parts
        g1 = self.m * (self.pot.grad_psi(y) + (y - self.anchor) / self.tau)
        g2 = self.m * (np.maximum(self.pot.hess(y), 0.0) + 1.0 / self.tau)
        l0, l1 = 1.0 - self.lam, self.lam
        grad += np.bincount(self.seg, weights=l0 * g1, minlength=nk)
        grad += np.bincount(self.seg + 1, weights=l1 * g1, minlength=nk)
        diag += np.bincount(self.seg, weights=l0 * l0 * g2, minlength=nk)
        diag += np.bincount(self.seg + 1, weights=l1 * l1 * g2, minlength=nk)
        off += np.bincount(self.seg, weights=l0 * l1 * g2, minlength=nk - 1)[: nk - 1]
        return grad, diag, off


def _minimize(prob, T, rtol, max_iter):
    J0 = J = prob.objective(T)
    for it in range(1, max_iter + 1):
        grad, diag, off = prob.derivatives(T)
        # pinned end knots
        g = grad[1:-1]
        d = diag[1:-1]
        d = d + 1e-12 * max(d.max(), 1e-300)
        o = off[1:-1]
        ab = np.zeros((3, d.size))
        ab[0, 1:] = o
        ab[1] = d
        ab[2, :-1] = o
        p = np.zeros_like(T)
        p[1:-1] = -solve_banded((1, 1), ab, g)
        slope = float(grad @ p)
        if slope >= 0:
            p = -grad
            p[0] = p[-1] = 0.0
            slope = float(grad @ p)
        step = 1.0
        for _ in range(60):
            Jn = prob.objective(T + step * p)
            if Jn <= J + 1e-4 * step * slope:
                break
            step *= 0.5
        else:
            # no decrease left at working precision
            break
        T = T + step * p
        change = J - Jn
        J = Jn
        if change <= rtol * max(1.0, abs(J)):
            break
    else:
        raise ConvergenceError(f"JKO step did not converge in {max_iter} iterations", J)
    return T, J, J0, it


def _pushforward(rho, xi, T):
    # a monotone cubic CDF keeps the regridding error second order in h
    g = rho.grid
    F = PchipInterpolator(g.edges, rho.cdf_edges())(np.interp(g.edges, T, xi))
    return Density1D.normalize(g, np.clip(np.diff(F), 0.0, None) / g.h)


def jko_solve(
    rho_prev: Density1D,
    tau: float,
    D: float,
    pot: PotentialSpec,
    n_knots: int = 256,
    rtol: float = 1e-8,
    max_iter: int = 500,
) -> JKOResult:
    """One minimizing-movement step, argmin E(rho) + W2^2(rho, rho_prev) / (2 tau).

    Candidates are pushforwards of rho_prev by monotone piecewise-linear maps
    with knots at the quantiles of rho_prev. The convex objective is descended
    with damped Newton steps (tridiagonal Hessian) and Armijo backtracking;
    steps that would break strict monotonicity are rejected.
    """
    if tau <= 0:
        raise InvalidInputError("tau must be positive")
    if D < 0:
        raise InvalidInputError("diffusivity must be nonnegative")
    prob = _JKOProblem(rho_prev, tau, D, pot, n_knots)
    T, J, J0, it = _minimize(prob, prob.xi.copy(), rtol, max_iter)
    # exact pushforward of the cell-constant density under the piecewise-linear map
    return JKOResult(_pushforward(rho_prev, prob.xi, T), prob.xi, T, float(J), float(J0), it)


def jko_step(rho_prev: Density1D, tau: float, D: float, pot: PotentialSpec, **kwargs) -> Density1D:
    return jko_solve(rho_prev, tau, D, pot, **kwargs).density


def jko_flow(
    rho0: Density1D,
    tau: float,
    n_steps: int,
    D: float,
    pot: PotentialSpec,
    n_knots: int = 1024,
    rtol: float = 1e-10,
    max_iter: int = 500,
    save_every: int = 1,
):
    """``n_steps`` chained minimizing-movement steps from rho0.

    Every iterate is kept as S_k#rho0 with S_k piecewise linear on rho0's
    quantile knots, so the grid is only used to report snapshots and no
    averaging error builds up from step to step. Returns an EulerianTrajectory.
    """
    from .eulerian import EulerianTrajectory

    if n_steps < 1:
        raise InvalidInputError("n_steps must be at least 1")
    if tau <= 0:
        raise InvalidInputError("tau must be positive")
    if D < 0:
        raise InvalidInputError("diffusivity must be nonnegative")
    prob = _JKOProblem(rho0, tau, D, pot, n_knots)
    T = prob.xi.copy()
    times, dens = [0.0], [rho0]
    for k in range(1, n_steps + 1):
        prob.anchor = prob.evaluate(T)
        T, _, _, _ = _minimize(prob, T, rtol, max_iter)
        if k % save_every == 0 or k == n_steps:
            times.append(k * tau)
            dens.append(_pushforward(rho0, prob.xi, T))
    return EulerianTrajectory(np.array(times), dens)


def jko_objective(rho: Density1D, rho_prev: Density1D, tau: float, D: float, pot: PotentialSpec) -> float:
    """E(rho) + W2^2(rho, rho_prev) / (2 tau) evaluated on grid densities."""
    from .transport import w2_distance

    return free_energy(rho, D, pot).total + w2_distance(rho, rho_prev) ** 2 / (2 * tau)
