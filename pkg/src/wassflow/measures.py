"""Grids, densities, particle ensembles, schedules and potentials.

Densities are cell averages on a uniform grid and every integral is a midpoint
sum, so ``h * values.sum()`` is the total mass. Analytic densities are sampled
at cell centres and normalised with the same midpoint rule.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _rng
from .errors import InvalidInputError, InvalidScheduleError, MonotonicityError, OutOfDomainError

MASS_TOL = 1e-6


def _frozen(a):
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Grid1D:
    a: float
    b: float
    M: int

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b)) or not self.a < self.b:
            raise InvalidInputError(f"grid needs finite a < b, got [{self.a}, {self.b}]")
        if int(self.M) != self.M or self.M < 8:
            raise InvalidInputError(f"grid needs an integer M >= 8, got {self.M}")
        object.__setattr__(self, "M", int(self.M))

    @property
    def h(self) -> float:
        return (self.b - self.a) / self.M

    @property
    def centers(self) -> np.ndarray:
        return self.a + (np.arange(self.M) + 0.5) * self.h

    @property
    def edges(self) -> np.ndarray:
        return self.a + np.arange(self.M + 1) * self.h

    def refine(self, factor=2) -> "Grid1D":
        return Grid1D(self.a, self.b, self.M * factor)

    @classmethod
    def parse(cls, text: str) -> "Grid1D":
        """Parse ``a:b:M``."""
        try:
            a, b, m = text.split(":")
            return cls(float(a), float(b), int(m))
        except ValueError as exc:
            raise InvalidInputError(f"bad grid spec {text!r}: expected a:b:M") from exc


DEFAULT_GRID = Grid1D(-8.0, 8.0, 1024)


@dataclass(frozen=True, eq=False)
class Density1D:
    grid: Grid1D
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.M,):
            raise InvalidInputError(f"expected {self.grid.M} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidInputError("density values must be finite")
        if np.any(v < 0):
            raise InvalidInputError(f"density has negative values (min {v.min():.3g})")
        mass = self.grid.h * v.sum()
        if abs(mass - 1.0) > MASS_TOL:
            raise InvalidInputError(f"density mass {mass:.12g} differs from 1 by more than {MASS_TOL}")
        object.__setattr__(self, "values", _frozen(v))

    # constructors -------------------------------------------------------

    @classmethod
    def normalize(cls, grid: Grid1D, values) -> "Density1D":
        """Rescale nonnegative cell values to unit mass."""
        v = np.asarray(values, dtype=float)
        mass = grid.h * v.sum()
        if not np.isfinite(mass) or mass <= 0:
            raise InvalidInputError(f"cannot normalise values with mass {mass}")
        return cls(grid, v / mass)

    @classmethod
    def from_function(cls, grid: Grid1D, f: Callable) -> "Density1D":
        return cls.normalize(grid, f(grid.centers))

    @classmethod
    def gaussian(cls, grid: Grid1D, mean=0.0, variance=1.0) -> "Density1D":
        if variance <= 0:
            raise InvalidInputError("variance must be positive")
        return cls.from_function(grid, lambda x: np.exp(-0.5 * (x - mean) ** 2 / variance))

    @classmethod
    def uniform(cls, grid: Grid1D, lo=None, hi=None) -> "Density1D":
        """Exact cell averages of the uniform law on [lo, hi]."""
        lo = grid.a if lo is None else lo
        hi = grid.b if hi is None else hi
        if not lo < hi:
            raise InvalidInputError("uniform law needs lo < hi")
        e = grid.edges
        overlap = np.clip(np.minimum(e[1:], hi) - np.maximum(e[:-1], lo), 0.0, None)
        return cls.normalize(grid, overlap)

    # views ----------------------------------------------------------------

    @property
    def x(self) -> np.ndarray:
        return self.grid.centers

    @property
    def mass(self) -> float:
        return self.grid.h * self.values.sum()

    def cdf_edges(self) -> np.ndarray:
        """Cumulative mass at the M + 1 cell edges."""
        c = np.concatenate(([0.0], np.cumsum(self.values) * self.grid.h))
        return c / c[-1]

    def cdf(self, x) -> np.ndarray:
        """Piecewise-linear cumulative distribution function."""
        return np.interp(x, self.grid.edges, self.cdf_edges())

    def quantile(self, u) -> np.ndarray:
        """Left-continuous inverse of :meth:`cdf`, linear inside each cell."""
        u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
        F = self.cdf_edges()
        j = np.searchsorted(F, u, side="left")
        cell = np.clip(j - 1, 0, self.grid.M - 1)
        # u == 0 lands left of the first cell carrying mass
        first = int(np.argmax(self.values > 0))
        cell = np.where(j == 0, first, cell)
        mass = F[cell + 1] - F[cell]
        frac = np.where(mass > 0, (u - F[cell]) / np.where(mass > 0, mass, 1.0), 0.0)
        return self.grid.edges[cell] + np.clip(frac, 0.0, 1.0) * self.grid.h

    def l1_distance(self, other: "Density1D") -> float:
        _check_same_grid(self, other)
        return self.grid.h * np.abs(self.values - other.values).sum()

    def __eq__(self, other):
        return (
            isinstance(other, Density1D)
            and self.grid == other.grid
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


def _check_same_grid(p: Density1D, q: Density1D):
    if p.grid != q.grid:
        raise InvalidInputError(f"densities live on different grids: {p.grid} vs {q.grid}")


@dataclass(frozen=True, eq=False)
class TangentVector1D:
    """Zero-mean grid function, e.g. a time derivative of a density."""

    grid: Grid1D
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.M,):
            raise InvalidInputError(f"expected {self.grid.M} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidInputError("tangent values must be finite")
        total = self.grid.h * v.sum()
        scale = max(1.0, self.grid.h * np.abs(v).sum())
        if abs(total) > 1e-8 * scale:
            raise InvalidInputError(f"tangent vector integrates to {total:.3g}, not 0")
        object.__setattr__(self, "values", _frozen(v))

    def __mul__(self, c):
        return TangentVector1D(self.grid, c * self.values)

    __rmul__ = __mul__

    def __add__(self, other):
        return TangentVector1D(self.grid, self.values + other.values)


@dataclass(frozen=True, eq=False)
class TransportMap1D:
    """Nondecreasing map sampled at the cell centres of ``grid``.

    Off the centres it is linear, extrapolated with the end slopes.
    """

    grid: Grid1D
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.M,):
            raise InvalidInputError(f"expected {self.grid.M} map values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidInputError("map values must be finite")
        scale = max(1.0, float(np.abs(v).max()))
        if np.any(np.diff(v) < -1e-12 * scale):
            i = int(np.argmax(np.diff(v) < -1e-12 * scale))
            raise MonotonicityError(f"map decreases between x={self.grid.centers[i]:.6g} and the next centre")
        object.__setattr__(self, "values", _frozen(np.maximum.accumulate(v)))

    @classmethod
    def from_function(cls, grid: Grid1D, f) -> "TransportMap1D":
        return cls(grid, f(grid.centers))

    @classmethod
    def identity(cls, grid: Grid1D) -> "TransportMap1D":
        return cls(grid, grid.centers)

    def __call__(self, x):
        xc, v = self.grid.centers, self.values
        x = np.asarray(x, dtype=float)
        y = np.interp(x, xc, v)
        left = (v[1] - v[0]) / (xc[1] - xc[0])
        right = (v[-1] - v[-2]) / (xc[-1] - xc[-2])
        y = np.where(x < xc[0], v[0] + left * (x - xc[0]), y)
        return np.where(x > xc[-1], v[-1] + right * (x - xc[-1]), y)

    def at_edges(self) -> np.ndarray:
        return self(self.grid.edges)


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    positions: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        p = np.atleast_1d(np.asarray(self.positions, dtype=float))
        if p.ndim != 1 or p.size < 1:
            raise InvalidInputError("an ensemble needs at least one particle")
        if not np.all(np.isfinite(p)):
            raise InvalidInputError("particle positions must be finite")
        object.__setattr__(self, "positions", _frozen(p))

    def __len__(self):
        return self.positions.size

    def mean(self) -> float:
        return float(self.positions.mean())

    def variance(self) -> float:
        return float(self.positions.var())


# ---------------------------------------------------------------------------
# potentials, schedules and velocity fields


def _const(c):
    return lambda t: c + 0.0 * np.asarray(t, dtype=float)


@dataclass(frozen=True)
class PotentialSpec:
    psi: Callable
    grad_psi: Callable
    beta: Optional[float] = None

    @classmethod
    def quadratic(cls, beta=1.0) -> "PotentialSpec":
        """Psi(x) = beta x^2 / 2."""
        return cls(lambda x: 0.5 * beta * np.asarray(x) ** 2, lambda x: beta * np.asarray(x, dtype=float), float(beta))

    @classmethod
    def zero(cls) -> "PotentialSpec":
        return cls.quadratic(0.0)

    def hess(self, x, eps=1e-5):
        if self.beta is not None:
            return np.full_like(np.asarray(x, dtype=float), self.beta)
        return (self.grad_psi(x + eps) - self.grad_psi(x - eps)) / (2 * eps)


PATTERNS = ("DDPM", "VP_SDE", "VE_SDE", "ODE")


@dataclass(frozen=True)
class DiffusionSchedule:
    """One diffusion pattern: diffusivity D(t), drift rate beta(t), VE variance
    clock alpha(t), or an explicit ODE velocity f(x, t).

    For the DDPM and VP patterns the potential is beta(t) x^2 / 2; the VE pattern
    has no potential and D = d alpha / dt; the ODE pattern has D = 0 and moves
    particles with dx/dt = f(x, t).
    """

    pattern: str
    D: Callable = field(default=_const(0.0))
    beta: Callable = field(default=_const(0.0))
    alpha: Optional[Callable] = None
    drift: Optional[Callable] = None
    horizon: float = 10.0

    def __post_init__(self):
        if self.pattern not in PATTERNS:
            raise InvalidScheduleError(f"unknown pattern {self.pattern!r}; expected one of {PATTERNS}")
        ts = np.linspace(0.0, self.horizon, 257)
        d = np.asarray(self.D(ts), dtype=float) * np.ones_like(ts)
        if np.any(d < 0) or not np.all(np.isfinite(d)):
            raise InvalidScheduleError("diffusivity must be finite and nonnegative on the horizon")
        if self.pattern == "ODE":
            if np.any(d != 0):
                raise InvalidScheduleError("the ODE pattern has zero diffusivity")
            if self.drift is None:
                raise InvalidScheduleError("the ODE pattern needs a drift f(x, t)")
        if self.pattern == "VE_SDE":
            if self.alpha is None:
                raise InvalidScheduleError("the VE pattern needs alpha(t)")
            a = np.asarray(self.alpha(ts), dtype=float) * np.ones_like(ts)
            if np.any(np.diff(a) < -1e-12):
                raise InvalidScheduleError("alpha(t) must be nondecreasing for the VE pattern")

    @classmethod
    def vp(cls, beta=1.0, D=None, pattern="VP_SDE", horizon=10.0):
        """Variance preserving: D = beta unless overridden."""
        b = beta if callable(beta) else _const(float(beta))
        d = b if D is None else (D if callable(D) else _const(float(D)))
        return cls(pattern, D=d, beta=b, horizon=horizon)

    @classmethod
    def ddpm(cls, beta=1.0, horizon=10.0):
        return cls.vp(beta, pattern="DDPM", horizon=horizon)

    @classmethod
    def ve(cls, alpha, alpha_dot=None, horizon=10.0, eps=1e-6):
        if alpha_dot is None:
            def alpha_dot(t):
                t = np.asarray(t, dtype=float)
                return (alpha(t + eps) - alpha(np.maximum(t - eps, 0.0))) / (t + eps - np.maximum(t - eps, 0.0))
        return cls("VE_SDE", D=alpha_dot, alpha=alpha, horizon=horizon)

    @classmethod
    def ode(cls, drift, horizon=10.0):
        return cls("ODE", drift=drift, horizon=horizon)

    def sigma(self, t):
        return np.sqrt(2.0 * self.D(t))

    def grad_psi(self, x, t):
        """Gradient of the potential at time t; the particle drift is its negative."""
        if self.pattern in ("DDPM", "VP_SDE"):
            return self.beta(t) * x
        return np.zeros_like(x)

    def potential(self, t) -> PotentialSpec:
        if self.pattern in ("DDPM", "VP_SDE"):
            return PotentialSpec.quadratic(float(self.beta(t)))
        return PotentialSpec.zero()


def finite_difference_slope(func, x, t=0.0):
    """Slopes of ``func(., t)`` between consecutive points of ``x``."""
    v = np.asarray(func(x, t), dtype=float)
    return np.diff(v) / np.diff(x)


@dataclass(frozen=True)
class VelocityField1D:
    evaluate: Callable
    lipschitz: float

    def __post_init__(self):
        if not (np.isfinite(self.lipschitz) and self.lipschitz >= 0):
            raise InvalidInputError(f"Lipschitz estimate must be finite and nonnegative, got {self.lipschitz}")

    def __call__(self, x, t=0.0):
        return np.asarray(self.evaluate(np.asarray(x, dtype=float), t), dtype=float) * np.ones(np.shape(x))

    @classmethod
    def from_function(cls, func, grid: Grid1D = DEFAULT_GRID, t_max=0.0, n_times=9) -> "VelocityField1D":
        """Wrap ``func(x, t)`` and estimate its Lipschitz constant on ``grid``."""
        x = grid.centers
        lip = 0.0
        for t in np.linspace(0.0, t_max, n_times if t_max > 0 else 1):
            v = np.asarray(func(x, t), dtype=float) * np.ones_like(x)
            if not np.all(np.isfinite(v)):
                raise InvalidInputError(f"velocity is not finite on the grid at t={t}")
            lip = max(lip, float(np.max(np.abs(np.diff(v) / np.diff(x)))))
        return cls(func, lip)

    @classmethod
    def constant(cls, c):
        return cls(lambda x, t: np.full_like(x, float(c)), 0.0)

    @classmethod
    def linear(cls, k):
        """v(x) = k x."""
        return cls(lambda x, t: k * x, abs(float(k)))


NAMED_FIELDS = {
    "neg-identity": (lambda x, t: -x, Grid1D(-8.0, 8.0, 1024)),
    "neg-sine": (lambda x, t: -np.sin(x), Grid1D(-np.pi, np.pi, 1024)),
    "monotone-demo": (lambda x, t: x, Grid1D(-8.0, 8.0, 1024)),
}


def named_field(name):
    """Built-in initial velocity fields with their default scan grids."""
    try:
        func, grid = NAMED_FIELDS[name]
    except KeyError:
        raise InvalidInputError(f"unknown velocity field {name!r}; choose from {sorted(NAMED_FIELDS)}") from None
    return VelocityField1D.from_function(func, grid), grid


# ---------------------------------------------------------------------------
# operations


def build_density_from_samples(ensemble: ParticleEnsemble, grid: Grid1D) -> Density1D:
    """Histogram of the ensemble, divided by N h."""
    p = ensemble.positions
    bad = (p < grid.a) | (p > grid.b)
    if np.any(bad):
        raise OutOfDomainError(float(p[bad][0]), grid.a, grid.b)
    counts, _ = np.histogram(p, bins=grid.M, range=(grid.a, grid.b))
    return Density1D.normalize(grid, counts / (len(p) * grid.h))


def sample_from_density(rho: Density1D, n: int, seed: int = 0) -> ParticleEnsemble:
    """Inverse-CDF sampling; draw i depends only on (seed, i)."""
    if n < 1:
        raise InvalidInputError("need at least one sample")
    u = _rng.uniforms(seed, 0, n, stream=_rng.SAMPLING)
    return ParticleEnsemble(rho.quantile(u), 0.0)


def density_moments(rho: Density1D):
    """Midpoint-rule mean and central second moment."""
    h, x, p = rho.grid.h, rho.x, rho.values
    mean = h * np.sum(x * p)
    var = h * np.sum((x - mean) ** 2 * p)
    return float(mean), float(var)
