"""Domain types shared by every solver: parameters, grids, profiles and paths.

All grids are uniform.  Arrays stored on the value objects are made read-only
so instances can be shared freely between threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np


class ParameterError(ValueError):
    """Raised when a model input fails validation."""


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


def make_time_grid(T: float, n_steps: int) -> np.ndarray:
    if not (math.isfinite(T) and T > 0):
        raise ParameterError("T must be positive")
    if int(n_steps) != n_steps or n_steps < 1:
        raise ParameterError("n_steps must be a positive integer")
    return np.linspace(0.0, T, int(n_steps) + 1)


def make_space_grid(M: float, P: int) -> np.ndarray:
    if not (math.isfinite(M) and M > 0):
        raise ParameterError("M must be positive")
    if int(P) != P or P < 4:
        raise ParameterError("P must be an integer >= 4")
    # integer offsets times one step keep the grid exactly antisymmetric
    return (np.arange(int(P) + 1) - 0.5 * int(P)) * (2.0 * M / int(P))


def _check_uniform(t_grid: np.ndarray, name: str) -> float:
    if t_grid.ndim != 1 or t_grid.size < 2:
        raise ParameterError(f"{name} needs at least two nodes")
    steps = np.diff(t_grid)
    dt = (t_grid[-1] - t_grid[0]) / (t_grid.size - 1)
    if not np.all(steps > 0):
        raise ParameterError(f"{name} must be strictly increasing")
    if not np.allclose(steps, dt, rtol=1e-9, atol=0.0):
        raise ParameterError(f"{name} must be uniform")
    return float(dt)


# ---------------------------------------------------------------------------
# Cancellation rate
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PiecewiseRate:
    """A nonnegative piecewise-constant function of time.

    ``values[i]`` holds on ``[starts[i], starts[i+1])``; ``starts[0]`` is 0 and
    the last piece extends to infinity.  A constant rate is a single piece.
    """

    starts: tuple[float, ...] = (0.0,)
    values: tuple[float, ...] = (0.0,)

    def __post_init__(self):
        if len(self.starts) != len(self.values) or not self.starts:
            raise ParameterError("nu: starts and values must have equal, nonzero length")
        if self.starts[0] != 0.0:
            raise ParameterError("nu: first piece must start at t=0")
        if any(b <= a for a, b in zip(self.starts, self.starts[1:])):
            raise ParameterError("nu: piece starts must be strictly increasing")
        for v in self.values:
            if not math.isfinite(v):
                raise ParameterError("nu must be finite")
            if v < 0:
                raise ParameterError("nu must be nonnegative")

    @classmethod
    def constant(cls, value: float) -> "PiecewiseRate":
        return cls((0.0,), (float(value),))

    @classmethod
    def parse(cls, spec) -> "PiecewiseRate":
        """Build from a number, a PiecewiseRate, ``[(start, value), ...]`` or
        the text form ``"0:0.5,1:0.05"``."""
        if isinstance(spec, PiecewiseRate):
            return spec
        if isinstance(spec, (int, float)):
            return cls.constant(float(spec))
        if isinstance(spec, str):
            spec = spec.strip()
            if ":" not in spec:
                return cls.constant(float(spec))
            pairs = []
            for chunk in spec.split(","):
                start, value = chunk.split(":")
                pairs.append((float(start), float(value)))
            spec = pairs
        pairs = [(float(s), float(v)) for s, v in spec]
        return cls(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs))

    def format(self) -> str:
        if self.is_constant:
            return repr(self.values[0])
        return ",".join(f"{s!r}:{v!r}" for s, v in zip(self.starts, self.values))

    @property
    def is_constant(self) -> bool:
        return len(self.values) == 1

    @property
    def is_zero(self) -> bool:
        return all(v == 0.0 for v in self.values)

    def __call__(self, t):
        idx = np.searchsorted(np.asarray(self.starts), np.asarray(t, dtype=float), side="right") - 1
        return np.asarray(self.values)[np.clip(idx, 0, None)]

    def integral(self, t):
        """Cumulative rate ``int_0^t nu(u) du`` (exact, piece by piece)."""
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        ends = list(self.starts[1:]) + [math.inf]
        for a, b, v in zip(self.starts, ends, self.values):
            out = out + v * np.clip(np.minimum(t, b) - a, 0.0, None)
        return out


# ---------------------------------------------------------------------------
# Model parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelParams:
    sigma: float
    kappa: float = 0.0
    lam: float = 0.0
    nu: PiecewiseRate = field(default_factory=PiecewiseRate)
    L: float = 1.0

    @property
    def D(self) -> float:
        return self.sigma ** 2 / 2.0

    @property
    def J(self) -> float:
        return self.L * self.D

    def gamma(self, t: float = 0.0) -> float:
        """Inverse decay length sqrt(nu/D) of the stationary book."""
        return math.sqrt(float(self.nu(t)) / self.D)

    def replace(self, **changes) -> "ModelParams":
        kw = dict(sigma=self.sigma, kappa=self.kappa, lam=self.lam, nu=self.nu, L=self.L)
        kw.update(changes)
        return make_params(kw["sigma"], kw["kappa"], kw["lam"], kw["nu"], kw["L"])


def make_params(sigma: float, kappa: float = 0.0, lam: float = 0.0,
                nu_spec=0.0, L: float = 1.0) -> ModelParams:
    """Validate inputs and build a :class:`ModelParams`.

    ``nu_spec`` is anything :meth:`PiecewiseRate.parse` accepts.
    """
    for name, val in (("sigma", sigma), ("kappa", kappa), ("lam", lam), ("L", L)):
        if not isinstance(val, (int, float, np.floating, np.integer)) or not math.isfinite(val):
            raise ParameterError(f"{name} must be finite")
    if sigma <= 0:
        raise ParameterError("sigma must be positive")
    if L <= 0:
        raise ParameterError("L must be positive")
    if kappa < 0:
        raise ParameterError("kappa must be nonnegative")
    if lam < 0:
        raise ParameterError("lam must be nonnegative")
    nu = PiecewiseRate.parse(nu_spec)
    return ModelParams(float(sigma), float(kappa), float(lam), nu, float(L))


def sigma_from_D(D: float) -> float:
    return math.sqrt(2.0 * D)


# ---------------------------------------------------------------------------
# Execution profile and reference path
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExecutionProfile:
    """Trading rate sampled on a uniform time grid.

    ``m[j]`` is the rate held over ``[t_j, t_{j+1})``; the last node's value
    is carried for bookkeeping only.
    """

    t_grid: np.ndarray
    m: np.ndarray

    def __post_init__(self):
        t = _frozen(self.t_grid)
        m = _frozen(self.m)
        if t.shape != m.shape:
            raise ParameterError("profile: t_grid and m must have the same length")
        if t[0] != 0.0:
            raise ParameterError("profile: grid must start at t=0")
        _check_uniform(t, "profile t_grid")
        if not np.all(np.isfinite(m)):
            raise ParameterError("profile: m must be finite")
        object.__setattr__(self, "t_grid", t)
        object.__setattr__(self, "m", m)

    @classmethod
    def from_function(cls, fn: Callable[[np.ndarray], np.ndarray], T: float,
                      n_steps: int) -> "ExecutionProfile":
        t = make_time_grid(T, n_steps)
        return cls(t, np.broadcast_to(np.asarray(fn(t), dtype=float), t.shape))

    @classmethod
    def constant(cls, m0: float, T: float, n_steps: int) -> "ExecutionProfile":
        return cls.from_function(lambda t: np.full_like(t, m0), T, n_steps)

    @classmethod
    def round_trip(cls, m0: float, t_switch: float, T: float,
                   n_steps: int) -> "ExecutionProfile":
        """Buy at ``m0`` on [0, t_switch), sell at ``m0`` on [t_switch, T]."""
        return cls.from_function(lambda t: np.where(t < t_switch, m0, -m0), T, n_steps)

    @classmethod
    def ramp(cls, m0: float, T: float, n_steps: int) -> "ExecutionProfile":
        return cls.from_function(lambda t: m0 * t / T, T, n_steps)

    @classmethod
    def zero(cls, T: float, n_steps: int) -> "ExecutionProfile":
        return cls.constant(0.0, T, n_steps)

    @property
    def n_steps(self) -> int:
        return self.t_grid.size - 1

    @property
    def T(self) -> float:
        return float(self.t_grid[-1])

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    @property
    def cumulative_volume(self) -> np.ndarray:
        """Q_k = dt * sum_{j<k} m_j."""
        return self.dt * np.concatenate(([0.0], np.cumsum(self.m[:-1])))

    @property
    def total_volume(self) -> float:
        return float(self.cumulative_volume[-1])

    def negated(self) -> "ExecutionProfile":
        return ExecutionProfile(self.t_grid, -self.m)

    def scaled(self, alpha: float) -> "ExecutionProfile":
        return ExecutionProfile(self.t_grid, alpha * self.m)


@dataclass(frozen=True)
class ReferencePath:
    t_grid: np.ndarray
    B: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        t = _frozen(self.t_grid)
        B = _frozen(self.B)
        if t.shape != B.shape:
            raise ParameterError("path: t_grid and B must have the same length")
        if t[0] != 0.0:
            raise ParameterError("path: grid must start at t=0")
        _check_uniform(t, "path t_grid")
        object.__setattr__(self, "t_grid", t)
        object.__setattr__(self, "B", B)

    @classmethod
    def constant(cls, b: float, T: float, n_steps: int) -> "ReferencePath":
        t = make_time_grid(T, n_steps)
        return cls(t, np.full_like(t, b))

    @property
    def n_steps(self) -> int:
        return self.t_grid.size - 1

    @property
    def dt(self) -> float:
        return float(self.t_grid[-1]) / self.n_steps


def brownian_path(seed: int, n_steps: int, dt: float, vol: float,
                  offset: float = 0.0) -> ReferencePath:
    """Brownian path ``B_0 = offset`` with N(0, vol^2 dt) increments.

    Uses numpy's PCG64 bit generator seeded with ``seed`` followed by the
    ziggurat ``standard_normal``; both are stable across platforms.
    """
    if int(n_steps) != n_steps or n_steps < 1:
        raise ParameterError("n_steps must be a positive integer")
    if not dt > 0:
        raise ParameterError("dt must be positive")
    if not vol >= 0:
        raise ParameterError("vol must be nonnegative")
    rng = np.random.Generator(np.random.PCG64(seed))
    steps = vol * math.sqrt(dt) * rng.standard_normal(int(n_steps))
    B = offset + np.concatenate(([0.0], np.cumsum(steps)))
    return ReferencePath(make_time_grid(dt * n_steps, n_steps), B, seed)


# ---------------------------------------------------------------------------
# Book state and impact trajectory
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BookState:
    x_grid: np.ndarray
    phi: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        x = _frozen(self.x_grid)
        phi = _frozen(self.phi)
        if x.shape != phi.shape:
            raise ParameterError("book: x_grid and phi must have the same length")
        if x.size < 5:
            raise ParameterError("book: need at least 4 spatial intervals")
        _check_uniform(x, "book x_grid")
        object.__setattr__(self, "x_grid", x)
        object.__setattr__(self, "phi", phi)

    @classmethod
    def linear(cls, L: float, M: float, P: int, center: float = 0.0) -> "BookState":
        """The far-field book ``phi = -L (x - center)``."""
        x = make_space_grid(M, P)
        return cls(x, -L * (x - center), 0.0)

    @property
    def dx(self) -> float:
        return float(self.x_grid[-1] - self.x_grid[0]) / (self.x_grid.size - 1)

    @property
    def M(self) -> float:
        return float(self.x_grid[-1])

    def with_phi(self, phi: np.ndarray, t: float | None = None) -> "BookState":
        return BookState(self.x_grid, phi, self.t if t is None else t)

    def volume(self) -> float:
        """Signed book integral (trapezoid rule)."""
        return float(np.trapezoid(self.phi, dx=self.dx))


@dataclass(frozen=True)
class ImpactTrajectory:
    t_grid: np.ndarray
    y: np.ndarray
    x: np.ndarray
    cost_running: np.ndarray

    def __post_init__(self):
        for name in ("t_grid", "y", "x", "cost_running"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        n = self.t_grid.shape
        if self.y.shape != n or self.x.shape != n or self.cost_running.shape != n:
            raise ParameterError("trajectory arrays must share the time grid")

    @property
    def cost(self) -> float:
        return float(self.cost_running[-1])

    @property
    def terminal(self) -> float:
        return float(self.y[-1])


def running_cost(m: np.ndarray, y: np.ndarray, dt: float) -> np.ndarray:
    """Cost of trading up to each node, ``dt * sum_{j<k} m_j (y_j + y_{j+1}) / 2``.

    ``m_j`` is held over step j while ``y`` is taken as linear across it.
    """
    m = np.asarray(m, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    out[1:] = dt * np.cumsum(m[:-1] * 0.5 * (y[:-1] + y[1:]))
    return out


def trajectory_from_y(profile: ExecutionProfile, y: Iterable[float],
                      x: Sequence[float] | None = None) -> ImpactTrajectory:
    y = np.asarray(y, dtype=float)
    return ImpactTrajectory(profile.t_grid, y, y.copy() if x is None else x,
                            running_cost(profile.m, y, profile.dt))


class ConvergenceError(RuntimeError):
    """A numerical iteration failed to reach its tolerance."""
