"""Finite-difference simulation of the signed book density.

The density obeys ``d_t phi = D d_xx phi + kappa (x - B_t) d_x phi`` on
``[-M, M]``, stepped with Crank-Nicolson for diffusion and an explicit
advection term.  Deposition/cancellation is applied in a separate split
sub-step, the metaorder consumes opposing volume from the touch, and the
price is the zero crossing of ``phi``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .core import (BookState, ConvergenceError, ExecutionProfile, ModelParams, ParameterError,
                   ReferencePath, make_space_grid)

log = logging.getLogger(__name__)

ADVECTION_STENCILS = ("forward", "centered", "upwind")
INJECTION_MODES = ("consume", "mollified")


class OneSidedBookError(RuntimeError):
    pass


class BookExhaustedError(RuntimeError):
    def __init__(self, shortfall: float, step: int | None = None):
        where = "" if step is None else f" at step {step}"
        super().__init__(f"book exhausted before the order was filled{where}; "
                         f"shortfall {shortfall:.6g}")
        self.shortfall = shortfall
        self.step = step


class BoundaryContamination(ConvergenceError):
    def __init__(self, step: int, price: float, M: float):
        super().__init__(f"price {price:.6g} within 10% of the domain edge M={M:g} at step {step}")
        self.step = step
        self.price = price


@dataclass(frozen=True)
class GridSpec:
    M: float
    P: int
    dT: float

    def __post_init__(self):
        if not self.M > 0:
            raise ParameterError("grid M must be positive")
        if int(self.P) != self.P or self.P < 8 or self.P % 2:
            raise ParameterError("grid P must be an even integer >= 8")
        if not self.dT > 0:
            raise ParameterError("grid dT must be positive")

    @property
    def dx(self) -> float:
        return 2.0 * self.M / self.P

    @property
    def x(self) -> np.ndarray:
        return make_space_grid(self.M, self.P)


@dataclass(frozen=True)
class SimOptions:
    snapshot_stride: int = 0
    sources: bool = True
    advection: str = "forward"
    injection: str = "consume"
    guard: float = 0.9

    def __post_init__(self):
        if self.snapshot_stride < 0:
            raise ParameterError("snapshot_stride must be >= 0")
        if self.advection not in ADVECTION_STENCILS:
            raise ParameterError(f"advection must be one of {ADVECTION_STENCILS}")
        if self.injection not in INJECTION_MODES:
            raise ParameterError(f"injection must be one of {INJECTION_MODES}")
        if not 0 < self.guard <= 1:
            raise ParameterError("guard must lie in (0, 1]")


@dataclass
class SimRun:
    t_grid: np.ndarray
    prices: np.ndarray
    B: np.ndarray
    ledger: np.ndarray
    snapshots: list[BookState] = field(default_factory=list)
    final: BookState | None = None


# ---------------------------------------------------------------------------
# Steps
# ---------------------------------------------------------------------------

def _check_state(state: BookState, grid: GridSpec):
    if state.phi.shape[0] != grid.P + 1 or not math.isclose(state.M, grid.M, rel_tol=1e-12):
        raise ParameterError("book state does not live on the grid")


def cn_matrices(grid: GridSpec, params: ModelParams):
    """Banded LHS ``I - r A`` in ``solve_banded`` layout and ``r``."""
    r = grid.dT * params.D / (2.0 * grid.dx ** 2)
    n = grid.P + 1
    ab = np.zeros((3, n))
    ab[1, :] = 1.0 + 2.0 * r
    ab[0, 2:] = -r   # super-diagonal of rows 1..n-2
    ab[2, :-2] = -r  # sub-diagonal of rows 1..n-2
    ab[1, 0] = ab[1, -1] = 1.0
    return ab, r


def cn_rhs(phi: np.ndarray, x: np.ndarray, r: float, grid: GridSpec, params: ModelParams,
           B_now: float, advection: str = "forward") -> np.ndarray:
    rhs = phi.copy()
    inner = slice(1, -1)
    rhs[inner] += r * (phi[:-2] - 2.0 * phi[1:-1] + phi[2:])
    if params.kappa > 0:
        vel = x[inner] - B_now
        if advection == "forward":
            diff = phi[2:] - phi[1:-1]
        elif advection == "centered":
            diff = 0.5 * (phi[2:] - phi[:-2])
        else:
            # the book drifts towards B: difference on the side it comes from
            diff = np.where(vel > 0, phi[2:] - phi[1:-1], phi[1:-1] - phi[:-2])
        rhs[inner] += grid.dT * params.kappa / grid.dx * vel * diff
    return rhs


def cn_step(state: BookState, params: ModelParams, B_now: float, grid: GridSpec,
            advection: str = "forward", _lhs=None) -> BookState:
    """One step of the implicit-diffusion / explicit-advection scheme.

    Boundary rows of both difference matrices are zero, so ``phi(+-M)`` keep
    their current values.
    """
    _check_state(state, grid)
    ab, r = _lhs if _lhs is not None else cn_matrices(grid, params)
    rhs = cn_rhs(state.phi, state.x_grid, r, grid, params, B_now, advection)
    phi = linalg.solve_banded((1, 1), ab, rhs, check_finite=False)
    return state.with_phi(phi, state.t + grid.dT)


def apply_source_terms(state: BookState, params: ModelParams, price_now: float,
                       dT: float, t: float | None = None) -> BookState:
    """Deposition ``lam sign(p - x)`` and cancellation ``-nu phi`` over one step.

    The split ODE is linear with a frozen sign, so it is integrated exactly
    on the interior nodes.  ``nu`` is read at ``t`` (default: the state time).
    """
    lam = params.lam
    nu = float(params.nu(state.t if t is None else t))
    if lam == 0.0 and nu == 0.0:
        return state
    phi = state.phi.copy()
    gap = price_now - state.x_grid[1:-1]
    # a node sitting on the price (up to roundoff) gets no deposition
    s = np.where(np.abs(gap) <= 1e-9 * state.dx, 0.0, np.sign(gap))
    if nu > 0:
        decay = math.exp(-nu * dT)
        phi[1:-1] = phi[1:-1] * decay + (lam / nu) * s * -math.expm1(-nu * dT)
    else:
        phi[1:-1] = phi[1:-1] + lam * s * dT
    return state.with_phi(phi)


def extract_price(state: BookState, previous: float | None = None, side: int = 0) -> float:
    """Zero crossing of ``phi`` by linear interpolation.

    Several crossings are resolved by distance to ``previous`` (ties go to
    the lower price).  A run of exact zeros, as left by consumed cells,
    counts as one crossing.  Consumed cells are emptied volume bins, so after
    a buy (``side > 0``) the price is the upper face of the last emptied
    cell, after a sell the lower face, and otherwise the run's midpoint.
    """
    x, phi = state.x_grid, state.phi
    sg = np.sign(phi)
    roots = []
    nz = np.flatnonzero(sg != 0)
    if nz.size == 0:
        raise OneSidedBookError("book one-sided: density vanishes identically")
    for a, b in zip(nz[:-1], nz[1:]):
        if sg[a] == sg[b]:
            continue
        if b == a + 1:
            roots.append(x[a] - phi[a] * (x[b] - x[a]) / (phi[b] - phi[a]))
        elif side > 0:
            roots.append(0.5 * (x[b - 1] + x[b]))
        elif side < 0:
            roots.append(0.5 * (x[a] + x[a + 1]))
        else:
            roots.append(0.5 * (x[a + 1] + x[b - 1]))
    if not roots:
        raise OneSidedBookError("book one-sided: no sign change in phi")
    ref = 0.0 if previous is None else previous
    return float(min(roots, key=lambda r: (abs(r - ref), r)))


def consume_metaorder(state: BookState, volume: float, price_now: float):
    """Remove ``|volume|`` of opposing density cell by cell from the touch.

    A buy (``volume > 0``) eats ask density (``phi < 0``) above the price,
    a sell eats bids below it.  Returns the new state and the consumed
    volume.
    """
    if volume == 0.0:
        return state, 0.0
    x, phi = state.x_grid, state.phi.copy()
    dx = state.dx
    remaining = abs(volume)
    if volume > 0:
        order = np.arange(np.searchsorted(x, price_now, side="right"), x.size - 1)
        side = -1.0
    else:
        order = np.arange(np.searchsorted(x, price_now, side="left") - 1, 0, -1)
        side = 1.0
    order = order[(order >= 1) & (order <= x.size - 2)]
    for i in order:
        cap = dx * max(side * phi[i], 0.0)
        if cap <= 0.0:
            continue
        if cap <= remaining:
            take = cap
            phi[i] = 0.0
        else:
            take = remaining
            phi[i] -= side * take / dx
        remaining -= take
        if remaining <= 0.0:
            break
    if remaining > 1e-12 * abs(volume):
        raise BookExhaustedError(remaining)
    return state.with_phi(phi), abs(volume) - max(remaining, 0.0)


def inject_mollified(state: BookState, volume: float, price_now: float) -> BookState:
    """Deposit ``volume`` as a unit-mass Gaussian of width ``dx`` at the price."""
    if volume == 0.0:
        return state
    x = state.x_grid
    w = np.exp(-0.5 * ((x - price_now) / state.dx) ** 2)
    w[0] = w[-1] = 0.0
    w /= w.sum() * state.dx
    return state.with_phi(state.phi + volume * w)


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------

def initial_linear(grid: GridSpec, params: ModelParams, center: float = 0.0) -> BookState:
    return BookState.linear(params.L, grid.M, grid.P, center)


def simulate(grid: GridSpec, params: ModelParams, path: ReferencePath | None,
             profile: ExecutionProfile | None, options: SimOptions | None = None,
             initial: BookState | None = None, n_steps: int | None = None) -> SimRun:
    """Step the book through ``n_steps`` (default: the profile's steps).

    Each step runs diffusion/advection, the source sub-step, consumes the
    metaorder volume ``m_k dT`` at the pre-trade price, then extracts the
    post-trade price.
    """
    options = options or SimOptions()
    if profile is not None:
        if not math.isclose(profile.dt, grid.dT, rel_tol=1e-9):
            raise ParameterError("profile time step differs from grid dT")
        n = profile.n_steps if n_steps is None else n_steps
        if n > profile.n_steps:
            raise ParameterError("n_steps exceeds the profile length")
    elif n_steps is None:
        raise ParameterError("give a profile or n_steps")
    else:
        n = n_steps
    if path is not None:
        if path.n_steps < n or not math.isclose(path.dt, grid.dT, rel_tol=1e-9):
            raise ParameterError("reference path grid does not match the simulation grid")
        B = np.asarray(path.B[: n + 1], dtype=float)
    else:
        B = np.zeros(n + 1)
    state = initial if initial is not None else initial_linear(grid, params)
    _check_state(state, grid)
    lhs = cn_matrices(grid, params)
    t_grid = grid.dT * np.arange(n + 1)
    prices = np.empty(n + 1)
    ledger = np.zeros(n)
    prices[0] = extract_price(state)
    snapshots = [state] if options.snapshot_stride else []
    use_sources = options.sources and (params.lam > 0 or not params.nu.is_zero)
    limit = options.guard * grid.M
    for k in range(n):
        state = cn_step(state, params, B[k], grid, options.advection, lhs)
        if use_sources:
            state = apply_source_terms(state, params, prices[k], grid.dT, t_grid[k])
        vol = 0.0 if profile is None else profile.m[k] * grid.dT
        if vol != 0.0:
            p_pre = extract_price(state, prices[k])
            if options.injection == "consume":
                try:
                    state, done = consume_metaorder(state, vol, p_pre)
                except BookExhaustedError as exc:
                    raise BookExhaustedError(exc.shortfall, k) from exc
                ledger[k] = math.copysign(done, vol)
            else:
                state = inject_mollified(state, vol, p_pre)
                ledger[k] = vol
        prices[k + 1] = extract_price(state, prices[k], int(np.sign(vol)))
        if abs(prices[k + 1]) >= limit:
            raise BoundaryContamination(k + 1, prices[k + 1], grid.M)
        if options.snapshot_stride and ((k + 1) % options.snapshot_stride == 0 or k + 1 == n):
            snapshots.append(state)
    return SimRun(t_grid, prices, B, ledger, snapshots, state)
