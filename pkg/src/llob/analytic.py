"""Closed-form results for the latent order book.

These are used directly and as oracles for the numerical solvers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal, special

from .core import (ConvergenceError, ExecutionProfile, ImpactTrajectory, ModelParams,
                   ParameterError, PiecewiseRate, ReferencePath, running_cost)

SQRT_PI = math.sqrt(math.pi)
HALF_PI = math.pi / 2.0

REGIMES = ("exact-root", "small-rate", "large-rate")


# ---------------------------------------------------------------------------
# Stationary books and kernels
# ---------------------------------------------------------------------------

def stationary_phi_llob(y, params: ModelParams, t: float = 0.0):
    """Stationary signed density with deposition ``lam`` and cancellation ``nu``.

    Odd in ``y``, with asymptotes ``-+lam/nu`` and slope ``-lam/sqrt(nu D)``
    at the price.
    """
    nu = float(params.nu(t))
    if nu <= 0:
        raise ParameterError("stationary book needs nu > 0; use the linear far field -L*y")
    y = np.asarray(y, dtype=float)
    gamma = math.sqrt(nu / params.D)
    return -np.sign(y) * (params.lam / nu) * -np.expm1(-gamma * np.abs(y))


def stationary_phi_mr(y, params: ModelParams, c0: float, c1: float):
    """Stationary book of the mean-reverted model, ``c0 + c1 * int_{-inf}^y exp(-kappa u^2/sigma^2) du``."""
    if params.kappa <= 0:
        raise ParameterError("kappa must be positive for the mean-reverted stationary book")
    scale = params.sigma / math.sqrt(params.kappa)
    z = np.asarray(y, dtype=float) / scale
    # int_{-inf}^{y} exp(-u^2/scale^2) du = scale * sqrt(pi)/2 * erfc(-y/scale)
    return c0 + c1 * scale * SQRT_PI / 2.0 * special.erfc(-z)


def mr_stationary_coefficients(params: ModelParams, left: float, right: float,
                               M: float) -> tuple[float, float]:
    """(c0, c1) of the stationary mean-reverted book pinned to ``left`` at -M
    and ``right`` at +M."""
    if params.kappa <= 0:
        raise ParameterError("kappa must be positive for the mean-reverted stationary book")
    scale = params.sigma / math.sqrt(params.kappa)
    g_lo = scale * SQRT_PI / 2.0 * special.erfc(M / scale)
    g_hi = scale * SQRT_PI / 2.0 * special.erfc(-M / scale)
    c1 = (right - left) / (g_hi - g_lo)
    return left - c1 * g_lo, c1


def heat_kernel(y, tau, params: ModelParams, t0: float = 0.0):
    """Decaying heat kernel ``exp(-int nu) (4 pi D tau)^{-1/2} exp(-y^2/(4 D tau))``.

    The decay integrates the cancellation rate over ``[t0, t0 + tau]``.
    """
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0):
        raise ParameterError("tau must be positive")
    y = np.asarray(y, dtype=float)
    decay = np.exp(-(params.nu.integral(t0 + tau) - params.nu.integral(t0)))
    D = params.D
    return decay * np.exp(-y * y / (4.0 * D * tau)) / np.sqrt(4.0 * math.pi * D * tau)


def C_of(s, t, kappa: float):
    """Effective diffusion time ``int_s^t exp(2 kappa u) du`` (``t - s`` when kappa = 0)."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s > t):
        raise ParameterError("C_of needs s <= t")
    if np.any(s < 0):
        raise ParameterError("C_of needs s >= 0")
    if kappa < 0:
        raise ParameterError("kappa must be nonnegative")
    if kappa == 0:
        return t - s
    return np.exp(2.0 * kappa * s) * np.expm1(2.0 * kappa * (t - s)) / (2.0 * kappa)


# ---------------------------------------------------------------------------
# Self-similar coefficient A
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SelfSimilarFit:
    A: float
    regime: str
    m0_over_J: float
    residual: float = 0.0


def _gauss_nodes(A: float) -> tuple[np.ndarray, np.ndarray]:
    # The integrand peaks like exp(-A^2 phi^2 / 16) at phi = 0: dense panel
    # on the peak, second panel on the tail.
    split = min(HALF_PI, 24.0 / max(A, 1e-300))
    x, w = np.polynomial.legendre.leggauss(96)
    nodes = [0.5 * split * (x + 1.0)]
    weights = [0.5 * split * w]
    if split < HALF_PI:
        nodes.append(split + 0.5 * (HALF_PI - split) * (x + 1.0))
        weights.append(0.5 * (HALF_PI - split) * w)
    return np.concatenate(nodes), np.concatenate(weights)


def A_integral(A: float) -> float:
    """``int_0^1 du (4 pi (1-u))^{-1/2} exp(-A^2 (1-sqrt u)/(4(1+sqrt u)))``.

    With ``u = cos^2 phi`` this is ``pi^{-1/2} int_0^{pi/2} cos(phi)
    exp(-A^2 tan^2(phi/2) / 4) dphi``, whose integrand is smooth on the
    closed interval.
    """
    phi, w = _gauss_nodes(A)
    g = np.tan(phi / 2.0) ** 2
    return float(np.dot(w, np.cos(phi) * np.exp(-A * A * g / 4.0))) / SQRT_PI


def _A_integral_dA(A: float) -> float:
    phi, w = _gauss_nodes(A)
    g = np.tan(phi / 2.0) ** 2
    return float(np.dot(w, np.cos(phi) * (-A * g / 2.0) * np.exp(-A * A * g / 4.0))) / SQRT_PI


def A_residual(A: float, m0_over_J: float) -> float:
    return A - m0_over_J * A_integral(A)


def solve_A(m0_over_J: float, tol: float = 1e-12) -> SelfSimilarFit:
    """Positive root of the self-similar equation for a constant rate ``m0``.

    Bisection on ``(0, sqrt(2 m0/J) + 1)`` down to a 1e-6 bracket, then
    Newton steps kept inside the bracket.
    """
    r = float(m0_over_J)
    if not (math.isfinite(r) and r > 0):
        raise ParameterError("m0_over_J must be positive")
    lo, hi = 0.0, math.sqrt(2.0 * r) + 1.0
    while A_residual(hi, r) <= 0:
        hi *= 2.0
        if hi > 1e12:
            raise ConvergenceError(f"solve_A: no sign change up to A={hi:g}")
    while hi - lo > 1e-6 * hi:
        mid = 0.5 * (lo + hi)
        if A_residual(mid, r) > 0:
            hi = mid
        else:
            lo = mid
    A = 0.5 * (lo + hi)
    for _ in range(50):
        F = A_residual(A, r)
        dF = 1.0 - r * _A_integral_dA(A)
        step = F / dF
        A_new = A - step
        if not lo <= A_new <= hi:
            A_new = 0.5 * (lo + hi)
        if A_residual(A_new, r) > 0:
            hi = min(hi, A_new)
        else:
            lo = max(lo, A_new)
        A = A_new
        if abs(step) <= tol * max(A, 1e-300):
            break
    res = A_residual(A, r)
    if abs(res) > 1e-8 * max(1.0, A):
        raise ConvergenceError(f"solve_A: residual {res:.3e} at A={A:.16g} (m0/J={r:g})")
    return SelfSimilarFit(A, "exact-root", r, abs(res))


def self_similar_A(m0_over_J: float, regime: str = "exact-root") -> SelfSimilarFit:
    """A from the exact root or from one of the two asymptotic regimes."""
    if regime == "exact-root":
        return solve_A(m0_over_J)
    if m0_over_J <= 0:
        raise ParameterError("m0_over_J must be positive")
    if regime == "small-rate":
        return SelfSimilarFit(m0_over_J / SQRT_PI, regime, m0_over_J)
    if regime == "large-rate":
        return SelfSimilarFit(math.sqrt(2.0 * m0_over_J), regime, m0_over_J)
    raise ParameterError(f"unknown regime {regime!r}; expected one of {REGIMES}")


# ---------------------------------------------------------------------------
# Asymptotic impact and cost
# ---------------------------------------------------------------------------

def impact_small_rate(t, m0: float, params: ModelParams):
    """Square-root impact for ``m0 << J``: ``(m0/J) sqrt(D t / pi)``."""
    return m0 / params.J * np.sqrt(params.D * np.asarray(t, dtype=float)) / SQRT_PI


def impact_large_rate(Q, params: ModelParams):
    """Impact for ``m0 >> J``: ``sqrt(2 Q / L)`` (sign follows Q)."""
    Q = np.asarray(Q, dtype=float)
    return np.sign(Q) * np.sqrt(2.0 * np.abs(Q) / params.L)


def linear_propagator_llob(profile: ExecutionProfile, params: ModelParams) -> ImpactTrajectory:
    """Small-rate propagator ``y_t = (1/L) int m_s (4 pi D (t-s))^{-1/2} ds``.

    ``m`` is held constant on each step and the square-root kernel is
    integrated exactly over it, so a constant rate is reproduced exactly.
    """
    n = profile.n_steps
    dt = profile.dt
    k = np.arange(1, n + 1)
    w = 2.0 * np.sqrt(dt) * (np.sqrt(k) - np.sqrt(k - 1)) / math.sqrt(4.0 * math.pi * params.D)
    y = np.zeros(n + 1)
    y[1:] = np.convolve(profile.m[:-1], w)[:n] / params.L
    return ImpactTrajectory(profile.t_grid, y, y.copy(), running_cost(profile.m, y, dt))


def arcsine_propagator(t, m0: float, params: ModelParams):
    """Small-rate impact of a constant rate in the mean-reverted model, working frame.

    ``m0/(L sigma sqrt(kappa pi)) * (pi/2 - arcsin(exp(-kappa t)))``; the
    bracket is evaluated as ``arctan(sqrt(expm1(2 kappa t)))``.
    """
    if params.kappa <= 0:
        raise ParameterError("arcsine propagator needs kappa > 0")
    kappa = params.kappa
    t = np.asarray(t, dtype=float)
    angle = np.arctan(np.sqrt(np.expm1(2.0 * kappa * t)))
    return m0 / (params.L * params.sigma * math.sqrt(kappa * math.pi)) * angle


def arcsine_limit(m0: float, params: ModelParams) -> float:
    """t -> infinity limit of :func:`arcsine_propagator`."""
    if params.kappa <= 0:
        raise ParameterError("arcsine propagator needs kappa > 0")
    return m0 * SQRT_PI / (2.0 * params.L * params.sigma * math.sqrt(params.kappa))


def cost_constant_rate(m0: float, T: float, params: ModelParams,
                       regime: str = "exact-root") -> float:
    """Execution cost ``int_0^T m0 y_t dt = (2/3) A m0 sqrt(D) T^{3/2}``.

    In the large-rate regime this is ``(2 sqrt 2 / 3) Q^{3/2} / sqrt(L)``.
    """
    if regime not in REGIMES:
        raise ParameterError(f"unknown regime {regime!r}; expected one of {REGIMES}")
    if m0 == 0:
        return 0.0
    A = self_similar_A(abs(m0) / params.J, regime).A
    return 2.0 / 3.0 * A * abs(m0) * math.sqrt(params.D) * T ** 1.5


def rescaled_volume(profile: ExecutionProfile, nu, weighting: str = "cumulative") -> float:
    """Volume reweighted by book decay, ``int_0^T m_s w(s) ds``.

    ``weighting="cumulative"`` uses ``w(s) = exp(int_0^s nu)``;
    ``weighting="frozen"`` uses ``w(s) = exp(nu(s) s)``.  Both agree for a
    constant rate.  The integral is exact for the step profile.
    """
    nu = PiecewiseRate.parse(nu)
    t = profile.t_grid
    T = profile.T
    inner = [s for s in nu.starts if 0.0 < s < T]
    cuts = np.union1d(t, inner)
    a, b = cuts[:-1], cuts[1:]
    step = np.clip(np.searchsorted(t, a, side="right") - 1, 0, profile.n_steps - 1)
    rate = nu(a)
    if weighting == "cumulative":
        log_w = nu.integral(a)
    elif weighting == "frozen":
        log_w = rate * a
    else:
        raise ParameterError(f"unknown weighting {weighting!r}")
    h = b - a
    x = rate * h
    phi1 = np.where(x == 0, 1.0, np.expm1(x) / np.where(x == 0, 1.0, x))
    return float(np.sum(profile.m[step] * np.exp(log_w) * h * phi1))


def mispricing_variance(kappa: float, t, vol: float = 1.0):
    """Variance of ``B_t - f(t)`` for a Brownian ``B`` with volatility ``vol``."""
    if kappa < 0:
        raise ParameterError("kappa must be nonnegative")
    t = np.asarray(t, dtype=float)
    if kappa == 0:
        return vol * vol * t
    return vol * vol * -np.expm1(-2.0 * kappa * t) / (2.0 * kappa)


def f_of_t(path: ReferencePath | np.ndarray, kappa: float, dt: float | None = None):
    """Exponentially weighted average ``kappa int_0^t B_s exp(-kappa (t-s)) ds``.

    Integrates ``f' + kappa f = kappa B`` exactly with ``B`` interpolated
    linearly between samples, so the rule is second order for smooth paths
    and exact for piecewise-linear ones.  ``path`` may be a
    :class:`ReferencePath` or a raw array (``dt`` required) whose last axis
    is time.
    """
    if isinstance(path, ReferencePath):
        B, dt = path.B, path.dt
    else:
        B = np.asarray(path, dtype=float)
        if dt is None:
            raise ParameterError("dt is required for raw arrays")
    if kappa < 0:
        raise ParameterError("kappa must be nonnegative")
    if kappa == 0:
        return np.zeros_like(B)
    x = kappa * dt
    a = math.exp(-x)
    one_minus_a = -math.expm1(-x)
    # weights of B_{k+1} and B_k over one step; c_new -> x/2 for small x
    c_new = 1.0 - one_minus_a / x if x > 1e-4 else x / 2.0 - x * x / 6.0 + x ** 3 / 24.0
    c_old = one_minus_a - c_new
    zi = -c_new * B[..., :1]  # starts the recursion at f(0) = 0
    f, _ = signal.lfilter([c_new, c_old], [1.0, -a], B, axis=-1, zi=zi)
    return f


def large_rate_ode_residual(t, y, m, params: ModelParams):
    """Defect of ``y y' = (m - 2 D m' / y'^2) / L`` for a sampled trajectory."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    m = np.asarray(m, dtype=float)
    dy = np.gradient(y, t)
    dm = np.gradient(m, t)
    with np.errstate(divide="ignore", invalid="ignore"):
        return y * dy - (m - 2.0 * params.D * dm / dy ** 2) / params.L
