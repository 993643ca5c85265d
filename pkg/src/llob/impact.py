"""Impacted-price integral equations and their marching fixed-point solver.

Three kernels are supported:

``llob``
    y_t = (1/L) int_0^t m_s (4 pi D (t-s))^{-1/2} exp(-(y_t - y_s)^2 / (4 D (t-s))) ds
``dep-can``
    the same with ``m_s`` reweighted by book decay plus a deposition term
    ``lam * (1 - 2 Phi_{y_t, 2D(t-s)}(0)) = lam * erf(y_t / (2 sqrt(D (t-s))))``
``mean-rev``
    y_t = (1/L) int_0^t m_s e^{kappa s} (4 pi D C(s,t))^{-1/2}
          exp(-(y_t - y_s)^2 / (4 D C(s,t))) ds,  C(s,t) = int_s^t e^{2 kappa u} du

Time is marched node by node.  At node ``t_k`` all earlier prices are frozen
and the scalar ``y_k`` is found by damped Picard iteration.  On every step the
singular factor is integrated in closed form while the Gaussian factor is
taken at the step midpoint; on the final step, where the Gaussian depends on
the unknown, it is integrated exactly for a linear ``y``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .analytic import C_of, f_of_t
from .core import (ConvergenceError, ExecutionProfile, ImpactTrajectory, ModelParams,
                   ParameterError, ReferencePath, running_cost)

log = logging.getLogger(__name__)

VARIANTS = ("llob", "dep-can", "mean-rev")
NU_WEIGHTINGS = ("frozen", "cumulative")
_ROUNDOFF = 64 * np.finfo(float).eps
_OMEGA_MIN = 2.0 ** -40


class PicardError(ConvergenceError):
    def __init__(self, node: int, residual: float, iterations: int):
        super().__init__(f"Picard iteration did not converge at node {node}: "
                         f"residual {residual:.3e} after {iterations} iterates")
        self.node = node
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class SolverConfig:
    """Discretisation and fixed-point settings.

    ``n_steps=None`` solves on the profile's own grid; otherwise the profile
    is resampled.  ``lam_decay_weight`` puts the book-decay weight on the
    deposition term too.  ``nu_weighting`` selects ``exp(nu(s) s)``
    ("frozen") or ``exp(int_0^s nu)`` ("cumulative"); they coincide for a
    constant ``nu``.
    """

    n_steps: int | None = None
    picard_tol: float = 1e-10
    picard_max_iter: int = 500
    damping: float = 1.0
    lam_decay_weight: bool = False
    nu_weighting: str = "frozen"

    def __post_init__(self):
        if self.n_steps is not None and (int(self.n_steps) != self.n_steps or self.n_steps < 2):
            raise ParameterError("n_steps must be an integer >= 2")
        if not self.picard_tol > 0:
            raise ParameterError("picard_tol must be positive")
        if int(self.picard_max_iter) != self.picard_max_iter or self.picard_max_iter < 1:
            raise ParameterError("picard_max_iter must be a positive integer")
        if not 0 < self.damping <= 1:
            raise ParameterError("damping must lie in (0, 1]")
        if self.nu_weighting not in NU_WEIGHTINGS:
            raise ParameterError(f"nu_weighting must be one of {NU_WEIGHTINGS}")


@dataclass(frozen=True)
class KernelVariant:
    tag: str
    params: ModelParams

    def __post_init__(self):
        if self.tag not in VARIANTS:
            raise ParameterError(f"unknown variant {self.tag!r}; expected one of {VARIANTS}")
        if self.tag == "mean-rev" and self.params.kappa <= 0:
            raise ParameterError("mean-rev variant requires kappa > 0")

    @classmethod
    def parse(cls, tag: str, params: ModelParams) -> "KernelVariant":
        aliases = {"depcan": "dep-can", "meanrev": "mean-rev"}
        return cls(aliases.get(tag, tag), params)


def resample_profile(profile: ExecutionProfile, n_steps: int) -> ExecutionProfile:
    """Step-function resampling onto ``n_steps`` uniform steps over [0, T]."""
    if n_steps == profile.n_steps:
        return profile
    t = np.linspace(0.0, profile.T, n_steps + 1)
    idx = np.clip(np.searchsorted(profile.t_grid, t, side="right") - 1, 0, profile.n_steps)
    return ExecutionProfile(t, profile.m[idx])


# ---------------------------------------------------------------------------
# Discretisation
# ---------------------------------------------------------------------------

def _scaled_erf_ratio(z: float) -> float:
    """sqrt(pi) erf(sqrt z) / (2 sqrt z): exact last-step Gaussian factor."""
    if z < 1e-8:
        return 1.0 - z / 3.0
    r = math.sqrt(z)
    return math.sqrt(math.pi) * math.erf(r) / (2.0 * r)


def _erf_antiderivative(a: float, tau: np.ndarray) -> np.ndarray:
    """H(tau) = int_0^tau erf(a / sqrt(u)) du."""
    tau = np.asarray(tau, dtype=float)
    if a == 0.0:
        return np.zeros_like(tau)
    s = math.copysign(1.0, a)
    a = abs(a)
    out = np.zeros_like(tau)
    pos = tau > 0
    tp = tau[pos]
    rt = np.sqrt(tp)
    q = a / rt
    out[pos] = (tp * special.erf(q) + 2.0 * a * rt / math.sqrt(math.pi) * np.exp(-q * q)
                - 2.0 * a * a * special.erfc(q))
    return s * out


class _Discretisation:
    """Per-grid quantities of the product-integration rule."""

    def __init__(self, profile: ExecutionProfile, variant: KernelVariant, config: SolverConfig):
        p = variant.params
        self.tag = variant.tag
        self.params = p
        self.config = config
        n = profile.n_steps
        dt = profile.dt
        self.n = n
        self.dt = dt
        self.t = profile.t_grid
        self.m = profile.m
        D = p.D
        self.D = D
        s_mid = (np.arange(n) + 0.5) * dt
        self.s_mid = s_mid
        lag = np.arange(1, n + 1)  # lag n -> step covering tau in [(n-1)dt, n dt]
        if self.tag == "mean-rev":
            kappa = p.kappa
            ang = np.arctan(np.sqrt(np.expm1(2.0 * kappa * dt * np.arange(n + 1))))
            self.weight = (math.sqrt(2.0 / kappa) * np.diff(ang)
                           / math.sqrt(4.0 * math.pi * D) / p.L)
            # 4 D C(s_mid_j, t_k) = 4 D e^{2 kappa s_mid_j} * E[lag]
            self.growth = np.exp(2.0 * kappa * s_mid)
            self.lag_time = np.expm1(2.0 * kappa * (lag - 0.5) * dt) / (2.0 * kappa)
        else:
            self.weight = (2.0 * math.sqrt(dt) * (np.sqrt(lag) - np.sqrt(lag - 1))
                           / math.sqrt(4.0 * math.pi * D) / p.L)
            self.growth = None
            self.lag_time = (lag - 0.5) * dt
        rate = self.m[:-1].astype(float)
        self.decay_weight = np.ones(n)
        if self.tag == "dep-can" and not p.nu.is_zero:
            if config.nu_weighting == "frozen":
                self.decay_weight = np.exp(p.nu(s_mid) * s_mid)
            else:
                self.decay_weight = np.exp(p.nu.integral(s_mid))
            rate = rate * self.decay_weight
        self.rate = rate
        self.lam = p.lam if self.tag == "dep-can" else 0.0
        self.lam_weight = self.decay_weight if config.lam_decay_weight else None

    def last_step_variance(self, k: int) -> float:
        if self.tag == "mean-rev":
            return 4.0 * self.D * float(C_of(self.t[k - 1], self.t[k], self.params.kappa))
        return 4.0 * self.D * self.dt

    def node_terms(self, k: int, y: np.ndarray):
        """Frozen history for node k: (coef, centre, variance) of steps j < k-1."""
        j = np.arange(k - 1)
        lags = k - j  # >= 2
        coef = self.rate[: k - 1] * self.weight[lags - 1]
        centre = 0.5 * (y[: k - 1] + y[1:k])
        var = 4.0 * self.D * self.lag_time[lags - 1]
        if self.growth is not None:
            var = var * self.growth[: k - 1]
        return coef, centre, var

    def lam_term(self, k: int, yk: float) -> float:
        if self.lam == 0.0:
            return 0.0
        a = yk / (2.0 * math.sqrt(self.D))
        if self.lam_weight is None:
            return self.lam * float(_erf_antiderivative(a, np.array([self.t[k]]))[0]) / self.params.L
        edges = self.dt * np.arange(k + 1)  # tau at step edges, lag order
        H = _erf_antiderivative(a, edges)
        per_lag = np.diff(H)  # lag 1..k
        w = self.lam_weight[:k][::-1]
        return self.lam * float(np.dot(w, per_lag)) / self.params.L

    def rhs(self, k: int, yk: float, y: np.ndarray, hist=None, with_scale: bool = False):
        """Right-hand side at node k; ``with_scale`` also returns sum of |terms|."""
        coef, centre, var = hist if hist is not None else self.node_terms(k, y)
        d = yk - centre
        gauss = np.exp(-d * d / var)
        terms = coef * gauss
        total = float(np.sum(terms))
        dy = yk - y[k - 1]
        z = dy * dy / self.last_step_variance(k)
        last = self.rate[k - 1] * self.weight[0] * _scaled_erf_ratio(z)
        lam = self.lam_term(k, yk)
        total += last + lam
        if with_scale:
            return total, float(np.sum(np.abs(terms))) + abs(last) + abs(lam)
        return total


# ---------------------------------------------------------------------------
# Solver
# ---------------------------------------------------------------------------

def solve_impact(profile: ExecutionProfile, variant: KernelVariant,
                 config: SolverConfig | None = None) -> ImpactTrajectory:
    """March the impacted price through the profile's time grid.

    For ``mean-rev`` the ``x`` field holds the original-frame price for a
    zero reference path; use :func:`to_original_frame` for other paths.
    """
    config = config or SolverConfig()
    if config.n_steps is not None:
        profile = resample_profile(profile, config.n_steps)
    if profile.n_steps < 2:
        raise ParameterError("profile needs at least 2 steps")
    disc = _Discretisation(profile, variant, config)
    n = disc.n
    y = np.zeros(n + 1)
    tol = config.picard_tol
    omega_cap = config.damping
    omega = omega_cap
    for k in range(1, n + 1):
        hist = disc.node_terms(k, y)
        yk = y[k - 1]
        prev_inc = 0.0
        lo, hi = -math.inf, math.inf
        converged = False
        for it in range(1, config.picard_max_iter + 1):
            g, scale = disc.rhs(k, yk, y, hist, with_scale=True)
            inc = g - yk
            # absolute tolerance, floored at the roundoff of the quadrature sum
            if abs(inc) <= max(tol, _ROUNDOFF * scale):
                converged = True
                break
            # g is bounded, so g(y) - y changes sign across the fixed point
            if inc > 0:
                lo = max(lo, yk)
            else:
                hi = min(hi, yk)
            if hi - lo <= 4.0 * np.spacing(abs(yk)):
                # bracket collapsed to adjacent floats: steep map, tol unrepresentable
                converged = True
                break
            if prev_inc * inc < 0 and abs(inc) > 0.5 * abs(prev_inc):
                omega = max(0.5 * omega, _OMEGA_MIN)
            elif prev_inc * inc > 0 and abs(inc) > 0.7 * abs(prev_inc):
                # slow monotone creep: damping is too strong
                omega = min(omega_cap, 2.0 * omega)
            prev_inc = inc
            cand = yk + omega * inc
            if not lo < cand < hi:
                # overshoot past a known sign change: bisect, or take a full
                # step while the bracket is still open on that side
                cand = 0.5 * (lo + hi) if math.isfinite(lo + hi) else yk + inc
            yk = cand
        if not converged:
            raise PicardError(k, abs(inc), it)
        y[k] = yk
        if it <= 3 and omega < omega_cap:
            omega = min(omega_cap, 2.0 * omega)
    x = y.copy()
    if variant.tag == "mean-rev":
        x = np.exp(-variant.params.kappa * profile.t_grid) * y
    return ImpactTrajectory(profile.t_grid, y, x, running_cost(profile.m, y, profile.dt))


def linear_response(profile: ExecutionProfile, variant: KernelVariant,
                    config: SolverConfig | None = None) -> np.ndarray:
    """Small-signal limit of :func:`solve_impact` (Gaussian factor set to 1)."""
    config = config or SolverConfig()
    disc = _Discretisation(profile, variant, config)
    y = np.zeros(disc.n + 1)
    y[1:] = np.convolve(disc.rate, disc.weight)[: disc.n]
    return y


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------

_GL_X, _GL_W = np.polynomial.legendre.leggauss(4)


def _refined_rhs(k: int, yk: float, y: np.ndarray, profile: ExecutionProfile,
                 variant: KernelVariant, config: SolverConfig) -> float:
    """Right-hand side at node k by Gauss-Legendre in v = sqrt(t_k - s).

    Each step is mapped separately, ``y`` is interpolated linearly and the
    decay weight is evaluated pointwise, so nothing is shared with the
    marching rule.
    """
    p = variant.params
    t = profile.t_grid
    tk = t[k]
    va = np.sqrt(tk - t[1 : k + 1])  # step j: s in [t_j, t_{j+1}] -> v in [va, vb]
    vb = np.sqrt(tk - t[:k])
    half = 0.5 * (vb - va)
    v = (0.5 * (va + vb))[:, None] + half[:, None] * _GL_X[None, :]
    wq = half[:, None] * _GL_W[None, :]
    s = tk - v * v
    ys = np.interp(s, t, y)
    m = profile.m[:k][:, None]
    D = p.D
    if variant.tag == "mean-rev":
        kappa = p.kappa
        tau = v * v
        # e^{kappa s} / sqrt(C(s,t)) * 2v  ->  2 v sqrt(2 kappa / expm1(2 kappa tau))
        with np.errstate(invalid="ignore", divide="ignore"):
            jac = np.where(v > 0, 2.0 * v * np.sqrt(2.0 * kappa / np.expm1(2.0 * kappa * tau)), 2.0)
        var = 4.0 * D * C_of(s, np.full_like(s, tk), kappa)
    else:
        jac = np.full_like(v, 2.0)
        var = 4.0 * D * v * v
    weight = np.ones_like(s)
    if variant.tag == "dep-can" and not p.nu.is_zero:
        if config.nu_weighting == "frozen":
            weight = np.exp(p.nu(s) * s)
        else:
            weight = np.exp(p.nu.integral(s))
    d = yk - ys
    with np.errstate(invalid="ignore", divide="ignore"):
        gauss = np.where(var > 0, np.exp(-d * d / np.where(var > 0, var, 1.0)), 1.0)
    total = np.sum(wq * m * weight * jac * gauss) / math.sqrt(4.0 * math.pi * D)
    if variant.tag == "dep-can" and p.lam > 0:
        with np.errstate(divide="ignore"):
            arg = np.where(v > 0, yk / (2.0 * math.sqrt(D) * np.where(v > 0, v, 1.0)),
                           np.sign(yk) * np.inf)
        lw = weight if config.lam_decay_weight else 1.0
        total += p.lam * np.sum(wq * 2.0 * v * lw * special.erf(arg))
    return float(total / p.L)


def residual(trajectory: ImpactTrajectory, profile: ExecutionProfile,
             variant: KernelVariant, config: SolverConfig | None = None,
             method: str = "refined", nodes=None) -> float:
    """Max absolute defect ``|y_k - RHS_k(y)|`` of a trajectory.

    ``method="refined"`` re-evaluates the continuous equation with an
    independent quadrature; ``method="discrete"`` re-evaluates the marching
    rule itself.  ``nodes`` restricts the check to a subset of node indices.
    """
    config = config or SolverConfig()
    if trajectory.t_grid.shape != profile.t_grid.shape or not np.allclose(
            trajectory.t_grid, profile.t_grid, rtol=1e-12, atol=0.0):
        raise ParameterError("trajectory and profile grids differ")
    y = np.asarray(trajectory.y, dtype=float)
    idx = range(1, profile.n_steps + 1) if nodes is None else nodes
    if method == "discrete":
        disc = _Discretisation(profile, variant, config)
        return max((abs(y[k] - disc.rhs(k, y[k], y)) for k in idx), default=0.0)
    if method == "refined":
        return max((abs(y[k] - _refined_rhs(k, y[k], y, profile, variant, config)) for k in idx),
                   default=0.0)
    raise ParameterError(f"unknown residual method {method!r}")


# ---------------------------------------------------------------------------
# Frames
# ---------------------------------------------------------------------------

def _path_f(trajectory: ImpactTrajectory, path: ReferencePath | None, kappa: float) -> np.ndarray:
    if path is None:
        return np.zeros_like(trajectory.t_grid)
    if path.t_grid.shape != trajectory.t_grid.shape or not np.allclose(
            path.t_grid, trajectory.t_grid, rtol=1e-12, atol=0.0):
        raise ParameterError("reference path grid does not match the trajectory")
    return f_of_t(path, kappa)


def to_original_frame(trajectory: ImpactTrajectory, path: ReferencePath | None,
                      kappa: float) -> ImpactTrajectory:
    """Fill ``x`` from the working-frame ``y``: ``x_t = e^{-kappa t} y_t + f(t)``."""
    if kappa < 0:
        raise ParameterError("kappa must be nonnegative")
    if kappa == 0:
        x = np.array(trajectory.y)
    else:
        x = np.exp(-kappa * trajectory.t_grid) * trajectory.y + _path_f(trajectory, path, kappa)
    return ImpactTrajectory(trajectory.t_grid, trajectory.y, x, trajectory.cost_running)


def to_working_frame(x: np.ndarray, trajectory: ImpactTrajectory, path: ReferencePath | None,
                     kappa: float) -> np.ndarray:
    """Inverse map ``y_t = e^{kappa t} (x_t - f(t))``."""
    if kappa == 0:
        return np.array(x, dtype=float)
    return np.exp(kappa * trajectory.t_grid) * (np.asarray(x) - _path_f(trajectory, path, kappa))
