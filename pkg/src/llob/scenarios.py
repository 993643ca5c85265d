"""Named experiments reproducing the model's scaling laws and properties.

Each runner solves, tabulates and then hands its tables to a verdict
function that sees nothing else, so every summary number can be recomputed
from the written tables.  Parameters come from versioned presets in
``llob/presets``; see :func:`run_scenario`.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from . import analytic
from .book import GridSpec, SimOptions, simulate
from .config import RunConfig, load_preset
from .core import (ExecutionProfile, ModelParams, ParameterError, PiecewiseRate, ReferencePath,
                   brownian_path)
from .impact import KernelVariant, SolverConfig, solve_impact

log = logging.getLogger(__name__)

Table = dict[str, np.ndarray]


@dataclass
class ScenarioReport:
    id: str
    params: dict
    tables: dict[str, Table]
    summary: dict = field(default_factory=dict)
    passed: bool = False

    def to_json(self) -> dict:
        return {"id": self.id, "params": self.params, "summary": _plain(self.summary),
                "passed": bool(self.passed), "tables": sorted(self.tables)}


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def loglog_fit(x, y) -> tuple[float, float, float]:
    """Least-squares ``log y = a + b log x``; returns (b, exp(a), R^2)."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    b, a = np.polyfit(lx, ly, 1)
    pred = a + b * lx
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(b), float(math.exp(a)), r2


def _fit_nodes(n_steps: int, n_points: int, drop: int, lo_frac: float) -> np.ndarray:
    """Log-spaced node indices in [lo_frac * n, n], smallest ``drop`` removed."""
    idx = np.unique(np.round(np.geomspace(lo_frac * n_steps, n_steps, n_points)).astype(int))
    return idx[drop:]


def _params_record(cfg: RunConfig) -> dict:
    return {k: v for k, v in sorted(cfg.values.items()) if not k.startswith("output.")}


# ---------------------------------------------------------------------------
# Square-root law
# ---------------------------------------------------------------------------

def run_sqrt_law(params: ModelParams, rates, T: float, config: SolverConfig,
                 n_fit: int = 10, drop: int = 2) -> tuple[dict[str, Table], dict]:
    """Constant-rate llob runs; impact against executed volume per rate."""
    rows = {"m0_over_J": [], "t": [], "Q": [], "y": []}
    for r in rates:
        m0 = r * params.J
        profile = ExecutionProfile.constant(m0, T, config.n_steps)
        traj = solve_impact(profile, KernelVariant("llob", params), config)
        idx = _fit_nodes(profile.n_steps, n_fit, drop, 1e-2)
        Q = profile.cumulative_volume
        rows["m0_over_J"] += [r] * idx.size
        rows["t"] += list(profile.t_grid[idx])
        rows["Q"] += list(Q[idx])
        rows["y"] += list(traj.y[idx])
    points = {k: np.asarray(v, float) for k, v in rows.items()}
    meta = {"L": params.L, "D": params.D, "T": T, "fit": f"log-log OLS per rate, {drop} smallest of "
            f"{n_fit} points dropped"}
    return {"points": points}, meta


def verdict_sqrt_law(tables: dict[str, Table], meta: dict) -> tuple[dict, bool]:
    pts = tables["points"]
    rates = np.unique(pts["m0_over_J"])
    per = {"m0_over_J": [], "exponent": [], "prefactor": [], "r2": [], "small_rate_ratio": []}
    lx_all, ly_all = [], []
    for r in rates:
        sel = pts["m0_over_J"] == r
        b, pref, r2 = loglog_fit(pts["Q"][sel], pts["y"][sel])
        per["m0_over_J"].append(r)
        per["exponent"].append(b)
        per["prefactor"].append(float(np.mean(pts["y"][sel] / np.sqrt(pts["Q"][sel]))))
        per["r2"].append(r2)
        lx = np.log(pts["Q"][sel])
        ly = np.log(pts["y"][sel])
        lx_all.append(lx - lx.mean())
        ly_all.append(ly - ly.mean())
        m0 = r * meta["L"] * meta["D"]
        t_last = pts["t"][sel][-1]
        small = m0 * math.sqrt(t_last) / (meta["L"] * math.sqrt(math.pi * meta["D"]))
        per["small_rate_ratio"].append(float(pts["y"][sel][-1] / small))
    # pooled fixed-effects slope: common exponent, one intercept per rate
    lx, ly = np.concatenate(lx_all), np.concatenate(ly_all)
    pooled = float(np.dot(lx, ly) / np.dot(lx, lx))
    resid = ly - pooled * lx
    pooled_r2 = 1.0 - float(np.sum(resid ** 2) / np.sum(ly ** 2))
    large = int(np.argmax(per["m0_over_J"]))
    large_ratio = per["prefactor"][large] / math.sqrt(2.0 / meta["L"])
    summary = {
        "exponent": pooled, "r2": pooled_r2,
        "per_rate": per,
        "large_rate_prefactor_ratio": large_ratio,
        "small_rate_oracle_ratio": per["small_rate_ratio"][int(np.argmin(per["m0_over_J"]))],
        "fit": meta["fit"],
    }
    ok = (0.45 <= pooled <= 0.55 and pooled_r2 >= 0.99
          and all(0.45 <= b <= 0.55 for b in per["exponent"]) and min(per["r2"]) >= 0.99)
    return summary, bool(ok)


# ---------------------------------------------------------------------------
# Cost scaling
# ---------------------------------------------------------------------------

def run_cost_scaling(params: ModelParams, rate: float, T: float, config: SolverConfig,
                     n_fit: int = 10, drop: int = 2,
                     small_rate: float = 1e-2) -> tuple[dict[str, Table], dict]:
    """Cost of a constant-rate execution against the volume executed so far.

    The rate is constant, so the execution of volume ``Q = m0 t`` is the
    prefix of one long trajectory and a single solve covers every volume.
    """
    tables = {}
    for label, r in (("large", rate), ("small", small_rate)):
        m0 = r * params.J
        profile = ExecutionProfile.constant(m0, T, config.n_steps)
        traj = solve_impact(profile, KernelVariant("llob", params), config)
        idx = _fit_nodes(profile.n_steps, n_fit, drop, 1e-2)
        t = profile.t_grid[idx]
        oracle = np.array([analytic.cost_constant_rate(m0, ti, params, "small-rate") for ti in t])
        tables[label] = {"m0_over_J": np.full(idx.size, r), "t": t,
                         "Q": profile.cumulative_volume[idx], "cost": traj.cost_running[idx],
                         "small_rate_formula": oracle}
    meta = {"fit": f"log-log OLS, {drop} smallest of {n_fit} points dropped"}
    return tables, meta


def verdict_cost_scaling(tables: dict[str, Table], meta: dict) -> tuple[dict, bool]:
    big = tables["large"]
    b, pref, r2 = loglog_fit(big["Q"], big["cost"])
    small = tables["small"]
    dev = float(np.max(np.abs(small["cost"] / small["small_rate_formula"] - 1.0)))
    summary = {"exponent": b, "prefactor": pref, "r2": r2, "small_rate_max_rel_dev": dev,
               "fit": meta["fit"]}
    return summary, bool(1.45 <= b <= 1.55 and r2 >= 0.99 and dev < 0.03)


# ---------------------------------------------------------------------------
# Manipulation
# ---------------------------------------------------------------------------

def linear_benchmark(t_eval, profile_fn: Callable[[float], float], weight_fn: Callable[[float], float],
                     params: ModelParams, breaks=()) -> np.ndarray:
    """``(1/L) int_0^t m_s w(s) (4 pi D (t-s))^{-1/2} ds`` by adaptive quadrature.

    The inverse square root is handled by QUADPACK's algebraic weight; the
    integrand is split at the given breakpoints.
    """
    out = []
    norm = 1.0 / (params.L * math.sqrt(4.0 * math.pi * params.D))
    for t in np.asarray(t_eval, float):
        if t <= 0:
            out.append(0.0)
            continue
        edges = [0.0] + [b for b in sorted(breaks) if 0 < b < t] + [t]
        total = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            mid = 0.5 * (a + b)
            m = profile_fn(mid)
            # int_a^b w(s) (t - s)^{-1/2} ds with the singular weight at s = t
            val, _ = integrate.quad(weight_fn, a, b, weight="alg", wvar=(0.0, -0.5)) \
                if b == t else integrate.quad(lambda s: weight_fn(s) / math.sqrt(t - s), a, b)
            total += m * val
        out.append(norm * total)
    return np.asarray(out)


def run_manipulation(params: ModelParams, t_switch: float, m0: float, T: float,
                     config: SolverConfig, linear_scale: float = 1e-3,
                     n_bench: int = 24) -> tuple[dict[str, Table], dict]:
    """Buy on [0, t_switch), sell on [t_switch, T] under piecewise ``nu``."""
    variant = KernelVariant("dep-can", params)
    profile = ExecutionProfile.round_trip(m0, t_switch, T, config.n_steps)
    traj = solve_impact(profile, variant, config)
    alt = SolverConfig(config.n_steps, config.picard_tol, config.picard_max_iter, config.damping,
                       config.lam_decay_weight,
                       "cumulative" if config.nu_weighting == "frozen" else "frozen")
    traj_alt = solve_impact(profile, variant, alt)
    # small-amplitude copy against the quadrature benchmark
    small = profile.scaled(linear_scale)
    traj_small = solve_impact(small, variant, config)
    idx = np.unique(np.round(np.linspace(0, profile.n_steps, n_bench + 1)).astype(int))[1:]
    t_b = profile.t_grid[idx]
    nu = params.nu
    if config.nu_weighting == "frozen":
        weight = lambda s: math.exp(float(nu(s)) * s)  # noqa: E731
    else:
        weight = lambda s: math.exp(float(nu.integral(s)))  # noqa: E731
    mfun = lambda s: m0 * linear_scale * (1.0 if s < t_switch else -1.0)  # noqa: E731
    bench = linear_benchmark(t_b, mfun, weight, params, breaks=tuple(nu.starts) + (t_switch,))
    tables = {
        "trajectory": {"t": profile.t_grid, "m": profile.m, "y": traj.y,
                       "cost": traj.cost_running, "y_alt_weighting": traj_alt.y,
                       "cost_alt_weighting": traj_alt.cost_running},
        "benchmark": {"t": t_b, "y_solver": traj_small.y[idx], "y_benchmark": bench},
    }
    meta = {"nu_weighting": config.nu_weighting, "alt_weighting": alt.nu_weighting,
            "expect": "negative" if nu.values[0] > nu.values[-1] else "nonnegative"}
    return tables, meta


def verdict_manipulation(tables: dict[str, Table], meta: dict) -> tuple[dict, bool]:
    traj = tables["trajectory"]
    cost = float(traj["cost"][-1])
    bench = tables["benchmark"]
    dev = float(np.max(np.abs(bench["y_solver"] - bench["y_benchmark"]))
                / np.max(np.abs(bench["y_benchmark"])))
    summary = {"cost": cost, "cost_alt_weighting": float(traj["cost_alt_weighting"][-1]),
               "nu_weighting": meta["nu_weighting"], "alt_weighting": meta["alt_weighting"],
               "benchmark_rel_dev": dev, "expect": meta["expect"]}
    sign_ok = cost < 0 if meta["expect"] == "negative" else cost >= 0
    return summary, bool(sign_ok and dev < 0.03)


# ---------------------------------------------------------------------------
# Monotonicity
# ---------------------------------------------------------------------------

def run_monotonicity(params: ModelParams, axis: str, grid, m0: float, T: float,
                     config: SolverConfig) -> tuple[dict[str, Table], dict]:
    """Terminal impact across a sweep of ``D`` (llob) or ``kappa`` (mean-rev).

    For ``kappa`` the original-frame price ``x_T`` is the impact; the
    working-frame ``y_T`` is tabulated alongside.
    """
    profile = ExecutionProfile.constant(m0, T, config.n_steps)
    values = np.asarray(grid, float)
    y_T, x_T = [], []
    for v in values:
        if axis == "D":
            p = params.replace(sigma=math.sqrt(2.0 * v), kappa=0.0)
            traj = solve_impact(profile, KernelVariant("llob", p), config)
        elif axis == "kappa":
            traj = solve_impact(profile, KernelVariant("mean-rev", params.replace(kappa=v)),
                                config)
        else:
            raise ParameterError("axis must be 'D' or 'kappa'")
        y_T.append(traj.y[-1])
        x_T.append(traj.x[-1])
    table = {"value": values, "y_T": np.asarray(y_T), "x_T": np.asarray(x_T)}
    tables = {f"sweep_{axis}": table}
    if axis == "kappa":
        llob = solve_impact(profile, KernelVariant("llob", params.replace(kappa=0.0)), config)
        tables["llob_limit"] = {"y_T": np.array([llob.y[-1]])}
    return tables, {"axis": axis}


def verdict_monotonicity(tables: dict[str, Table], meta: dict) -> tuple[dict, bool]:
    summary = {}
    ok = True
    for name, tab in tables.items():
        if not name.startswith("sweep_"):
            continue
        axis = name[len("sweep_"):]
        impact = tab["x_T"]
        dec = bool(np.all(np.diff(impact) < 0))
        summary[f"{axis}_strictly_decreasing"] = dec
        summary[f"{axis}_working_frame_decreasing"] = bool(np.all(np.diff(tab["y_T"]) < 0))
        ok &= dec
        if axis == "kappa" and "llob_limit" in tables:
            rel = abs(impact[0] / tables["llob_limit"]["y_T"][0] - 1.0)
            summary["kappa_to_zero_rel_dev"] = float(rel)
            ok &= rel < 0.01
    return summary, bool(ok)


# ---------------------------------------------------------------------------
# Tracking
# ---------------------------------------------------------------------------

def run_tracking(params: ModelParams, kappas, grid: GridSpec, n_steps: int, vol: float, seed: int,
                 mc_kappas, n_paths: int, mc_T: float, mc_dt: float, refine: bool = True,
                 advection: str = "upwind") -> tuple[dict[str, Table], dict]:
    """Book simulations without a metaorder driven by a Brownian reference.

    Also a Monte Carlo of ``B_t - f(t)`` over ``n_paths`` seeded paths.
    """
    path = brownian_path(seed, n_steps, grid.dT, vol)
    opts = SimOptions(sources=False, advection=advection)
    rows = {"kappa": [], "rms_p_f": [], "rms_p_B": []}
    for k in kappas:
        p = params.replace(kappa=k)
        run = simulate(grid, p, path, None, opts, n_steps=n_steps)
        f = analytic.f_of_t(path, k)
        rows["kappa"].append(k)
        rows["rms_p_f"].append(float(np.sqrt(np.mean((run.prices - f) ** 2))))
        rows["rms_p_B"].append(float(np.sqrt(np.mean((run.prices - path.B) ** 2))))
    tables = {"tracking": {k: np.asarray(v, float) for k, v in rows.items()}}
    if refine:
        # same path sampled on a half-step, half-cell grid
        fine = GridSpec(grid.M, 2 * grid.P, grid.dT / 2)
        fine_path = brownian_refined(path)
        k0 = kappas[-1]
        p = params.replace(kappa=k0)
        coarse_run = simulate(grid, p, path, None, opts, n_steps=n_steps)
        fine_run = simulate(fine, p, fine_path, None, opts, n_steps=2 * n_steps)
        f_c = analytic.f_of_t(path, k0)
        f_f = analytic.f_of_t(fine_path, k0)
        tables["refinement"] = {
            "P": np.array([grid.P, fine.P], float),
            "rms_p_f": np.array([np.sqrt(np.mean((coarse_run.prices - f_c) ** 2)),
                                 np.sqrt(np.mean((fine_run.prices[::2] - f_f[::2]) ** 2))]),
        }
    n = int(round(mc_T / mc_dt))
    mc = {"kappa": [], "t": [], "var_emp": [], "var_theory": [], "se": [], "z": []}
    for k in mc_kappas:
        diffs = np.empty(n_paths)
        for i in range(n_paths):
            bp = brownian_path(seed + 1 + i, n, mc_dt, 1.0)
            diffs[i] = bp.B[-1] - analytic.f_of_t(bp, k)[-1]
        sq = (diffs - diffs.mean()) ** 2
        var = float(sq.sum() / (n_paths - 1))
        se = float(np.std(sq, ddof=1) / math.sqrt(n_paths))
        theory = float(analytic.mispricing_variance(k, n * mc_dt))
        mc["kappa"].append(k)
        mc["t"].append(n * mc_dt)
        mc["var_emp"].append(var)
        mc["var_theory"].append(theory)
        mc["se"].append(se)
        mc["z"].append((var - theory) / se)
    tables["mispricing"] = {k: np.asarray(v, float) for k, v in mc.items()}
    return tables, {"n_paths": n_paths}


def brownian_refined(path: ReferencePath) -> ReferencePath:
    """Linear interpolation of a path onto a grid with half the step."""
    t = np.linspace(0.0, path.t_grid[-1], 2 * path.n_steps + 1)
    return ReferencePath(t, np.interp(t, path.t_grid, path.B), path.seed)


def verdict_tracking(tables: dict[str, Table], meta: dict) -> tuple[dict, bool]:
    tr = tables["tracking"]
    order = np.argsort(tr["kappa"])
    rms_pb = tr["rms_p_B"][order]
    mis = tables["mispricing"]
    summary = {"rms_p_f": list(tr["rms_p_f"]), "rms_p_B": list(tr["rms_p_B"]),
               "mispricing_max_abs_z": float(np.max(np.abs(mis["z"]))),
               "rms_p_B_decreasing_in_kappa": bool(np.all(np.diff(rms_pb) < 0))}
    ok = summary["mispricing_max_abs_z"] <= 3.0 and summary["rms_p_B_decreasing_in_kappa"]
    if "refinement" in tables:
        ref = tables["refinement"]["rms_p_f"]
        summary["refinement_improves"] = bool(ref[1] < ref[0])
        ok = ok and summary["refinement_improves"]
    return summary, bool(ok)


# ---------------------------------------------------------------------------
# Arcsine propagator
# ---------------------------------------------------------------------------

def run_arcsine(params: ModelParams, m0: float, T: float, config: SolverConfig,
                short_t: float = 0.05) -> tuple[dict[str, Table], dict]:
    profile = ExecutionProfile.constant(m0, T, config.n_steps)
    traj = solve_impact(profile, KernelVariant("mean-rev", params), config)
    ref = analytic.arcsine_propagator(profile.t_grid, m0, params)
    tables = {"trajectory": {"t": profile.t_grid, "y": traj.y, "x": traj.x, "arcsine": ref}}
    meta = {"limit": analytic.arcsine_limit(m0, params), "short_t": short_t}
    return tables, meta


def verdict_arcsine(tables: dict[str, Table], meta: dict) -> tuple[dict, bool]:
    tr = tables["trajectory"]
    t, y, ref = tr["t"], tr["y"], tr["arcsine"]
    dev = float(np.max(np.abs(y - ref)) / np.max(np.abs(ref)))
    sel = (t > 0) & (t <= meta["short_t"])
    if sel.sum() < 4:
        raise ParameterError(f"fewer than 4 nodes in (0, {meta['short_t']:g}]; "
                             "raise solver.n_steps or scenario.short_t")
    # skip the first few nodes, where the start-up step dominates
    sel &= t >= t[sel][min(4, sel.sum() - 2)]
    b, _, r2 = loglog_fit(t[sel], y[sel])
    plateau = float(y[-1] / meta["limit"])
    summary = {"sup_rel_dev": dev, "short_time_exponent": b, "short_time_r2": r2,
               "plateau_ratio": plateau, "limit": meta["limit"]}
    return summary, bool(dev < 0.02 and 0.45 <= b <= 0.55 and 0.98 <= plateau <= 1.02)


# ---------------------------------------------------------------------------
# Cross-validation
# ---------------------------------------------------------------------------

def run_cross_validation(params: ModelParams, m0: float, T: float, grids,
                         config: SolverConfig) -> tuple[dict[str, Table], dict]:
    """Book simulation against the llob integral equation on matching grids."""
    rows = {"P": [], "dT": [], "deviation": []}
    tables = {}
    for g in grids:
        n = int(round(T / g.dT))
        profile = ExecutionProfile.constant(m0, n * g.dT, n)
        run = simulate(g, params, None, profile, SimOptions(sources=False))
        cfg = SolverConfig(None, config.picard_tol, config.picard_max_iter, config.damping)
        traj = solve_impact(profile, KernelVariant("llob", params), cfg)
        scale = float(np.max(np.abs(traj.y)))
        dev = float(np.max(np.abs(run.prices - traj.y)) / scale) if scale > 0 else \
            float(np.max(np.abs(run.prices - traj.y)))
        rows["P"].append(g.P)
        rows["dT"].append(g.dT)
        rows["deviation"].append(dev)
        tables[f"trajectory_P{g.P}"] = {"t": profile.t_grid, "p_book": run.prices, "y_llob": traj.y}
    tables["refinement"] = {k: np.asarray(v, float) for k, v in rows.items()}
    return tables, {}


def verdict_cross_validation(tables: dict[str, Table], meta: dict) -> tuple[dict, bool]:
    dev = tables["refinement"]["deviation"]
    summary = {"deviation": list(dev), "finest_deviation": float(dev[-1]),
               "improves": bool(np.all(np.diff(dev) < 0))}
    return summary, bool(dev[-1] < 0.05 and summary["improves"])


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------

def _grid_list(cfg: RunConfig) -> list[GridSpec]:
    Ps = cfg.scenario_list("P")
    dTs = cfg.scenario_list("dT")
    if len(Ps) != len(dTs):
        raise ParameterError("scenario.P and scenario.dT need equal lengths")
    return [GridSpec(cfg["grid.M"], int(P), dT) for P, dT in zip(Ps, dTs)]


def _dispatch(sid: str, cfg: RunConfig):
    p = cfg.model_params()
    sc = cfg.solver_config()
    T = cfg["profile.T"]
    if sid == "sqrt-law":
        return run_sqrt_law(p, cfg.scenario_list("rates"), T, sc,
                            cfg.scenario_value("n_fit", int, 10), cfg.scenario_value("drop", int, 2))
    if sid == "cost-scaling":
        return run_cost_scaling(p, cfg.scenario_value("rate"), T, sc,
                                cfg.scenario_value("n_fit", int, 10),
                                cfg.scenario_value("drop", int, 2),
                                cfg.scenario_value("small_rate", float, 1e-2))
    if sid == "manipulation":
        nu_a = cfg.scenario_value("nu_asia")
        nu_ny = cfg.scenario_value("nu_ny")
        t_ny = cfg["profile.t_switch"]
        p = p.replace(nu=PiecewiseRate.parse(f"0:{nu_a!r},{t_ny!r}:{nu_ny!r}"))
        return run_manipulation(p, t_ny, cfg.rate(p), T, sc,
                                cfg.scenario_value("linear_scale", float, 1e-3))
    if sid == "monotonicity":
        tables, meta = {}, {"axis": "D,kappa"}
        for axis in ("D", "kappa"):
            lo, hi = cfg.scenario_list(f"{axis}_range")
            grid = np.geomspace(lo, hi, cfg.scenario_value("count", int, 8))
            part, _ = run_monotonicity(p, axis, grid, cfg.rate(p), T, sc)
            tables.update(part)
        return tables, meta
    if sid == "tracking":
        g = cfg.grid_spec()
        n = int(round(T / g.dT))
        return run_tracking(p, cfg.scenario_list("kappas"), g, n, cfg["path.vol"], cfg["run.seed"],
                            cfg.scenario_list("mc_kappas"), cfg.scenario_value("n_paths", int),
                            cfg.scenario_value("mc_T"), cfg.scenario_value("mc_dt"),
                            advection=cfg["book.advection"])
    if sid == "arcsine":
        m0 = cfg.scenario_value("rate") * p.L * p.sigma
        return run_arcsine(p, m0, T, sc, cfg.scenario_value("short_t", float, 0.05))
    if sid == "cross-validation":
        return run_cross_validation(p, cfg.rate(p), T, _grid_list(cfg), sc)
    raise ParameterError(f"unknown scenario {sid!r}")


VERDICTS = {
    "sqrt-law": verdict_sqrt_law,
    "cost-scaling": verdict_cost_scaling,
    "manipulation": verdict_manipulation,
    "monotonicity": verdict_monotonicity,
    "tracking": verdict_tracking,
    "arcsine": verdict_arcsine,
    "cross-validation": verdict_cross_validation,
}
SCENARIO_IDS = tuple(sorted(VERDICTS))


def scenario_config(sid: str, preset: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Preset ``<sid>.cfg`` (or ``<sid>-<preset>.cfg``) merged with overrides."""
    if sid not in VERDICTS:
        raise ParameterError(f"unknown scenario {sid!r}; known: {', '.join(SCENARIO_IDS)}")
    cfg = load_preset(sid if not preset else f"{sid}-{preset}")
    return cfg.merged(overrides or {})


def run_scenario(sid: str, cfg: RunConfig | None = None, preset: str | None = None) -> ScenarioReport:
    if cfg is None:
        cfg = scenario_config(sid, preset)
    if sid not in VERDICTS:
        raise ParameterError(f"unknown scenario {sid!r}; known: {', '.join(SCENARIO_IDS)}")
    tables, meta = _dispatch(sid, cfg)
    summary, passed = VERDICTS[sid](tables, meta)
    summary["meta"] = _plain(meta)
    log.info("scenario %s: %s", sid, "pass" if passed else "FAIL")
    return ScenarioReport(sid, _params_record(cfg), tables, summary, passed)


def rejudge(report: ScenarioReport) -> tuple[dict, bool]:
    """Recompute the verdict from the report's own tables."""
    return VERDICTS[report.id](report.tables, report.summary.get("meta", {}))
