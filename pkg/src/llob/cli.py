"""Command-line entry point: ``llob {impact,book,scenario,analytic}``.

Exit codes: 0 success, 1 scenario verdict failed, 2 invalid input,
3 solver non-convergence or an aborted simulation.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import analytic
from .book import BookExhaustedError, OneSidedBookError, simulate
from .config import PROFILE_PRESETS, RunConfig, load_preset, preset_names
from .core import ConvergenceError, ParameterError, make_params
from .impact import KernelVariant, solve_impact, to_original_frame
from .scenarios import SCENARIO_IDS, ScenarioReport, run_scenario, scenario_config

log = logging.getLogger("llob")

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_SOLVER = 0, 1, 2, 3


def fmt(v) -> str:
    # adding 0.0 turns -0.0 into 0.0
    return format(float(v) + 0.0, ".17g")


def write_csv(path: Path, columns: dict) -> None:
    names = list(columns)
    cols = [np.asarray(columns[n], dtype=float) for n in names]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*cols):
            w.writerow([fmt(v) for v in row])


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_table(out: Path, name: str, columns: dict, form: str) -> None:
    if form == "json":
        write_json(out / f"{name}.json", {k: [float(v) for v in np.asarray(c, float)]
                                          for k, c in columns.items()})
    else:
        write_csv(out / f"{name}.csv", columns)


def parse_sets(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ParameterError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def base_config(args, preset: str | None = None) -> RunConfig:
    cfg = load_preset(preset) if preset else RunConfig()
    if getattr(args, "config", None):
        cfg = cfg.merged(RunConfig.load(args.config).values_set())
    overrides = parse_sets(getattr(args, "set", None))
    if getattr(args, "out", None):
        overrides["output.dir"] = args.out
    if getattr(args, "seed", None) is not None:
        overrides["run.seed"] = str(args.seed)
    return cfg.merged(overrides)


def prepare_out(cfg: RunConfig, sub: str | None = None) -> Path:
    out = cfg.output_dir()
    if sub:
        out = out / sub
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_impact(args) -> int:
    cfg = base_config(args)
    over = {"run.variant": args.variant} if args.variant else {}
    if args.profile:
        if args.profile in PROFILE_PRESETS:
            over.update({k: str(v) for k, v in PROFILE_PRESETS[args.profile].items()})
        else:
            over.update({"profile.kind": "csv", "profile.file": args.profile})
    if args.n_steps:
        over["solver.n_steps"] = str(args.n_steps)
    cfg = cfg.merged(over)
    params = cfg.model_params()
    solver = cfg.solver_config()
    variant = KernelVariant.parse(cfg["run.variant"], params)
    profile = cfg.profile(solver.n_steps, params)
    traj = solve_impact(profile, variant, solver)
    if variant.tag == "mean-rev":
        path = cfg.reference_path(profile.n_steps, profile.dt)
        traj = to_original_frame(traj, path, params.kappa)
    out = prepare_out(cfg)
    write_table(out, "trajectory", {"t": traj.t_grid, "y": traj.y, "x": traj.x, "m": profile.m,
                                    "Q": profile.cumulative_volume, "cost": traj.cost_running},
                cfg["output.format"])
    cfg.dump(out / "config.cfg")
    Q = profile.total_volume
    report = {"command": "impact", "variant": variant.tag, "y_T": float(traj.y[-1]),
              "x_T": float(traj.x[-1]), "cost": traj.cost, "Q": float(Q),
              "y_T_over_sqrt_2Q_over_L": float(traj.y[-1] / math.sqrt(2 * abs(Q) / params.L))
              if Q else 0.0}
    write_json(out / "report.json", report)
    log.info("impact %s: y_T=%s cost=%s -> %s", variant.tag, fmt(traj.y[-1]), fmt(traj.cost), out)
    return EXIT_OK


def cmd_book(args) -> int:
    preset = f"book-{args.preset}" if args.preset else None
    cfg = base_config(args, preset)
    over = {}
    if args.profile:
        if args.profile in PROFILE_PRESETS:
            over.update({k: str(v) for k, v in PROFILE_PRESETS[args.profile].items()})
        else:
            over.update({"profile.kind": "csv", "profile.file": args.profile})
    if args.snapshot_stride is not None:
        over["book.snapshot_stride"] = str(args.snapshot_stride)
    cfg = cfg.merged(over)
    params = cfg.model_params()
    grid = cfg.grid_spec()
    n = int(round(cfg["profile.T"] / grid.dT))
    if n < 1:
        raise ParameterError("profile.T shorter than one book step")
    profile = cfg.profile(n, params)
    path = cfg.reference_path(n, grid.dT)
    run = simulate(grid, params, path, profile, cfg.sim_options())
    f = analytic.f_of_t(path, params.kappa)
    out = prepare_out(cfg)
    form = cfg["output.format"]
    write_table(out, "price", {"t": run.t_grid, "p": run.prices, "B": run.B, "f": f}, form)
    stride = cfg["book.snapshot_stride"]
    for i, snap in enumerate(run.snapshots):
        step = 0 if i == 0 else min(i * stride, n)
        write_table(out, f"book_{step:04d}", {"x": snap.x_grid, "phi": snap.phi}, form)
    cfg.dump(out / "config.cfg")
    report = {"command": "book", "steps": n, "p_T": float(run.prices[-1]),
              "executed": float(np.sum(run.ledger))}
    if params.kappa > 0 and not np.any(path.B) and not np.any(profile.m):
        # boundaries stay pinned at the initial linear book
        c0, c1 = analytic.mr_stationary_coefficients(params, params.L * grid.M,
                                                     -params.L * grid.M, grid.M)
        x = run.final.x_grid
        ref = analytic.stationary_phi_mr(x, params, c0, c1)
        inner = np.abs(x) <= 0.8 * grid.M
        report["stationary_rel_dev"] = float(np.max(np.abs(run.final.phi - ref)[inner])
                                             / np.max(np.abs(ref[inner])))
    write_json(out / "report.json", report)
    log.info("book: %d steps, p_T=%s -> %s", n, fmt(run.prices[-1]), out)
    return EXIT_OK


def _save_report(report: ScenarioReport, cfg: RunConfig, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    form = cfg["output.format"]
    for name, table in sorted(report.tables.items()):
        write_table(out, name, table, form)
    body = report.to_json()
    write_json(out / "report.json", body)
    cfg.dump(out / "config.cfg")


def cmd_scenario(args) -> int:
    if args.id == "list":
        for sid in SCENARIO_IDS:
            print(sid)
        return EXIT_OK
    ids = SCENARIO_IDS if args.id == "all" else (args.id,)
    if args.id != "all" and args.id not in SCENARIO_IDS:
        print(f"unknown scenario {args.id!r}; known ids:", file=sys.stderr)
        for sid in SCENARIO_IDS:
            print(f"  {sid}", file=sys.stderr)
        return EXIT_INPUT
    overrides = parse_sets(args.set)
    if args.config:
        overrides = {**RunConfig.load(args.config).values_set(), **overrides}
    if args.out:
        overrides["output.dir"] = args.out
    if args.seed is not None:
        overrides["run.seed"] = str(args.seed)
    cfgs = {sid: scenario_config(sid, args.preset if args.id != "all" else None, overrides)
            for sid in ids}

    def job(sid):
        return sid, run_scenario(sid, cfgs[sid])

    if len(ids) > 1 and args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = dict(pool.map(job, ids))
    else:
        results = dict(job(sid) for sid in ids)
    all_ok = True
    for sid in ids:
        report = results[sid]
        cfg = cfgs[sid]
        out = cfg.output_dir() / sid if args.id == "all" else cfg.output_dir()
        _save_report(report, cfg, out)
        print(f"{sid}: {'pass' if report.passed else 'FAIL'}")
        all_ok &= report.passed
    return EXIT_OK if all_ok else EXIT_FAIL


def cmd_analytic(args) -> int:
    what = args.what
    params = make_params(args.sigma, args.kappa if args.kappa is not None else 0.0, args.lam,
                         args.nu, args.L)
    values: list[float]
    if what == "A":
        values = [analytic.self_similar_A(args.m0_over_J, args.regime).A]
    elif what == "arcsine":
        if args.t is None:
            values = [analytic.arcsine_limit(args.m0, params)]
        else:
            values = list(np.atleast_1d(analytic.arcsine_propagator(np.array(args.t), args.m0,
                                                                    params)))
    elif what == "stationary":
        values = list(np.atleast_1d(analytic.stationary_phi_llob(np.array(args.y), params)))
    elif what == "mispricing":
        values = list(np.atleast_1d(analytic.mispricing_variance(params.kappa, np.array(args.t),
                                                                 args.vol)))
    elif what == "cost":
        values = [analytic.cost_constant_rate(args.m0, args.T, params, args.regime)]
    elif what == "C":
        values = [float(analytic.C_of(args.s, args.t[0], params.kappa))]
    else:
        raise ParameterError(f"unknown closed form {what!r}")
    for v in values:
        print(fmt(v))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="llob", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="config file (key = value)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
        p.add_argument("--out", help="output directory (default $LLOB_OUT or ./out)")
        p.add_argument("--seed", type=int, help="seed for random reference paths")

    p = sub.add_parser("impact", help="solve the impacted-price equation")
    common(p)
    p.add_argument("--variant", choices=["llob", "depcan", "meanrev", "dep-can", "mean-rev"])
    p.add_argument("--profile", help=f"CSV file (t,m) or preset: {', '.join(PROFILE_PRESETS)}")
    p.add_argument("--n-steps", type=int)
    p.set_defaults(func=cmd_impact)

    p = sub.add_parser("book", help="simulate the book density")
    common(p)
    p.add_argument("--preset", help="book preset: " + ", ".join(
        n[len("book-"):] for n in preset_names() if n.startswith("book-")))
    p.add_argument("--profile", help=f"CSV file (t,m) or preset: {', '.join(PROFILE_PRESETS)}")
    p.add_argument("--snapshot-stride", type=int)
    p.set_defaults(func=cmd_book)

    p = sub.add_parser("scenario", help="run a named experiment")
    common(p)
    p.add_argument("id", help="scenario id, 'list' or 'all'")
    p.add_argument("--preset", help="scenario variant preset, e.g. equal-nu")
    p.add_argument("--jobs", type=int, default=1, help="worker threads for 'all'")
    p.set_defaults(func=cmd_scenario)

    p = sub.add_parser("analytic", help="evaluate a closed form")
    p.add_argument("what", choices=["A", "arcsine", "stationary", "mispricing", "cost", "C"])
    p.add_argument("--m0-over-J", type=float, default=1.0)
    p.add_argument("--regime", default="exact-root", choices=list(analytic.REGIMES))
    p.add_argument("--m0", type=float, default=1.0)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--kappa", type=float)
    p.add_argument("--lam", type=float, default=0.0)
    p.add_argument("--nu", default="0")
    p.add_argument("--L", type=float, default=1.0)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--t", type=_floats)
    p.add_argument("--s", type=float, default=0.0)
    p.add_argument("--y", type=_floats, default=[0.0])
    p.add_argument("--vol", type=float, default=1.0)
    p.set_defaults(func=cmd_analytic)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) if exc.code in (0, None) else EXIT_INPUT
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.command == "analytic" and args.what in ("mispricing", "C") and args.t is None:
        print("error: --t is required", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except (ParameterError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ConvergenceError, BookExhaustedError, OneSidedBookError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
