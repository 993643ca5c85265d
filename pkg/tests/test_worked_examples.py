"""Worked input/output examples for each operation, one small check apiece."""

import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, interpolate, optimize

from llob import analytic, cli
from llob.book import (GridSpec, SimOptions, apply_source_terms, cn_step, consume_metaorder,
                       extract_price, simulate)
from llob.core import (BookState, ExecutionProfile, ParameterError, ReferencePath, brownian_path,
                       make_params, trajectory_from_y)
from llob.impact import KernelVariant, SolverConfig, residual, solve_impact
from llob.scenarios import run_cross_validation


# parameters and paths ------------------------------------------------------
def test_parameter_arithmetic():
    p = make_params(math.sqrt(2.0), 0.0, 0.0, 0.0, 1.0)
    assert (p.D, p.J) == pytest.approx((1.0, 1.0))
    q = make_params(1.0, 0.05, 0.0, 0.0, 50.0)
    assert (q.D, q.J) == pytest.approx((0.5, 25.0))
    with pytest.raises(ParameterError, match="sigma must be positive"):
        make_params(0.0)


def test_zero_volatility_path():
    path = brownian_path(3, 50, 0.1, 0.0, offset=1.25)
    assert np.all(path.B == 1.25)


def test_brownian_terminal_variance():
    vol, T, n = 0.7, 2.0, 8
    ends = np.array([brownian_path(s, n, T / n, vol).B[-1] for s in range(10_000)])
    sq = (ends - ends.mean()) ** 2
    var, se = sq.mean() * 10_000 / 9_999, sq.std(ddof=1) / 100.0
    assert abs(var - vol * vol * T) < 3 * se


# stationary books and kernels ----------------------------------------------
def test_stationary_llob_values():
    p = make_params(1.0, lam=2.0, nu_spec=0.5)
    assert analytic.stationary_phi_llob(0.0, p) == 0.0
    assert analytic.stationary_phi_llob(200.0, p) == pytest.approx(-2.0 / 0.5)
    h = 1e-6
    slope = (analytic.stationary_phi_llob(h, p) - analytic.stationary_phi_llob(-h, p)) / (2 * h)
    assert slope == pytest.approx(-2.0 / math.sqrt(0.5 * p.D), rel=1e-6)


def test_stationary_mr_limits_and_antisymmetry():
    sigma, kappa = 0.8, 0.3
    p = make_params(sigma, kappa=kappa)
    assert np.all(analytic.stationary_phi_mr(np.linspace(-3, 3, 7), p, 0.0, 0.0) == 0.0)
    c1 = -3.0 * math.sqrt(kappa / (math.pi * sigma ** 2))
    f = lambda y: analytic.stationary_phi_mr(y, p, 1.5, c1)
    assert f(-50.0) == pytest.approx(1.5) and f(50.0) == pytest.approx(-1.5)
    # the zero sits at y = 0; check oddness against direct quadrature of the integrand
    g = lambda u: math.exp(-kappa * u * u / sigma ** 2)
    for y in (0.3, 1.0, 2.5):
        direct = 1.5 + c1 * integrate.quad(g, -np.inf, y)[0]
        assert f(y) == pytest.approx(direct, rel=1e-10)
        assert f(y) == pytest.approx(-f(-y), abs=1e-12)


def test_heat_kernel_values():
    p = make_params(1.0)
    assert analytic.heat_kernel(0.0, 0.4, p) == pytest.approx(1 / math.sqrt(4 * math.pi * p.D * 0.4))
    q = make_params(1.0, nu_spec=0.3)
    mass = integrate.quad(lambda y: analytic.heat_kernel(y, 2.0, q), -np.inf, np.inf)[0]
    assert mass == pytest.approx(math.exp(-0.6))
    for y0 in (-1.0, 0.2, 2.0):
        conv = integrate.quad(lambda y: -3.0 * y * analytic.heat_kernel(y0 - y, 0.7, p),
                              -np.inf, np.inf)[0]
        assert conv == pytest.approx(-3.0 * y0, rel=1e-9, abs=1e-12)


def test_C_values():
    assert analytic.C_of(0.2, 1.7, 0.0) == pytest.approx(1.5)
    assert analytic.C_of(0.9, 0.9, 0.4) == 0.0
    quad = integrate.quad(lambda u: math.exp(2 * 0.5 * u), 0.0, 1.0)[0]
    assert analytic.C_of(0.0, 1.0, 0.5) == pytest.approx(quad) == pytest.approx(1.718281828459045)


# impact closed forms -------------------------------------------------------
def test_small_rate_impact_values():
    p = make_params(1.0, L=2.0)
    assert analytic.impact_small_rate(0.0, 0.1, p) == 0.0
    assert analytic.impact_small_rate(2.0, 0.1, p) == pytest.approx(
        math.sqrt(2) * analytic.impact_small_rate(1.0, 0.1, p))
    m0 = 1e-3 * p.J
    A = analytic.solve_A(1e-3).A
    assert analytic.impact_small_rate(0.6, m0, p) == pytest.approx(A * math.sqrt(p.D * 0.6),
                                                                   rel=1e-3)


def test_large_rate_impact_values():
    p = make_params(1.0, L=3.0)
    assert analytic.impact_large_rate(0.0, p) == 0.0
    assert analytic.impact_large_rate(8.0, p) == pytest.approx(
        math.sqrt(2) * analytic.impact_large_rate(4.0, p))
    m0, t = 5.0, 0.8
    y = math.sqrt(2 * p.D * m0 * t / p.J)
    assert y * y * p.L / 2 == pytest.approx(m0 * t)
    assert analytic.impact_large_rate(m0 * t, p) == pytest.approx(y)


def test_linear_propagator_values():
    p = make_params(1.2, L=1.5)
    zero = analytic.linear_propagator_llob(ExecutionProfile.zero(1.0, 16), p)
    assert np.all(zero.y == 0.0)
    m0 = 0.2
    const = analytic.linear_propagator_llob(ExecutionProfile.constant(m0, 1.0, 16), p)
    t = const.t_grid
    assert np.allclose(const.y, m0 * np.sqrt(t) / (p.J * math.sqrt(math.pi)) * math.sqrt(p.D))
    # buy then sell: singular kernel integrated by weighted quadrature
    prof = ExecutionProfile.round_trip(m0, 0.4, 1.0, 100)
    y_T = analytic.linear_propagator_llob(prof, p).y[-1]
    m = lambda s: m0 if s < 0.4 else -m0
    g = lambda s: m(s) / (p.L * math.sqrt(4 * math.pi * p.D))
    # the (1 - s)^{-1/2} singularity only sits in the last piece
    ref = (integrate.quad(lambda s: g(s) / math.sqrt(1.0 - s), 0.0, 0.4)[0]
           + integrate.quad(g, 0.4, 1.0, weight="alg", wvar=(0.0, -0.5))[0])
    assert y_T == pytest.approx(ref, rel=1e-3)


def test_arcsine_values():
    p = make_params(0.6, kappa=0.9, L=2.0)
    m0 = 0.05
    assert analytic.arcsine_propagator(0.0, m0, p) == 0.0
    assert analytic.arcsine_limit(m0, p) == pytest.approx(
        m0 / (p.L * p.sigma * math.sqrt(p.kappa * math.pi)) * math.pi / 2)
    # short times: y_t / (m0 sqrt(2t) / (L sigma)) -> 1/sqrt(pi)
    t = 1e-8
    ratio = analytic.arcsine_propagator(t, m0, p) / (m0 * math.sqrt(2 * t) / (p.L * p.sigma))
    assert ratio == pytest.approx(1 / math.sqrt(math.pi), rel=1e-6)


def test_cost_values():
    p = make_params(1.0, L=2.0)
    assert analytic.cost_constant_rate(0.0, 1.0, p) == 0.0
    # large-rate cost depends on (m0, T) only through Q = m0 T
    costs = [analytic.cost_constant_rate(Q / T, T, p, "large-rate")
             for Q in (50.0,) for T in (0.5, 1.0, 4.0)]
    assert np.allclose(costs, costs[0])
    m0 = 1e-3 * p.J
    prof = ExecutionProfile.constant(m0, 1.0, 2000)
    lin = analytic.linear_propagator_llob(prof, p)
    assert analytic.cost_constant_rate(m0, 1.0, p) == pytest.approx(lin.cost, rel=0.01)


def test_rescaled_volume_values():
    prof = ExecutionProfile.constant(0.7, 3.0, 30)
    assert analytic.rescaled_volume(prof, 0.0) == pytest.approx(prof.total_volume)
    assert analytic.rescaled_volume(prof, 0.4) == pytest.approx(0.7 * math.expm1(1.2) / 0.4)


def test_mispricing_values():
    assert analytic.mispricing_variance(1e-9, 2.0) == pytest.approx(2.0, rel=1e-8)
    vals = [analytic.mispricing_variance(k, 1.5) for k in (0.1, 0.5, 1.0, 3.0)]
    assert np.all(np.diff(vals) < 0)
    quad = integrate.quad(lambda s: math.exp(-2 * (1 - s)), 0, 1)[0]
    assert analytic.mispricing_variance(1.0, 1.0) == pytest.approx(quad) == pytest.approx(
        0.43233235838169365)


# impact solver -------------------------------------------------------------
def test_solver_examples():
    p = make_params(1.0, L=1.0)
    prof = ExecutionProfile.constant(1e3 * p.J, 1.0, 4096)
    traj = solve_impact(prof, KernelVariant("llob", p))
    assert traj.y[-1] / math.sqrt(p.D) == pytest.approx(analytic.solve_A(1e3).A, rel=0.02)
    rt = ExecutionProfile.round_trip(0.8, 0.5, 1.0, 256)
    assert solve_impact(rt, KernelVariant("llob", p)).cost >= 0.0


def test_perturbed_trajectory_has_larger_residual():
    p = make_params(1.0, L=1.0)
    v = KernelVariant("llob", p)
    prof = ExecutionProfile.from_function(lambda t: 1.0 + 0.5 * np.cos(3 * t), 1.0, 128)
    traj = solve_impact(prof, v)
    bumped = trajectory_from_y(prof, traj.y + 1e-3)
    for method in ("discrete", "refined"):
        assert residual(bumped, prof, v, method=method) > residual(traj, prof, v, method=method)


def test_mean_rev_price_decays():
    p = make_params(1.0, kappa=1.0, L=1.0)
    prof = ExecutionProfile.constant(1e-3, 12.0, 1200)
    x = solve_impact(prof, KernelVariant("mean-rev", p)).x
    assert x[-1] < 1e-4 * x.max()


# book ----------------------------------------------------------------------
def test_source_step_identity_and_decay():
    st0 = BookState(np.linspace(-1, 1, 21), np.cos(np.linspace(-1, 1, 21)))
    assert apply_source_terms(st0, make_params(1.0), 0.0, 0.3) is st0
    out = apply_source_terms(st0, make_params(1.0, nu_spec=0.8), 0.0, 0.5)
    assert np.allclose(out.phi[1:-1], st0.phi[1:-1] * math.exp(-0.4))


def test_stationary_book_one_step_second_order():
    p = make_params(math.sqrt(0.1), lam=5.0, nu_spec=0.5, L=1.0)
    changes = []
    for dT in (0.01, 0.005, 0.0025):
        grid = GridSpec(5.0, 200, dT)
        phi0 = analytic.stationary_phi_llob(grid.x, p)
        state = apply_source_terms(cn_step(BookState(grid.x, phi0), p, 0.0, grid), p, 0.0, dT)
        changes.append(np.max(np.abs(state.phi - phi0)))
    assert changes[0] / changes[1] > 3.3 and changes[1] / changes[2] > 3.3


@given(st.floats(-2.0, 2.0), st.floats(0.5, 5.0), st.floats(-0.15, 0.15))
def test_price_against_spline_oracle(c, L, curv):
    x = np.linspace(-5.0, 5.0, 201)
    shape = lambda u: -L * (u - c) - curv * L * (u - c) ** 3 / (1 + (u - c) ** 2)
    state = BookState(x, shape(x))
    spline = interpolate.CubicSpline(x, state.phi)
    dense = np.linspace(-5.0, 5.0, 20001)
    i = np.flatnonzero(np.diff(np.sign(spline(dense))) != 0)[0]
    oracle = optimize.brentq(spline, dense[i], dense[i + 1], xtol=1e-14)
    assert extract_price(state, previous=c) == pytest.approx(oracle, abs=state.dx / 10)


def test_consume_zero_is_identity():
    state = BookState.linear(2.0, 1.0, 10)
    out, done = consume_metaorder(state, 0.0, 0.0)
    assert out is state and done == 0.0


def test_reversion_lowers_terminal_impact():
    grid = GridSpec(5.0, 200, 0.01)
    base = make_params(math.sqrt(0.1), L=50.0)
    prof = ExecutionProfile.constant(5.0, 2.0, 200)
    p_T = [simulate(grid, base.replace(kappa=k), None, prof,
                    SimOptions(advection="upwind")).prices[-1] for k in (0.0, 0.5)]
    assert p_T[1] < p_T[0]


def test_price_reverts_after_execution_under_opposing_drift():
    grid = GridSpec(5.0, 200, 0.01)
    p = make_params(math.sqrt(0.1), kappa=0.5, L=50.0)
    n = 800
    t = np.linspace(0.0, 8.0, n + 1)
    path = ReferencePath(t, -0.05 * t)
    prof = ExecutionProfile.from_function(lambda s: np.where(s < 2.0, 5.0, 0.0), 8.0, n)
    run = simulate(grid, p, path, prof, SimOptions(advection="upwind"))
    assert np.all(run.prices[1:201] > 0)
    assert run.prices[-1] < 0 and run.prices[-1] < run.prices[200]


def test_cross_validation_zero_order():
    p = make_params(1.0, L=1.0)
    tables, _ = run_cross_validation(p, 0.0, 0.5, [GridSpec(2.0, 100, 0.01)], SolverConfig())
    tr = tables["trajectory_P100"]
    # second differences of the linear book leave roundoff only
    assert np.max(np.abs(tr["p_book"])) < 1e-12 and np.all(tr["y_llob"] == 0.0)


# command line --------------------------------------------------------------
def read_column(path, name):
    lines = path.read_text().splitlines()
    col = lines[0].split(",").index(name)
    return [float(r.split(",")[col]) for r in lines[1:]]


def test_cli_zero_profile(tmp_path):
    assert cli.main(["impact", "--profile", "zero", "--n-steps", "32", "--out", str(tmp_path)]) == 0
    assert set(read_column(tmp_path / "trajectory.csv", "y")) == {0.0}


def test_cli_book_flat(tmp_path):
    out = tmp_path / "b"
    assert cli.main(["book", "--profile", "zero", "--set", "profile.T=0.5", "--out", str(out)]) == 0
    assert max(abs(v) for v in read_column(out / "price.csv", "p")) < 1e-12
    assert sorted(f.name for f in out.iterdir()) == ["config.cfg", "price.csv", "report.json"]


def test_cli_config_echo_reproduces_run(tmp_path):
    first = tmp_path / "first"
    argv = ["impact", "--variant", "dep-can", "--profile", "ramp", "--n-steps", "64",
            "--set", "model.lam=0.4", "--set", "model.nu=0:0.5,0.5:0.1"]
    assert cli.main(argv + ["--out", str(first)]) == 0
    second = tmp_path / "second"
    assert cli.main(["impact", "--config", str(first / "config.cfg"), "--out", str(second)]) == 0
    for name in ("trajectory.csv", "config.cfg", "report.json"):
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_cli_sqrt_law(tmp_path, capsys):
    code = cli.main(["scenario", "sqrt-law", "--set", "solver.n_steps=1024", "--out",
                     str(tmp_path)])
    report = json.loads((tmp_path / "report.json").read_text())
    assert code == 0 and 0.45 <= report["summary"]["exponent"] <= 0.55


def test_cli_scenario_list_is_stable(capsys):
    cli.main(["scenario", "list"])
    first = capsys.readouterr().out
    cli.main(["scenario", "list"])
    assert capsys.readouterr().out == first
