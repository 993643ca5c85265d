import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from llob import analytic
from llob.book import (BookExhaustedError, BoundaryContamination, GridSpec, OneSidedBookError,
                       SimOptions, apply_source_terms, cn_matrices, cn_step, consume_metaorder,
                       extract_price, initial_linear, inject_mollified, simulate)
from llob.core import (BookState, ExecutionProfile, ParameterError, ReferencePath, brownian_path,
                       make_params)

P50 = make_params(math.sqrt(0.1), L=50.0)
GRID = GridSpec(5.0, 200, 0.01)


def test_grid_validation():
    for bad in ((0.0, 10, 0.1), (1.0, 7, 0.1), (1.0, 9, 0.1), (1.0, 10, 0.0)):
        with pytest.raises(ParameterError):
            GridSpec(*bad)
    with pytest.raises(ParameterError):
        SimOptions(advection="sideways")
    with pytest.raises(ParameterError):
        SimOptions(guard=0.0)


def test_cn_matrix_layout():
    ab, r = cn_matrices(GRID, P50)
    assert r == pytest.approx(GRID.dT * P50.D / (2 * GRID.dx ** 2))
    assert ab[1, 0] == ab[1, -1] == 1.0
    assert ab[0, 1] == 0.0 and ab[2, -2] == 0.0
    assert np.all(ab[1, 1:-1] == 1 + 2 * r)


def test_linear_book_is_fixed_without_reversion():
    state = initial_linear(GRID, P50)
    out = state
    for _ in range(50):
        out = cn_step(out, P50, 0.0, GRID)
    assert np.max(np.abs(out.phi - state.phi)) < 1e-10
    assert out.t == pytest.approx(0.5)


def test_heat_kernel_second_order():
    p = make_params(math.sqrt(2.0))
    errs = []
    for P, dT in ((80, 0.02), (160, 0.01)):
        grid = GridSpec(8.0, P, dT)
        state = BookState(grid.x, analytic.heat_kernel(grid.x, 0.2, p), 0.0)
        for _ in range(int(round(0.3 / dT))):
            state = cn_step(state, p, 0.0, grid)
        errs.append(np.max(np.abs(state.phi - analytic.heat_kernel(grid.x, 0.5, p))))
    assert errs[0] / errs[1] > 3.5


def _reverting_deviation(advection, kappa, P, dT, steps, price_tol=1e-12):
    p = make_params(math.sqrt(0.1), kappa=kappa, L=50.0)
    grid = GridSpec(5.0, P, dT)
    run = simulate(grid, p, None, None, SimOptions(advection=advection), n_steps=steps)
    c0, c1 = analytic.mr_stationary_coefficients(p, 250.0, -250.0, 5.0)
    ref = analytic.stationary_phi_mr(grid.x, p, c0, c1)
    assert np.max(np.abs(run.prices)) < price_tol
    return np.max(np.abs(run.final.phi - ref)) / np.max(np.abs(ref))


def test_reverting_book_centered_second_order():
    coarse = _reverting_deviation("centered", 0.5, 200, 0.01, 2000)
    fine = _reverting_deviation("centered", 0.5, 400, 0.005, 4000)
    assert coarse < 5e-3 and coarse / fine > 3.0


def test_reverting_book_upwind_first_order():
    coarse = _reverting_deviation("upwind", 0.5, 200, 0.01, 2000)
    fine = _reverting_deviation("upwind", 0.5, 400, 0.005, 4000)
    assert coarse < 0.03 and coarse / fine > 1.7


def test_reverting_book_forward_weak_reversion():
    # the one-sided stencil is not mirror symmetric: the price drifts, but by under a cell
    assert _reverting_deviation("forward", 0.05, 200, 0.1, 3000, price_tol=0.05) < 0.02


def test_upwind_keeps_maximum_principle_at_strong_reversion():
    p = make_params(math.sqrt(0.1), kappa=1.0, L=50.0)
    path = brownian_path(1, 400, 0.005, 0.2)
    grid = GridSpec(5.0, 200, 0.005)
    run = simulate(grid, p, path, None, SimOptions(advection="upwind", sources=False),
                   n_steps=400)
    assert np.max(np.abs(run.final.phi)) <= 250.0 + 1e-9


@given(st.floats(0.0, 2.0), st.floats(0.0, 3.0), st.floats(1e-3, 0.5))
def test_source_step_is_a_semigroup(lam, nu, dT):
    p = make_params(1.0, lam=lam, nu_spec=nu, L=2.0)
    state = BookState.linear(2.0, 3.0, 30)
    once = apply_source_terms(state, p, 0.0, dT)
    half = apply_source_terms(state, p, 0.0, dT / 2)
    twice = apply_source_terms(half, p, 0.0, dT / 2)
    assert np.allclose(once.phi, twice.phi, rtol=1e-12, atol=1e-12)
    assert once.phi[0] == state.phi[0] and once.phi[-1] == state.phi[-1]


def test_source_step_exact_solution():
    p = make_params(1.0, lam=2.0, nu_spec=0.5)
    state = BookState(np.linspace(-1, 1, 11), np.zeros(11))
    out = apply_source_terms(state, p, 0.0, 0.3)
    expected = 4.0 * -math.expm1(-0.15)
    assert out.phi[1] == pytest.approx(expected)
    assert out.phi[9] == pytest.approx(-expected)
    assert out.phi[5] == 0.0  # node on the price


def test_stationary_llob_book_persists():
    p = make_params(math.sqrt(0.1), lam=5.0, nu_spec=0.5, L=1.0)
    grid = GridSpec(5.0, 400, 0.01)
    phi0 = analytic.stationary_phi_llob(grid.x, p)
    run = simulate(grid, p, None, None, initial=BookState(grid.x, phi0), n_steps=500)
    # the deposition sign jumps at the price; the defect sits on that kink
    assert np.max(np.abs(run.final.phi - phi0)) < 5e-3 * np.max(np.abs(phi0))
    assert np.max(np.abs(run.prices)) < 1e-12


@given(st.floats(-4.0, 4.0))
def test_price_of_linear_book(c):
    state = BookState.linear(3.0, 5.0, 100, center=c)
    assert extract_price(state) == pytest.approx(c, abs=1e-9)


def test_price_rules():
    x = np.linspace(-1.0, 1.0, 9)
    phi = np.array([2.0, 1.0, 0.5, 0.0, 0.0, 0.0, -0.5, -1.0, -2.0])
    state = BookState(x, phi)
    # emptied cells are bins: their outer face after a trade
    assert extract_price(state, side=1) == pytest.approx(0.5 * (x[5] + x[6]))
    assert extract_price(state, side=-1) == pytest.approx(0.5 * (x[2] + x[3]))
    assert extract_price(state) == pytest.approx(x[4])
    two = BookState(x, np.array([1.0, -1.0, -1.0, -1.0, 1.0, 1.0, 1.0, -1.0, -1.0]))
    assert extract_price(two, previous=0.6) == pytest.approx(0.625)
    with pytest.raises(OneSidedBookError):
        extract_price(BookState(x, np.ones(9)))
    with pytest.raises(OneSidedBookError):
        extract_price(BookState(x, np.zeros(9)))


@given(st.floats(0.01, 20.0), st.booleans())
def test_consumption_conserves_volume(volume, buy):
    state = BookState.linear(50.0, 5.0, 200)
    vol = volume if buy else -volume
    out, done = consume_metaorder(state, vol, 0.0)
    assert done == pytest.approx(volume, rel=1e-12)
    assert out.volume() - state.volume() == pytest.approx(vol, rel=1e-9)
    touched = out.phi != state.phi
    side = state.x_grid > 0 if buy else state.x_grid < 0
    assert not np.any(touched & ~side)


@pytest.mark.parametrize("P", [200, 2000])
@pytest.mark.parametrize("Q", [0.1, 1.0, 10.0, 100.0])
def test_instant_fill_reaches_square_root_price(P, Q):
    state = BookState.linear(50.0, 5.0, P)
    out, _ = consume_metaorder(state, Q, 0.0)
    assert extract_price(out, side=1) == pytest.approx(math.sqrt(2 * Q / 50.0), abs=state.dx)


def test_exhausted_book():
    state = BookState.linear(1.0, 1.0, 20)
    with pytest.raises(BookExhaustedError):
        consume_metaorder(state, 5.0, 0.0)


def test_mollified_injection_adds_volume():
    state = BookState.linear(50.0, 5.0, 200)
    out = inject_mollified(state, 0.3, 0.1)
    assert np.sum(out.phi - state.phi) * state.dx == pytest.approx(0.3)


def test_simulate_metaorder():
    prof = ExecutionProfile.constant(5.0, 1.0, 100)
    run = simulate(GRID, P50, ReferencePath.constant(0.0, 1.0, 100), prof)
    assert run.ledger.sum() == pytest.approx(prof.total_volume)
    # the post-trade price sits on a cell face and relaxes by under a cell
    assert np.all(np.diff(run.prices) >= -GRID.dx) and run.prices[-1] > 0
    assert run.prices[-1] > run.prices[50] > run.prices[10] > 0
    again = simulate(GRID, P50, ReferencePath.constant(0.0, 1.0, 100), prof)
    assert np.array_equal(run.prices, again.prices)
    sell = simulate(GRID, P50, None, prof.negated())
    assert np.allclose(sell.prices, -run.prices, atol=1e-12)


def test_simulate_snapshots():
    run = simulate(GRID, P50, None, None, SimOptions(snapshot_stride=30), n_steps=100)
    assert [s.t for s in run.snapshots] == pytest.approx([0.0, 0.3, 0.6, 0.9, 1.0])


def test_simulate_guards():
    with pytest.raises(ParameterError):
        simulate(GRID, P50, None, ExecutionProfile.constant(1.0, 1.0, 50))
    with pytest.raises(ParameterError):
        simulate(GRID, P50, None, None)
    with pytest.raises(BoundaryContamination):
        simulate(GRID, P50, None, ExecutionProfile.constant(5900.0, 0.1, 10))
