import warnings

import numpy as np
import pytest

from laxhj.domain import GridFunction, make_grid, sup_diff
from laxhj.model import build_model
from laxhj.semigroup import make_params
from laxhj.stationary import (
    AMBIGUOUS,
    SOLVABLE,
    UNSOLVABLE,
    AubryEmptyWarning,
    BracketError,
    NoSolutionError,
    Probe,
    aubry_set,
    classification_is_monotone,
    compute_aubry_set,
    compute_u_max,
    compute_u_min,
    estimate_c0,
    estimate_c0_infsup,
    fixed_point_residual,
)

N = 128


@pytest.fixture(scope="module")
def e1():
    grid = make_grid(N)
    model = build_model("e1", grid)
    return model, make_params(model, grid)


@pytest.fixture(scope="module")
def e3():
    grid = make_grid(N)
    model = build_model("e3", grid)
    return model, make_params(model, grid)


@pytest.fixture(scope="module")
def e1_critical():
    # At the critical value the fine-step stage drifts for t ~ 700 before settling.
    grid = make_grid(64)
    model = build_model("e1", grid)
    return model, make_params(model, grid, t_max=1000.0)


@pytest.fixture(scope="module")
def e1_u_max(e1_critical):
    model, params = e1_critical
    return compute_u_max(model, params, probe=True)


def test_u_max_e1_critical(e1_critical, e1_u_max):
    model, params = e1_critical
    assert np.all(e1_u_max.values >= 0)
    assert fixed_point_residual(e1_u_max, model, params) <= params.tol_fix


def test_u_max_e1_below_critical_fails(e1):
    model, params = e1
    with pytest.raises(NoSolutionError, match="no solution at this c"):
        compute_u_max(model.with_c(-0.5), params)


def test_ordering_e1_critical(e1_critical, e1_u_max):
    model, params = e1_critical
    pair = compute_u_min(model, params, u_max=e1_u_max)
    assert np.all(pair.u_min.values <= pair.u_max.values + params.tol_fix)
    assert fixed_point_residual(pair.u_min, model, params) <= params.tol_fix


def test_two_solutions_above_critical(e1):
    model, params = e1
    pair = compute_u_min(model.with_c(5.0), params)
    assert pair.gap > 0.1
    assert np.all(pair.u_min.values <= pair.u_max.values + params.tol_fix)
    for u in (pair.u_max, pair.u_min):
        assert fixed_point_residual(u, model.with_c(5.0), params) <= params.tol_fix


def test_c0_bracket_shrinks_and_contains_zero(e1):
    model, params = e1
    est = estimate_c0(model, (-1.0, 1.0), params, iterations=10)
    assert est.width == pytest.approx(2.0 / 2**10, rel=1e-12)
    assert est.lo < est.hi
    assert abs(est.center) <= 0.05
    assert est.monotone


def test_c0_shift_is_exact(e1):
    model, params = e1
    base = estimate_c0(model, (-1.0, 1.0), params, iterations=8)
    plus_one = model.shifted(1.0)
    shifted_params = make_params(plus_one, params.grid)
    shifted = estimate_c0(plus_one, (0.0, 2.0), shifted_params, iterations=8)
    assert shifted.lo == base.lo + 1.0
    assert shifted.hi == base.hi + 1.0


def test_c0_bad_bracket(e1):
    model, params = e1
    with pytest.raises(BracketError):
        estimate_c0(model, (0.5, 1.0), params, iterations=1)
    with pytest.raises(BracketError):
        estimate_c0(model, (1.0, -1.0), params, iterations=1)


def test_monotone_classification_helper():
    def mk(c, o):
        return Probe(c, o, "", 0.0, 0.0)

    assert classification_is_monotone([mk(-1, UNSOLVABLE), mk(0, AMBIGUOUS), mk(1, SOLVABLE)])
    assert not classification_is_monotone([mk(-1, SOLVABLE), mk(0, UNSOLVABLE)])


@pytest.fixture(scope="module")
def infsup_e1():
    grid = make_grid(N)
    return estimate_c0_infsup(build_model("e1", grid), grid)


def test_infsup_e1(e1, infsup_e1):
    model, params = e1
    value, _ = infsup_e1
    lo = estimate_c0(model, (-1.0, 1.0), params, iterations=10).lo
    assert value <= 0.05
    assert value >= lo - 1e-6


def test_infsup_e3():
    grid = make_grid(N)
    value, u = estimate_c0_infsup(build_model("e3", grid), grid)
    assert value <= 0.05


def test_infsup_shift_is_exact():
    grid = make_grid(64)
    model = build_model("e3", grid)
    a = 0.75
    base, _ = estimate_c0_infsup(model, grid, stages=4, steps_per_stage=30)
    shifted, _ = estimate_c0_infsup(model.shifted(a), grid, stages=4, steps_per_stage=30)
    assert shifted - base == pytest.approx(a, abs=1e-12)


def test_aubry_identical_inputs():
    g = make_grid(16)
    u = GridFunction.from_callable(g, np.sin)
    np.testing.assert_array_equal(compute_aubry_set(u, u, 0.0), np.arange(16))


def test_aubry_empty_warns():
    g = make_grid(8)
    with pytest.warns(AubryEmptyWarning):
        idx = compute_aubry_set(GridFunction.constant(g, 0), GridFunction.constant(g, 1), 1e-5)
    assert idx.size == 0


def test_aubry_e3_contains_zero_and_pi(e3):
    model, params = e3
    u = compute_u_max(model, params)
    idx = aubry_set(u, model, params)
    grid = params.grid
    assert grid.nearest_index(0.0) in idx
    assert grid.nearest_index(np.pi) in idx


def test_aubry_e1_above_critical_nonempty(e1):
    model, params = e1
    m5 = model.with_c(5.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error", AubryEmptyWarning)
        idx = aubry_set(compute_u_max(m5, params), m5, params)
    assert idx.size > 0
