import math
import warnings

import numpy as np
import pytest

from laxhj.contactflow import shooting_solution
from laxhj.domain import GridFunction, make_grid
from laxhj.model import (
    ConvexityError,
    DifferentiableModel,
    LegendreBoundaryError,
    LegendreBoundaryWarning,
    ModelSpec,
    build_model,
    fenchel_young_gap,
    legendre_transform,
    load_model_spec,
    subsolution_residual,
)

GRID = make_grid(64)


def quadratic(**kw):
    return build_model(ModelSpec(hamiltonian=lambda x, p: 0.5 * p**2 + 0 * x, discount=lambda x: 0 * x, **kw), GRID)


@pytest.mark.parametrize("name", ["e1", "e3"])
def test_builtins(name):
    m = build_model(name, GRID)
    assert isinstance(m, DifferentiableModel)
    assert m.c == 0.0 and m.lambda_max == pytest.approx(1.0, abs=2e-3)
    assert m.sign_change
    x = np.linspace(0, 6, 7)
    p = np.linspace(-3, 3, 7)
    extra = np.cos(2 * x) - 1 if name == "e3" else 0.0
    np.testing.assert_allclose(m.hamiltonian(x, p), 0.5 * p**2 + extra, atol=1e-15)
    np.testing.assert_allclose(m.discount(x), np.sin(x))


def test_zero_discount_has_no_sign_change():
    m = quadratic()
    assert not m.sign_change and m.lambda_max == 0.0


def test_nonconvex_hamiltonian_rejected():
    spec = ModelSpec(hamiltonian=lambda x, p: -(p**2) + 0 * x, discount=np.sin)
    with pytest.raises(ConvexityError):
        build_model(spec, GRID)


def test_empty_ranges_rejected():
    with pytest.raises(ValueError):
        build_model(ModelSpec(builtin="e1", v_max=0.0), GRID)


def test_unknown_builtin():
    with pytest.raises(ValueError, match="unknown builtin"):
        build_model("e9", GRID)


def test_model_spec_file(tmp_path):
    path = tmp_path / "m.json"
    path.write_text('{"builtin": "e3", "c": 0.25, "p_max": 12, "v_max": 6, "n_velocities": 97}')
    m = build_model(load_model_spec(path), GRID)
    assert (m.c, m.p_max, m.v_max, m.n_velocities) == (0.25, 12.0, 6.0, 97)


def _at(table, v):
    j = int(np.argmin(np.abs(table.velocities - v)))
    assert table.velocities[j] == v
    return table.values[:, j]


def test_legendre_quadratic_examples():
    t = legendre_transform(quadratic(), GRID)
    np.testing.assert_allclose(_at(t, 2.0), 2.0, atol=1e-12)
    np.testing.assert_array_equal(_at(t, 0.0), 0.0)


def test_legendre_quartic_against_brute_force():
    spec = ModelSpec(hamiltonian=lambda x, p: 0.25 * p**4 + 0 * x, discount=lambda x: 0 * x, p_max=4.0)
    t = legendre_transform(build_model(spec, GRID), GRID)
    ps = np.linspace(-4, 4, 100_001)
    brute = np.max(1.0 * ps - 0.25 * ps**4)
    assert abs(brute - 0.75) <= 1e-3
    np.testing.assert_allclose(_at(t, 1.0), brute, atol=1e-3)
    np.testing.assert_allclose(_at(t, 1.0), 0.75, atol=1e-3)


def test_legendre_boundary_diagnostic():
    m = build_model(ModelSpec(builtin="e1", p_max=2.0), GRID)
    with pytest.warns(LegendreBoundaryWarning):
        legendre_transform(m, GRID)
    with pytest.raises(LegendreBoundaryError):
        legendre_transform(m, GRID, strict=True)


def test_legendre_needs_enough_velocities():
    with pytest.raises(ValueError):
        legendre_transform(build_model("e1", GRID), GRID, m=33)


@pytest.mark.parametrize("name", ["e1", "e3"])
def test_fenchel_young_and_convexity(name):
    m = build_model(name, GRID)
    t = legendre_transform(m, GRID)
    gap = fenchel_young_gap(m, t)
    assert gap.min() >= -1e-6
    assert gap.max() <= 1e-6
    d2 = t.values[:, 2:] - 2 * t.values[:, 1:-1] + t.values[:, :-2]
    assert d2.min() >= -1e-9


@pytest.mark.parametrize("a", [1.0, -0.375, 2.5])
def test_additive_shift_of_hamiltonian(a):
    m = build_model("e3", GRID)
    base = legendre_transform(m, GRID)
    shifted = legendre_transform(m.shifted(a), GRID)
    np.testing.assert_allclose(shifted.values, base.values - a, rtol=0, atol=1e-13)
    np.testing.assert_array_equal(shifted.velocities, base.velocities)


def test_residual_of_zero_e3():
    m = build_model("e3", GRID)
    r = subsolution_residual(GridFunction.constant(GRID, 0.0), m)
    np.testing.assert_allclose(r.values, np.cos(2 * GRID.nodes) - 1, atol=1e-15)
    assert r.values.max() <= 0


def test_residual_of_zero_e1():
    m = build_model("e1", GRID)
    r = subsolution_residual(GridFunction.constant(GRID, 0.0), m)
    np.testing.assert_array_equal(r.values, 0.0)


def test_residual_constant_shift(rng):
    m = build_model("e3", GRID)
    u = GridFunction(GRID, rng.normal(size=64))
    for a in (0.5, -3.0, 1e-3):
        diff = subsolution_residual(u + a, m).values - subsolution_residual(u, m).values
        np.testing.assert_allclose(diff, m.discount_on(GRID) * a, rtol=0, atol=1e-12)


def test_residual_of_shooting_profile():
    grid = make_grid(1024)
    m = build_model("e3", grid)
    r = subsolution_residual(shooting_solution(grid), m)
    assert np.max(r.values) <= 5e-2


@pytest.mark.parametrize("name", ["e1", "e3"])
def test_partials_match_finite_differences(name, rng):
    m = build_model(name, GRID)
    x = rng.uniform(0, 2 * math.pi, 200)
    p = rng.uniform(-5, 5, 200)
    eps = 1e-6

    def close(a, b):
        return np.all(np.abs(a - b) <= 1e-5 * np.maximum(1.0, np.abs(b)))

    fd_x = (m.hamiltonian(x + eps, p) - m.hamiltonian(x - eps, p)) / (2 * eps)
    fd_p = (m.hamiltonian(x, p + eps) - m.hamiltonian(x, p - eps)) / (2 * eps)
    fd_l = (m.discount(x + eps) - m.discount(x - eps)) / (2 * eps)
    assert close(m.dh_dx(x, p), fd_x)
    assert close(m.dh_dp(x, p), fd_p)
    assert close(m.dlambda_dx(x), fd_l)


def test_differentiable_model_requires_partials():
    with pytest.raises(ValueError):
        DifferentiableModel(hamiltonian=lambda x, p: p, discount=np.sin)


def test_table_csv_export(tmp_path):
    with warnings.catch_warnings():
        t = legendre_transform(build_model("e1", make_grid(8)), make_grid(8))
    text = t.write_csv(tmp_path / "L.csv").read_text().splitlines()
    assert len(text) == 9
    assert len(text[1].split(",")) == t.m + 1
