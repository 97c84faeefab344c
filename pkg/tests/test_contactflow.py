import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from laxhj.contactflow import (
    ContactState,
    classify,
    contact_rhs,
    find_fixed_points,
    integrate,
    linearization_eigenvalues,
    richardson_midpoint,
    shooting_oracle,
    shooting_solution,
)
from laxhj.domain import make_grid
from laxhj.experiments import ORACLE_MIDPOINT, calibrated_backward, compare_e3_fixed_points, h_decay_ratio
from laxhj.model import build_model

SQRT7 = math.sqrt(7.0)


@pytest.fixture(scope="module")
def e3():
    return build_model("e3", make_grid(64))


def _on_shell(x0, p0):
    return -(0.5 * p0 * p0 + math.cos(2 * x0) - 1.0) / math.sin(x0)


def test_state_wraps_and_rejects_nonfinite():
    assert ContactState(2 * math.pi + 0.5, 1, 2).x == pytest.approx(0.5)
    assert ContactState(-0.5, 0, 0).x == pytest.approx(2 * math.pi - 0.5)
    with pytest.raises(ValueError):
        ContactState(0, math.nan, 0)


@pytest.mark.parametrize("state", [(0, 0, 0), (math.pi / 2, 2, 0), (math.pi, 0, 0), (3 * math.pi / 2, -2, 0)])
def test_rest_points_of_e3(e3, state):
    assert np.allclose(contact_rhs(ContactState(*state), e3), 0.0, atol=1e-14)


def test_rhs_by_substitution(e3):
    dx, dp, du = contact_rhs(ContactState(0.0, 0.0, 1.0), e3)
    assert (dx, dp, du) == pytest.approx((1.0, 0.0, 0.5), abs=1e-15)


def test_rhs_reduces_to_shell_equations(e3, rng):
    # On the shell with this model: x' = p, p' = -(cos x u - 2 sin 2x) - sin x p, u' = p^2.
    for _ in range(20):
        x, p = rng.uniform(0.2, 2.9), rng.uniform(-2, 2)
        u = _on_shell(x, p)
        dx, dp, du = contact_rhs(ContactState(x, u, p), e3)
        assert dx == pytest.approx(p, abs=1e-13)
        assert dp == pytest.approx(-(math.cos(x) * u - 2 * math.sin(2 * x)) - math.sin(x) * p, abs=1e-12)
        assert du == pytest.approx(p * p, abs=1e-12)


def test_shell_is_invariant_over_long_run(e3):
    x0, p0 = 1.0, 0.3
    tr = integrate(ContactState(x0, _on_shell(x0, p0), p0), e3, 20.0, 1e-3)
    assert not tr.aborted
    assert np.abs(tr.H).max() <= 1e-8
    assert np.all(np.diff(tr.u) >= -1e-12)
    assert np.allclose(np.diff(tr.t), 1e-3)


def test_off_shell_decay_law(e3):
    x0, p0 = 1.0, 0.2
    u0 = (0.1 - 0.5 * p0 * p0 - math.cos(2 * x0) + 1.0) / math.sin(x0)
    # By t = 10 H has decayed to 5e-6; much later it sits at rounding level
    # and the ratio stops measuring the flow.
    tr = integrate(ContactState(x0, u0, p0), e3, 10.0, 1e-3)
    assert tr.H[0] == pytest.approx(0.1, abs=1e-14)
    assert np.max(np.abs(h_decay_ratio(tr, e3) - 1.0)) <= 1e-6


def test_backward_direction_times(e3):
    tr = integrate(ContactState(1.0, 0.5, 0.1), e3, 0.01, 1e-3, "backward")
    assert tr.t[-1] == pytest.approx(-0.01)


def test_blowup_aborts(e3):
    x0, p0 = 4.0, -0.5
    tr = integrate(ContactState(x0, _on_shell(x0, p0), p0), e3, 20.0, 1e-3)
    assert tr.aborted
    assert len(tr) < 20_001
    assert np.all(np.isfinite(tr.u))


def test_integrate_rejects_bad_step(e3):
    with pytest.raises(ValueError):
        integrate(ContactState(0, 0, 0), e3, 1.0, 0.0)


def test_trajectory_csv(e3, tmp_path):
    tr = integrate(ContactState(1.0, 0.5, 0.1), e3, 0.01, 1e-3)
    lines = tr.write_csv(tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "t,x,u,p,H"
    assert len(lines) == len(tr) + 1


def test_e3_fixed_points(e3):
    fps = find_fixed_points(e3, 64)
    ok, measured = compare_e3_fixed_points(fps, tol=1e-8)
    assert ok, measured
    kinds = [fp.kind for fp in fps]
    assert kinds == ["saddle", "stable-focus", "saddle", "unstable-focus"]
    assert all(fp.isolated for fp in fps)
    d = fps[0].to_dict()
    assert {"x", "u", "p", "eigen_re1", "eigen_im1", "eigen_re2", "eigen_im2", "class"} <= set(d)


def test_e3_eigenvalues_are_roots(e3):
    for fp in find_fixed_points(e3, 64):
        tr = np.trace(fp.jacobian)
        det = np.linalg.det(fp.jacobian)
        for z in fp.eigenvalues:
            assert abs(z * z - tr * z + det) <= 1e-10
        assert fp.full_jacobian.shape == (3, 3)


def test_e1_rest_points_form_a_circle():
    fps = find_fixed_points(build_model("e1", make_grid(64)), 64)
    assert fps
    xs = [fp.state.x for fp in fps]
    assert any(abs(x) < 1e-9 for x in xs) and any(abs(x - math.pi) < 1e-9 for x in xs)
    for fp in fps:
        assert abs(fp.state.u) < 1e-9 and fp.state.p == 0.0
        assert not fp.isolated
        assert fp.kind == "degenerate"


@pytest.mark.parametrize(
    "J, expected, kind",
    [
        ([[0, 1], [4, 0]], (-2, 2), "saddle"),
        ([[0, 1], [-2, -1]], (complex(-0.5, -SQRT7 / 2), complex(-0.5, SQRT7 / 2)), "stable-focus"),
        ([[0, 1], [-2, 1]], (complex(0.5, -SQRT7 / 2), complex(0.5, SQRT7 / 2)), "unstable-focus"),
        ([[-1, 0], [0, -3]], (-3, -1), "stable-node"),
        ([[2, 0], [0, 1]], (1, 2), "unstable-node"),
        ([[0, 1], [-1, 0]], (-1j, 1j), "center"),
        ([[1, 1], [1, 1]], (0, 2), "degenerate"),
    ],
)
def test_classify_examples(J, expected, kind):
    assert classify(J) == kind
    got = linearization_eigenvalues(J)
    for a, b in zip(got, expected):
        assert abs(a - b) <= 1e-12


@given(
    st.sampled_from([[[0, 1], [4, 0]], [[0, 1], [-2, -1]], [[0, 1], [-2, 1]], [[-1, 0.3], [0, -3]], [[2, 1], [0, 1]]]),
    st.lists(st.floats(-2, 2), min_size=4, max_size=4),
)
def test_classify_similarity_invariant(J, entries):
    S = np.array(entries).reshape(2, 2) + 3 * np.eye(2)
    if abs(np.linalg.det(S)) < 0.5 or np.linalg.cond(S) > 50:
        return
    J = np.array(J, dtype=float)
    assert classify(np.linalg.inv(S) @ J @ S) == classify(J)


def test_oracle_ends_and_slopes():
    for branch in ("left", "right"):
        seg = shooting_oracle(branch, 1024)
        assert seg.ok
        assert seg.values[0] == 0.0 and seg.values[-1] == 0.0
        assert abs(seg.slopes[0]) <= 1e-3 and abs(seg.slopes[-1]) <= 1e-3


def test_oracle_midpoint_regression():
    a, b = richardson_midpoint(1024)
    assert abs(a - b) <= 1e-6
    assert a == pytest.approx(ORACLE_MIDPOINT, abs=1e-12)


def test_oracle_argument_checks():
    with pytest.raises(ValueError):
        shooting_oracle("left", 64)
    with pytest.raises(ValueError):
        shooting_oracle("middle", 256)


def test_oracle_satisfies_equation_away_from_kinks():
    n = 1024
    grid = make_grid(n)
    v = shooting_solution(grid).values
    x = grid.nodes
    h = grid.spacing
    dv = (np.roll(v, -1) - np.roll(v, 1)) / (2 * h)
    res = 0.5 * dv**2 + np.sin(x) * v + np.cos(2 * x) - 1.0
    kinks = [0, n // 4, n // 2, 3 * n // 4]
    mask = np.ones(n, bool)
    for k in kinks:
        mask[[(k + d) % n for d in (-1, 0, 1)]] = False
    assert np.max(np.abs(res[mask])) <= 1e-4


def test_oracle_nonnegative():
    assert shooting_solution(make_grid(256)).values.min() >= 0.0


def test_calibrated_curve_tends_to_zero():
    tr = calibrated_backward(0.1, 30.0, 1e-3)
    assert not tr.aborted
    assert tr.t[-1] == pytest.approx(-30.0)
    x_end = tr.x[-1]
    assert min(x_end, 2 * math.pi - x_end) <= 1e-3
