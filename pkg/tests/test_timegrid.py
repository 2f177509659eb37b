import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from evoctrl.timegrid import (IntervalTrajectory, NodeTrajectory, TimeGrid, l2_inner, l2_norm,
                              read_csv, reflect, reflection_is_isometry_check, write_csv)

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


def traj(N, w):
    return arrays(float, (N, w), elements=finite)


def test_grid_basics():
    g = TimeGrid(2.0, 4)
    assert g.dt == 0.5
    assert np.allclose(g.nodes(), [0, 0.5, 1, 1.5, 2])
    assert np.allclose(g.midpoints(), [0.25, 0.75, 1.25, 1.75])
    with pytest.raises(ValueError):
        TimeGrid(0.0, 3)
    with pytest.raises(ValueError):
        TimeGrid(1.0, 0)


def test_reflect_examples():
    g = TimeGrid(3.0, 3)
    u = IntervalTrajectory(g, [[1.0], [2.0], [3.0]])
    assert np.array_equal(reflect(u).values[:, 0], [3.0, 2.0, 1.0])
    c = IntervalTrajectory(g, np.full((3, 2), 7.0))
    assert np.array_equal(reflect(c).values, c.values)


@given(traj(6, 2))
def test_reflect_involution_and_isometry(vals):
    u = IntervalTrajectory(TimeGrid(1.0, 6), vals)
    assert np.array_equal(reflect(reflect(u)).values, vals)
    assert reflection_is_isometry_check(u)
    W = np.array([[2.0, 0.5], [0.5, 1.0]])
    assert reflection_is_isometry_check(u, W)


def test_isometry_special_cases():
    g = TimeGrid(1.0, 5)
    assert reflection_is_isometry_check(IntervalTrajectory.zeros(g, 1))
    assert reflection_is_isometry_check(IntervalTrajectory(g, (-1.0) ** np.arange(5)))


def test_l2_inner_examples():
    g = TimeGrid(2.0, 4)
    one = IntervalTrajectory(g, np.ones((4, 1)))
    assert l2_inner(one, one, np.eye(1)) == 2.0
    assert l2_inner(one, IntervalTrajectory.zeros(g, 1)) == 0.0


@given(traj(5, 3), traj(5, 3))
def test_l2_inner_vs_naive_sum_and_symmetry(a, b):
    g = TimeGrid(1.5, 5)
    W = np.diag([1.0, 2.0, 0.5]) + 0.1
    A, B = IntervalTrajectory(g, a), IntervalTrajectory(g, b)
    naive = sum(g.dt * sum(a[i, j] * W[j, k] * b[i, k] for j in range(3) for k in range(3))
                for i in range(5))
    val = l2_inner(A, B, W)
    scale = g.dt * np.sum(np.abs(a)) * np.sum(np.abs(b)) * 3 + 1e-300
    assert abs(val - naive) <= 1e-14 * scale
    assert abs(val - l2_inner(B, A, W)) <= 1e-14 * scale


def test_l2_norm_nonnegative(rng):
    u = IntervalTrajectory(TimeGrid(1.0, 7), rng.standard_normal((7, 2)))
    assert l2_norm(u) > 0


def test_width_mismatch_rejected():
    g = TimeGrid(1.0, 3)
    with pytest.raises(ValueError):
        l2_inner(IntervalTrajectory.zeros(g, 1), IntervalTrajectory.zeros(g, 2))


@given(traj(4, 2), st.floats(0.1, 100.0))
def test_csv_roundtrip_is_lossless(tmp_path_factory, vals, T):
    g = TimeGrid(T, 4)
    path = tmp_path_factory.mktemp("csv") / "u.csv"
    u = IntervalTrajectory(g, vals)
    write_csv(path, u, "u")
    back = read_csv(path, g)
    assert isinstance(back, IntervalTrajectory)
    assert np.array_equal(back.values, vals)
    x = NodeTrajectory(g, np.vstack([vals, vals[:1]]))
    write_csv(path, x, "x")
    back = read_csv(path, g)
    assert isinstance(back, NodeTrajectory)
    assert np.array_equal(back.values, x.values)


def test_csv_header_and_times(tmp_path):
    g = TimeGrid(1.0, 2)
    write_csv(tmp_path / "u.csv", IntervalTrajectory(g, [[1.0, 2.0], [3.0, 4.0]]), "u")
    lines = (tmp_path / "u.csv").read_text().splitlines()
    assert lines[0] == "t,u0,u1"
    assert lines[1].startswith("0.25,")
