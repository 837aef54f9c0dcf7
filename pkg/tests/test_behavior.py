import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from behavior_detect.behavior import (
    build_regression_matrices,
    minor_behaviors,
    selector_matrix,
    stack_behavior,
    stack_minor_behaviors,
    window_indices,
)
from behavior_detect.errors import InvalidWindowError
from behavior_detect.system_sim import NoiseSpec, Trajectory, generate_experiments, random_stable_system


def _traj(T, m, p, seed=0):
    rng = np.random.default_rng(seed)
    return Trajectory(rng.standard_normal((T, m)), rng.standard_normal((T, p)))


dims = st.tuples(st.integers(1, 10), st.integers(1, 3), st.integers(1, 3)).flatmap(
    lambda t: st.tuples(st.just(t[0]), st.integers(1, t[0]), st.just(t[1]), st.just(t[2]))
)


def test_stack_layout_siso():
    traj = Trajectory(np.array([[1.0], [2.0]]), np.array([[3.0], [4.0]]))
    np.testing.assert_array_equal(stack_behavior(traj).z, [1.0, 2.0, 3.0, 4.0])


@given(st.integers(1, 9), st.integers(1, 3), st.integers(1, 3))
def test_stack_round_trip(T, m, p):
    traj = _traj(T, m, p, seed=T * 100 + m * 10 + p)
    bv = stack_behavior(traj)
    assert bv.z.size == T * (m + p)
    back = bv.unstack()
    np.testing.assert_array_equal(back.inputs, traj.inputs)
    np.testing.assert_array_equal(back.outputs, traj.outputs)


def test_window_count_and_length_paper_setup():
    windows = minor_behaviors(_traj(7, 1, 1), L=3)
    assert len(windows) == 5
    assert all(w.f.size == 6 for w in windows)
    assert [w.window for w in windows] == [1, 2, 3, 4, 5]


def test_window_contents():
    traj = Trajectory(np.arange(5.0).reshape(5, 1), 10 + np.arange(1.0, 6.0).reshape(5, 1))
    w = minor_behaviors(traj, L=2)
    # window j: u_{j-1}, u_j | y_j, y_{j+1}
    np.testing.assert_array_equal(w[0].f, [0.0, 1.0, 11.0, 12.0])
    np.testing.assert_array_equal(w[3].f, [3.0, 4.0, 14.0, 15.0])


def test_full_window_equals_behavior():
    traj = _traj(4, 2, 1)
    (only,) = minor_behaviors(traj, L=4)
    np.testing.assert_array_equal(only.f, stack_behavior(traj).z)


def test_windows_overlap_by_L_minus_one_steps():
    traj = _traj(8, 2, 3)
    idx = window_indices(8, 3, 2, 3)
    for a, b in zip(idx[:-1], idx[1:]):
        assert len(set(a) & set(b)) == 2 * (2 + 3)


def test_invalid_window_rejected():
    with pytest.raises(InvalidWindowError):
        minor_behaviors(_traj(3, 1, 1), L=4)
    with pytest.raises(InvalidWindowError):
        minor_behaviors(_traj(3, 1, 1), L=0)


@given(dims)
def test_windows_only_reuse_behavior_coordinates(d):
    T, L, m, p = d
    traj = _traj(T, m, p)
    z = stack_behavior(traj).z
    idx = window_indices(T, L, m, p)
    for w, row in zip(minor_behaviors(traj, L), idx):
        np.testing.assert_array_equal(w.f, z[row])


def test_regression_matrices_paper_shape(plant, unit_noise):
    data = generate_experiments(plant, unit_noise, N=200, T=7, master_seed=1)
    dm = build_regression_matrices(data, L=3)
    assert dm.F.shape == (6, 800) and dm.F_next.shape == (6, 800)


def test_regression_matrices_minimal(plant, unit_noise):
    data = generate_experiments(plant, unit_noise, N=1, T=4, master_seed=1)
    dm = build_regression_matrices(data, L=3)
    assert dm.F.shape[1] == 1


def test_regression_matrices_shift_property():
    sys = random_stable_system(2, 2, 1, seed=2)
    data = generate_experiments(sys, NoiseSpec(), N=4, T=6, master_seed=0)
    L = 2
    dm = build_regression_matrices(data, L)
    per = data.T - L
    for col in range(dm.F.shape[1]):
        i, j = divmod(col, per)
        windows = minor_behaviors(data[i], L)
        np.testing.assert_array_equal(dm.F[:, col], windows[j].f)
        np.testing.assert_array_equal(dm.F_next[:, col], windows[j + 1].f)


def test_regression_requires_a_pair(plant, unit_noise):
    data = generate_experiments(plant, unit_noise, N=3, T=7, master_seed=1)
    with pytest.raises(InvalidWindowError, match="no regression pairs"):
        build_regression_matrices(data, L=7)


def test_selector_is_permutation_for_single_window():
    K = selector_matrix(5, 5, 2, 1)
    assert K.shape == (15, 15)
    np.testing.assert_array_equal(K @ K.T, np.eye(15))


@settings(max_examples=60)
@given(dims)
def test_selector_structure(d):
    T, L, m, p = d
    K = selector_matrix(T, L, m, p)
    assert K.shape == (T * (m + p), (T - L + 1) * L * (m + p))
    assert np.all(K.sum(axis=1) == 1)
    assert np.all(K.sum(axis=0) <= 1)
    assert np.isclose(np.linalg.norm(K, 2), 1.0)


@settings(max_examples=60)
@given(dims, st.integers(0, 2**31 - 1))
def test_selector_reconstructs_behavior(d, seed):
    T, L, m, p = d
    traj = _traj(T, m, p, seed)
    z = stack_behavior(traj).z
    D = np.concatenate([w.f for w in minor_behaviors(traj, L)])
    assert np.array_equal(selector_matrix(T, L, m, p) @ D, z)


def test_selector_uses_earliest_window():
    K = selector_matrix(4, 2, 1, 1)
    idx = window_indices(4, 2, 1, 1).ravel()
    for q in range(K.shape[0]):
        pos = int(np.argmax(K[q]))
        assert idx[pos] == q
        assert pos == int(np.flatnonzero(idx == q)[0])


def test_batched_minor_stack_matches_per_trajectory(plant, unit_noise):
    data = generate_experiments(plant, unit_noise, N=3, T=7, master_seed=2)
    D = stack_minor_behaviors(data.behaviors(), 7, 3, 1, 1)
    for i in range(3):
        np.testing.assert_array_equal(D[i], np.concatenate([w.f for w in minor_behaviors(data[i], 3)]))
