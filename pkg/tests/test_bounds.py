import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from behavior_detect.bounds import (
    GAMMA_REL_TOL,
    bound_diagnostics,
    calibrate_ols_constant,
    direct_bound,
    gamma_s,
    gramian_sum,
    indirect_bound,
    is_psd,
    ols_bound,
    sensitivity_F,
    sensitivity_P,
)
from behavior_detect.errors import UnstableModelError
from behavior_detect.estimation import block_power_matrix, solve_discrete_lyapunov
from behavior_detect.system_sim import generate_experiments, true_behavior_covariance

from conftest import random_stable_matrix


# direct-estimate deviation bound

def test_direct_bound_theta_zero_is_vacuous():
    rep = direct_bound(np.eye(14), N=100, theta=0.0)
    assert rep.bound == 0.0 and rep.confidence == 0.0
    assert any("vacuous" in f for f in rep.flags)


@pytest.mark.parametrize("d,N,theta", [(4, 100, 5.0), (14, 50, 2.0), (1, 10, 0.5)])
def test_direct_bound_identity_plugin(d, N, theta):
    rep = direct_bound(np.eye(d), N, theta)
    expected = math.sqrt(2 * theta * (d + 1) / N) + 2 * theta * d / N
    assert rep.bound == pytest.approx(expected, rel=1e-14)
    assert rep.confidence == pytest.approx(max(0.0, 1 - 2 * d * math.exp(-theta)))


def test_direct_bound_confidence_for_paper_dimensions(plant, unit_noise):
    S = true_behavior_covariance(plant, unit_noise, 7).S_hat
    assert direct_bound(S, 100, 5.0).confidence == pytest.approx(1 - 28 * math.exp(-5))


def test_direct_bound_precondition_flag():
    rep = direct_bound(np.eye(14), N=10, theta=5.0)
    assert not rep.applicable
    assert any("precondition" in f for f in rep.flags)


def test_direct_bound_rejects_negative_theta():
    with pytest.raises(ValueError):
        direct_bound(np.eye(2), 10, -1.0)


@settings(max_examples=50, deadline=None)
@given(
    theta=st.floats(0.0, 20.0),
    dtheta=st.floats(0.01, 5.0),
    N=st.integers(20, 5000),
    dN=st.integers(1, 1000),
)
def test_direct_bound_monotone(theta, dtheta, N, dN):
    S = np.diag([3.0, 1.0, 0.5, 0.1])
    base = direct_bound(S, N, theta).bound
    assert direct_bound(S, N, theta + dtheta).bound >= base
    assert direct_bound(S, N + dN, theta).bound <= base


def test_direct_bound_tail_frequency(plant, unit_noise):
    S = true_behavior_covariance(plant, unit_noise, 7).S_hat
    rep = direct_bound(S, 100, 5.0)
    errs = []
    for s in range(200):
        Z = generate_experiments(plant, unit_noise, 100, 7, 50_000 + s).behaviors()
        errs.append(np.linalg.norm(Z.T @ Z / 100 - S, 2))
    assert np.mean(np.array(errs) > rep.bound) <= 2 * 14 * math.exp(-5)


# OLS bound

def test_gramian_of_zero_dynamics_is_identity():
    np.testing.assert_array_equal(gramian_sum(np.zeros((5, 5)), 100), np.eye(5))


def test_gramian_truncation_error(rng):
    M = random_stable_matrix(rng, 4, radius=0.9)
    exact = np.eye(4)
    Mj = np.eye(4)
    for _ in range(3000):
        Mj = Mj @ M
        exact += Mj @ Mj.T
    approx = gramian_sum(M, 3000)
    assert abs(np.trace(exact) - np.trace(approx)) < 1e-12 * np.trace(exact)
    assert GAMMA_REL_TOL <= 1e-14


def test_gramian_rejects_unstable():
    with pytest.raises(UnstableModelError):
        gramian_sum(np.eye(2), 10)


def test_ols_bound_zero_dynamics_plugin():
    L, m, p, theta, N_id = 3, 1, 1, 0.1, 800
    dim = L * (m + p)
    rep = ols_bound(np.zeros((dim, dim)), L, m, p, N_id, theta)
    gamma = math.sqrt(8 * dim * (math.log(5 / (theta / 4)) + (math.log(4 * dim) + 1) / 2))
    assert rep.inputs["trace_gramian"] == dim
    assert rep.inputs["gamma_s"] == pytest.approx(gamma, rel=1e-14)
    assert rep.bound == pytest.approx(gamma / math.sqrt(N_id), rel=1e-14)
    assert rep.confidence == pytest.approx(0.9)


def test_ols_bound_inverse_sqrt_scaling(rng):
    M = random_stable_matrix(rng, 6, radius=0.5)
    a = ols_bound(M, 3, 1, 1, 800, 0.1)
    b = ols_bound(M, 3, 1, 1, 1600, 0.1)
    assert a.bound / b.bound == pytest.approx(math.sqrt(2), rel=1e-10)


def test_ols_bound_threshold_flag():
    rep = ols_bound(np.zeros((6, 6)), 3, 1, 1, 5, 0.1)
    assert not rep.applicable and rep.flags


def test_ols_bound_rejects_bad_theta():
    with pytest.raises(ValueError):
        ols_bound(np.zeros((2, 2)), 1, 1, 1, 100, 1.5)


def test_calibrated_constant_reproduces_coverage():
    errors = np.linspace(0.01, 1.0, 100)
    k = calibrate_ols_constant(errors, N_id=400, gamma=10.0, coverage=0.9)
    bound = math.sqrt(k / 400) * 10.0
    assert np.mean(errors <= bound + 1e-15) >= 0.9


def test_ols_constant_one_covers_or_is_flagged(plant, unit_noise):
    report = bound_diagnostics(plant, unit_noise, N=200, T=7, L=3, theta=5.0, ols_theta=0.1, draws=500)
    ols = report["ols"]
    assert ols["inputs"]["N_id"] == 800
    assert ols["coverage"] >= 0.9 or any("too small" in f for f in ols["flags"])
    assert report["indirect"]["coverage"] == 1.0


# Lyapunov sensitivity

def test_sensitivity_P_no_perturbation(rng):
    M = random_stable_matrix(rng, 4)
    assert sensitivity_P(M, np.zeros((4, 4)), np.eye(4), np.zeros((4, 4)), 2, 1, 1) == 0.0


def test_sensitivity_P_scalar_hand_value():
    value = sensitivity_P(np.array([[0.5]]), np.array([[0.0]]), np.array([[1.0]]), np.array([[0.1]]), 1, 1, 0)
    assert value == pytest.approx(0.75 * (1.5 ** 2 * (0.1 / 1.1)), rel=1e-14)


def test_sensitivity_P_degenerate_inputs():
    with pytest.raises(ValueError):
        sensitivity_P(np.zeros((2, 2)), np.zeros((2, 2)), np.eye(2), np.zeros((2, 2)), 1, 1, 1)


def _sensitivity_draws(rng, count):
    """Perturbations of 6x6 models satisfying the PSD precondition on both deltas."""
    hits = []
    while len(hits) < count:
        M = random_stable_matrix(rng, 6)
        A = rng.standard_normal((6, 6))
        Sig = A @ A.T + np.eye(6)
        dM = rng.standard_normal((6, 6))
        dM *= rng.uniform(0, 1e-3) * rng.uniform(0, 0.05) / np.linalg.norm(dM, 2)
        B = rng.standard_normal((6, 6))
        dS = B @ B.T
        dS *= rng.uniform(0, 1e-3) / np.linalg.norm(dS, 2)
        dP = solve_discrete_lyapunov(M + dM, Sig + dS) - solve_discrete_lyapunov(M, Sig)
        if is_psd(dP) and is_psd(dS):
            hits.append(np.linalg.norm(dP, 2) <= sensitivity_P(M, dM, Sig, dS, 2, 2, 1))
    return np.array(hits)


@pytest.mark.xfail(strict=True, reason="the Lyapunov sensitivity inequality, evaluated verbatim, "
                                       "under-covers solver perturbations")
def test_sensitivity_P_coverage():
    assert _sensitivity_draws(np.random.default_rng(11), 500).mean() >= 0.95


# block-power sensitivity

def test_sensitivity_F_single_block(rng):
    M = random_stable_matrix(rng, 3)
    assert sensitivity_F(M, 0.01 * M, T=4, L=4) == pytest.approx(2.0)


def test_sensitivity_F_zero_dynamics():
    assert sensitivity_F(np.zeros((3, 3)), np.zeros((3, 3)), T=7, L=3) == pytest.approx(2.0)


def test_sensitivity_F_coverage(rng):
    for _ in range(500):
        M = random_stable_matrix(rng, 6)
        dM = rng.standard_normal((6, 6))
        dM *= rng.uniform(0, 0.1) / np.linalg.norm(dM, 2)
        actual = np.linalg.norm(block_power_matrix(M + dM, 7, 3) - block_power_matrix(M, 7, 3), 2)
        assert actual <= sensitivity_F(M, dM, 7, 3)


# combined indirect bound

def test_indirect_bound_arithmetic():
    assert indirect_bound(2.0, 1.0, 0.1, 0.2).bound == pytest.approx(0.42)


def test_indirect_bound_zero_error():
    assert indirect_bound(3.0, 5.0, 0.0, 0.0).bound == 0.0


def test_indirect_bound_confidence_is_labelled_heuristic():
    rep = indirect_bound(1.0, 1.0, 0.1, 0.1, confidences=(0.9, 0.8))
    assert rep.confidence == pytest.approx(0.72)
    assert any("heuristic" in f for f in rep.flags)


def test_indirect_bound_rejects_negative():
    with pytest.raises(ValueError):
        indirect_bound(1.0, -1.0, 0.0, 0.0)


@settings(max_examples=40, deadline=None)
@given(vals=st.lists(st.floats(0.0, 1e3), min_size=4, max_size=4))
def test_bounds_nonnegative_finite(vals):
    rep = indirect_bound(*vals)
    assert rep.bound >= 0 and math.isfinite(rep.bound)
