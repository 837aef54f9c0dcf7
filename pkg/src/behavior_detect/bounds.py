"""Finite-sample and sensitivity bounds, evaluated as diagnostics.

All norms are spectral norms.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import UnstableModelError
from .estimation import block_power_matrix, spectral_radius

GAMMA_REL_TOL = 1e-14


@dataclass
class BoundReport:
    bound: float
    confidence: float
    applicable: bool = True
    flags: list = field(default_factory=list)
    inputs: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _norm(X) -> float:
    return float(np.linalg.norm(np.atleast_2d(X), 2))


def direct_bound(S: np.ndarray, N: int, theta: float) -> BoundReport:
    """Spectral-norm deviation bound for the sample covariance of N behaviors.

    With r = tr(S)/||S||, ||S - S_hat|| <= (sqrt(2 theta (r+1)/N) + 2 theta r/N) ||S||
    holds with probability at least 1 - 2 d exp(-theta), d = dim(S), for N > d.
    """
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    S = np.asarray(S, dtype=float)
    d = S.shape[0]
    s_norm = _norm(S)
    r = float(np.trace(S)) / s_norm
    bound = (math.sqrt(2.0 * theta * (r + 1.0) / N) + 2.0 * theta * r / N) * s_norm
    confidence = max(0.0, 1.0 - 2.0 * d * math.exp(-theta))
    flags = []
    applicable = N > d
    if not applicable:
        flags.append(f"precondition N > T(m+p) violated (N={N}, T(m+p)={d})")
    if confidence == 0.0:
        flags.append("vacuous: confidence is zero")
    return BoundReport(
        bound=bound,
        confidence=confidence,
        applicable=applicable,
        flags=flags,
        inputs={"theta": theta, "N": N, "dim": d, "r": r, "S_norm": s_norm},
    )


def gramian_sum(M: np.ndarray, terms: int) -> np.ndarray:
    """sum_{j=0}^{terms} M^j (M^j)^T, stopping early once increments are negligible."""
    M = np.asarray(M, dtype=float)
    rho = spectral_radius(M)
    if rho >= 1.0:
        raise UnstableModelError(f"Gramian sum diverges (spectral radius {rho:.6f})", rho)
    total = np.eye(M.shape[0])
    Mj = np.eye(M.shape[0])
    for _ in range(terms):
        Mj = Mj @ M
        inc = Mj @ Mj.T
        total += inc
        if np.trace(inc) < GAMMA_REL_TOL * np.trace(total):
            break
    return total


def gamma_s(M: np.ndarray, delta: float, dim: int, trace_gramian: float) -> float:
    return math.sqrt(8.0 * dim * (math.log(5.0 / delta) + (math.log(4.0 * trace_gramian) + 1.0) / 2.0))


def ols_sample_thresholds(dim: int, trace_gramian: float, theta: float, k: float) -> tuple[float, float]:
    """(N_eta, N_s): regression sample sizes above which the OLS bound applies."""
    n_eta = k * math.log(2.0 / theta) + dim * math.log(5.0)
    n_s = k * (dim * math.log(trace_gramian + 1.0) + 2.0 * dim * math.log(5.0 / theta))
    return n_eta, n_s


def ols_bound(M: np.ndarray, L: int, m: int, p: int, N_id: int, theta: float, k: float = 1.0) -> BoundReport:
    """||M - M_hat|| <= sqrt(k/N_id) gamma_s(M, theta/4) with probability 1 - theta."""
    if not 0.0 < theta < 1.0:
        raise ValueError("theta must lie in (0, 1)")
    dim = L * (m + p)
    gram = gramian_sum(M, N_id)
    tr = float(np.trace(gram))
    gamma = gamma_s(M, theta / 4.0, dim, tr)
    bound = math.sqrt(k / N_id) * gamma
    n_eta, n_s = ols_sample_thresholds(dim, tr, theta, k)
    applicable = N_id >= max(n_eta, n_s)
    flags = [] if applicable else [f"N_id={N_id} below sample threshold {max(n_eta, n_s):.1f}"]
    return BoundReport(
        bound=bound,
        confidence=1.0 - theta,
        applicable=applicable,
        flags=flags,
        inputs={
            "theta": theta,
            "k": k,
            "N_id": N_id,
            "dim": dim,
            "trace_gramian": tr,
            "gamma_s": gamma,
            "N_eta": n_eta,
            "N_s": n_s,
        },
    )


def calibrate_ols_constant(errors, N_id: int, gamma: float, coverage: float) -> float:
    """Smallest k for which the OLS bound covers ``coverage`` of observed errors."""
    q = float(np.quantile(np.asarray(errors, dtype=float), coverage, method="higher"))
    return N_id * (q / gamma) ** 2


def is_psd(X: np.ndarray, tol: float = 1e-12) -> bool:
    X = np.asarray(X, dtype=float)
    w = np.linalg.eigvalsh(0.5 * (X + X.T))
    return bool(w.min() >= -tol * max(1.0, np.abs(w).max()))


def sensitivity_P(M, dM, Sigma_eps, dSigma_eps, L: int, m: int, p: int) -> float:
    """Right-hand side of the Lyapunov-solution sensitivity inequality.

    The inequality is stated for PSD perturbations of P and Sigma_eps; callers
    check that with :func:`is_psd`.
    """
    M, dM = np.atleast_2d(M), np.atleast_2d(dM)
    Sigma_eps, dSigma_eps = np.atleast_2d(Sigma_eps), np.atleast_2d(dSigma_eps)
    d = M.shape[0]
    Mp = M + dM
    mp_norm = _norm(Mp)
    sig_norm = _norm(Sigma_eps + dSigma_eps)
    if mp_norm == 0.0 or sig_norm == 0.0:
        raise ValueError("degenerate perturbation: ||M + dM|| or ||Sigma + dSigma|| is zero")
    lead = math.sqrt(L * (m + p)) * _norm(np.eye(d * d) - np.kron(M.T, M.T))
    noise_term = (1.0 + mp_norm) ** 2 * (_norm(dSigma_eps) / sig_norm)
    dyn_term = 2.0 * (_norm(M) + _norm(dM)) ** 2 * (_norm(dM) / mp_norm)
    return lead * (noise_term + dyn_term)


def sensitivity_F(M, dM, T: int, L: int) -> float:
    """||F|| + 1 + 2 sum_{k=1}^{T-L} ||M + dM||^k, F the block-power matrix of M."""
    M, dM = np.atleast_2d(M), np.atleast_2d(dM)
    mp_norm = _norm(M + dM)
    tail = sum(mp_norm ** k for k in range(1, T - L + 1))
    return _norm(block_power_matrix(M, T, L)) + 1.0 + 2.0 * tail


def indirect_bound(F_norm: float, P_norm: float, dP_bound: float, dF_bound: float, confidences=()) -> BoundReport:
    """||F|| ||dP|| + ||dF|| ||P|| + ||dF|| ||dP||.

    The confidence is the product of the constituent confidences, which treats
    the events as independent; it is a heuristic and flagged as such.
    """
    for name, val in (("F_norm", F_norm), ("P_norm", P_norm), ("dP_bound", dP_bound), ("dF_bound", dF_bound)):
        if val < 0:
            raise ValueError(f"{name} must be nonnegative")
    bound = F_norm * dP_bound + dF_bound * P_norm + dF_bound * dP_bound
    confidence = float(np.prod(confidences)) if len(confidences) else 1.0
    flags = ["confidence is a heuristic product of independent events"] if len(confidences) else []
    return BoundReport(
        bound=bound,
        confidence=confidence,
        flags=flags,
        inputs={"F_norm": F_norm, "P_norm": P_norm, "dP": dP_bound, "dF": dF_bound},
    )


def bound_diagnostics(sys, noise, N: int, T: int, L: int, theta: float, ols_theta: float = 0.1,
                      k: float = 1.0, draws: int = 200, seed: int = 0) -> dict:
    """Evaluate every bound next to the errors measured over ``draws`` data sets.

    Reference quantities for the indirect pipeline are its large-sample limit
    computed from the exact behavior covariance.
    """
    from .estimation import direct_covariance, indirect_covariance, indirect_population_limit
    from .system_sim import generate_experiments, true_behavior_covariance

    m, p = sys.m, sys.p
    S = true_behavior_covariance(sys, noise, T).S_hat
    ref = indirect_population_limit(S, T, L, m, p)
    F_ref = block_power_matrix(ref.M, T, L)
    N_id = N * (T - L)

    direct = direct_bound(S, N, theta)
    ols = ols_bound(ref.M, L, m, p, N_id, ols_theta, k)

    d_err, m_err, sens_p, sens_f, ind = [], [], [], [], []
    psd_ok = 0
    for i in range(draws):
        data = generate_experiments(sys, noise, N, T, _draw_seed(seed, i))
        d_err.append(_norm(direct_covariance(data).S_hat - S))
        est, model = indirect_covariance(data, L)
        dM = model.M_hat - ref.M
        dSig = model.Sigma_eps_hat - ref.Sigma_eps
        dP = model.P_hat - ref.P
        dF = block_power_matrix(model.M_hat, T, L) - F_ref
        m_err.append(_norm(dM))
        if is_psd(dP) and is_psd(dSig):
            psd_ok += 1
            sens_p.append(_norm(dP) <= sensitivity_P(ref.M, dM, ref.Sigma_eps, dSig, L, m, p))
        sens_f.append(_norm(dF) <= sensitivity_F(ref.M, dM, T, L))
        rep = indirect_bound(_norm(F_ref), _norm(ref.P), _norm(dP), _norm(dF))
        ind.append(_norm(ref.S - est.S_hat) <= rep.bound)

    d_err = np.array(d_err)
    m_err = np.array(m_err)
    calibrated_k = calibrate_ols_constant(m_err, N_id, ols.inputs["gamma_s"], 1.0 - ols_theta)
    if calibrated_k > k:
        ols.flags.append(f"k={k} too small: k={calibrated_k:.3g} needed for {1 - ols_theta:.0%} coverage")
    return {
        "direct": {**direct.to_dict(), "exceedance": float(np.mean(d_err > direct.bound)),
                   "allowed_exceedance": 2.0 * S.shape[0] * math.exp(-theta)},
        "ols": {**ols.to_dict(), "coverage": float(np.mean(m_err <= ols.bound)), "calibrated_k": calibrated_k},
        "sensitivity_P": {"psd_draws": psd_ok, "coverage": float(np.mean(sens_p)) if sens_p else None},
        "sensitivity_F": {"coverage": float(np.mean(sens_f))},
        "indirect": {"coverage": float(np.mean(ind)), "reference": "large-sample limit of the indirect pipeline"},
        "draws": draws,
    }


def _draw_seed(seed: int, i: int) -> int:
    return int(np.random.SeedSequence([seed, i, 7]).generate_state(1)[0])
