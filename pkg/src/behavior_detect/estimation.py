"""Direct and indirect estimators of the behavior covariance.

The direct estimator is the raw second-moment matrix of the observed
behaviors. The indirect estimator fits a VAR(1) model f_{j+1} = M f_j + e_j to
sliding minor behaviors, solves the discrete Lyapunov equation for the
stationary window covariance P, assembles the covariance of the stacked windows
and maps it back to the behavior coordinates through the selector K.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .behavior import DataMatrices, build_regression_matrices, selector_matrix, window_indices
from .errors import InsufficientDataError, UnstableModelError
from .system_sim import ExperimentSet

log = logging.getLogger(__name__)

STABILITY_MARGIN = 1e-9
PSD_TOL = 1e-8
OLS_MAX_COND = 1e12


@dataclass
class CovarianceEstimate:
    S_hat: np.ndarray
    method: str  # "direct" | "indirect" | "oracle"
    params: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.S_hat.shape[0]

    def metadata(self) -> dict:
        return {"method": self.method, "dim": self.dim, **self.params}


@dataclass
class IndirectModel:
    M_hat: np.ndarray
    Sigma_eps_hat: np.ndarray
    P_hat: np.ndarray
    F_blocks: list  # [I, M, M^2, ..., M^(T-L)]
    Sigma_D: np.ndarray
    spectral_radius: float
    clipped: bool = False


def _symmetrize(S: np.ndarray) -> np.ndarray:
    return 0.5 * (S + S.T)


def direct_covariance(behaviors, params: Optional[dict] = None) -> CovarianceEstimate:
    """Sample second moment (1/N) sum z z^T, without Bessel correction.

    ``behaviors`` is an (N, d) array of behavior rows, or a sequence of
    :class:`BehaviorVector`.
    """
    Z = _as_rows(behaviors)
    N = Z.shape[0]
    if N < 1:
        raise ValueError("need at least one behavior")
    S = _symmetrize(Z.T @ Z / N)
    return CovarianceEstimate(S_hat=S, method="direct", params={"N": N, **(params or {})})


def _as_rows(behaviors) -> np.ndarray:
    if isinstance(behaviors, np.ndarray):
        Z = behaviors
    elif isinstance(behaviors, ExperimentSet):
        Z = behaviors.behaviors()
    else:
        Z = np.vstack([getattr(b, "z", b) for b in behaviors])
    return np.atleast_2d(np.asarray(Z, dtype=float))


def ols_fit(dm: DataMatrices) -> np.ndarray:
    """Least-squares regressor M = F' F^T (F F^T)^-1."""
    d, n_samples = dm.F.shape
    if n_samples < d:
        raise InsufficientDataError(
            f"{n_samples} regression samples cannot identify a {d}x{d} model"
        )
    G = dm.F @ dm.F.T
    if not np.all(np.isfinite(G)) or np.linalg.cond(G) > OLS_MAX_COND:
        raise InsufficientDataError("F F^T is singular to working precision")
    # M G = F' F^T  <=>  G M^T = F F'^T (G symmetric)
    return np.linalg.solve(G, dm.F @ dm.F_next.T).T


def residual_covariance(dm: DataMatrices, M_hat: np.ndarray) -> np.ndarray:
    E = dm.F_next - M_hat @ dm.F
    return _symmetrize(E @ E.T / dm.n_samples)


def spectral_radius(M: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(M)))) if M.size else 0.0


def solve_discrete_lyapunov(M: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Unique P with P = M P M^T + Q, via (I - M kron M) vec(P) = vec(Q)."""
    M = np.asarray(M, dtype=float)
    Q = np.asarray(Q, dtype=float)
    rho = spectral_radius(M)
    if rho >= 1.0 - STABILITY_MARGIN:
        raise UnstableModelError(f"identified model is unstable (spectral radius {rho:.6f})", rho)
    d = M.shape[0]
    # row-major vec: vec(M P M^T) = (M kron M) vec(P)
    lhs = np.eye(d * d) - np.kron(M, M)
    P = np.linalg.solve(lhs, Q.reshape(-1)).reshape(d, d)
    return _symmetrize(P)


def matrix_powers(M: np.ndarray, count: int) -> list[np.ndarray]:
    """[I, M, ..., M^(count-1)]."""
    out = [np.eye(M.shape[0])]
    for _ in range(count - 1):
        out.append(out[-1] @ M)
    return out


def assemble_sigma_D(M_hat: np.ndarray, P_hat: np.ndarray, T: int, L: int) -> np.ndarray:
    """Covariance of the stacked windows under the fitted VAR(1) model.

    Block (i, j) is M^(i-j) P below the diagonal and P (M^(j-i))^T above it,
    i.e. the lag autocovariances of a stationary VAR(1) process.
    """
    nb = T - L + 1
    d = P_hat.shape[0]
    lagged = [Mk @ P_hat for Mk in matrix_powers(M_hat, nb)]
    out = np.empty((nb * d, nb * d))
    for i in range(nb):
        for j in range(nb):
            blk = lagged[i - j] if i >= j else lagged[j - i].T
            out[i * d:(i + 1) * d, j * d:(j + 1) * d] = blk
    return out


def block_power_matrix(M: np.ndarray, T: int, L: int) -> np.ndarray:
    """Symmetric block-Toeplitz matrix with M^|i-j| in block (i, j)."""
    nb = T - L + 1
    d = M.shape[0]
    powers = matrix_powers(M, nb)
    out = np.empty((nb * d, nb * d))
    for i in range(nb):
        for j in range(nb):
            out[i * d:(i + 1) * d, j * d:(j + 1) * d] = powers[abs(i - j)]
    return out


def _clip_psd(S: np.ndarray) -> tuple[np.ndarray, bool]:
    w, V = np.linalg.eigh(S)
    scale = max(np.max(np.abs(w)), np.finfo(float).tiny)
    if w.min() >= -PSD_TOL * scale:
        return S, False
    log.warning("clipping negative eigenvalue %.3e of the window covariance", w.min())
    return _symmetrize((V * np.clip(w, 0.0, None)) @ V.T), True


def covariance_from_model(M: np.ndarray, P: np.ndarray, T: int, L: int, m: int, p: int):
    """K Sigma_D K^T for given window dynamics; returns (S, Sigma_D, clipped)."""
    Sigma_D, clipped = _clip_psd(assemble_sigma_D(M, P, T, L))
    K = selector_matrix(T, L, m, p)
    return _symmetrize(K @ Sigma_D @ K.T), Sigma_D, clipped


def indirect_covariance(data: ExperimentSet, L: int) -> tuple[CovarianceEstimate, IndirectModel]:
    T, m, p = data.T, data.m, data.p
    dm = build_regression_matrices(data, L)
    M_hat = ols_fit(dm)
    Sigma_eps = residual_covariance(dm, M_hat)
    P_hat = solve_discrete_lyapunov(M_hat, Sigma_eps)
    S_hat, Sigma_D, clipped = covariance_from_model(M_hat, P_hat, T, L, m, p)
    model = IndirectModel(
        M_hat=M_hat,
        Sigma_eps_hat=Sigma_eps,
        P_hat=P_hat,
        F_blocks=matrix_powers(M_hat, T - L + 1),
        Sigma_D=Sigma_D,
        spectral_radius=spectral_radius(M_hat),
        clipped=clipped,
    )
    est = CovarianceEstimate(
        S_hat=S_hat,
        method="indirect",
        params={"N": data.N, "T": T, "L": L, "N_id": dm.n_samples, "clipped": clipped},
    )
    return est, model


@dataclass
class PopulationModel:
    """Large-sample limit of the indirect pipeline for a known behavior covariance."""

    M: np.ndarray
    Sigma_eps: np.ndarray
    P: np.ndarray
    S: np.ndarray


def indirect_population_limit(S: np.ndarray, T: int, L: int, m: int, p: int) -> PopulationModel:
    """Replace every sample moment in the indirect pipeline by its expectation.

    The regression pools windows 1..T-L of every experiment, so the population
    normal equations average the window second moments read off ``S``. The
    result is the value the indirect estimate converges to as N grows, which
    differs from ``S`` when the windows are not stationary.
    """
    idx = window_indices(T, L, m, p)
    nb = T - L
    d = idx.shape[1]
    G = np.zeros((d, d))
    H = np.zeros((d, d))
    for j in range(nb):
        cur, nxt = idx[j], idx[j + 1]
        G += S[np.ix_(cur, cur)]
        H += S[np.ix_(nxt, cur)]
    M = np.linalg.solve(G, H.T).T
    Sig = np.zeros((d, d))
    for j in range(nb):
        cur, nxt = idx[j], idx[j + 1]
        Scc = S[np.ix_(cur, cur)]
        Snc = S[np.ix_(nxt, cur)]
        Snn = S[np.ix_(nxt, nxt)]
        Sig += Snn - M @ Snc.T - Snc @ M.T + M @ Scc @ M.T
    Sig = _symmetrize(Sig / nb)
    P = solve_discrete_lyapunov(M, Sig)
    S_model, _, _ = covariance_from_model(M, P, T, L, m, p)
    return PopulationModel(M=M, Sigma_eps=Sig, P=P, S=S_model)
