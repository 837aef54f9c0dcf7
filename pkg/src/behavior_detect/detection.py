"""Chi-squared behavior detector, ROC computation and the Monte Carlo harness."""

from __future__ import annotations

import enum
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .errors import DegenerateEstimateError, InsufficientDataError, UnstableModelError
from .estimation import direct_covariance, indirect_covariance
from .system_sim import (
    GaussianInjection,
    LtiSystem,
    NoAttack,
    NoiseSpec,
    derive_rng,
    generate_experiments,
    random_stable_system,
    simulate_batch,
    true_behavior_covariance,
)

log = logging.getLogger(__name__)

ROLE_TRAIN, ROLE_NOMINAL, ROLE_ATTACK = 0, 1, 2
MAX_RESAMPLES = 20
METHODS = ("direct", "indirect")


class Hypothesis(enum.Enum):
    H0 = "H0"  # nominal
    H1 = "H1"  # alarm


@dataclass(frozen=True)
class DetectorStat:
    g: float
    dof: int


def invert_covariance(S_hat: np.ndarray, rel_tol: float = 1e-8) -> tuple[np.ndarray, int]:
    """Eigendecomposition pseudo-inverse; returns (inverse, numerical rank).

    Eigenvalues below ``rel_tol * lambda_max`` are dropped, so the result is
    the exact inverse when S_hat is well conditioned and PSD otherwise.
    """
    S = 0.5 * (np.asarray(S_hat, dtype=float) + np.asarray(S_hat, dtype=float).T)
    w, V = np.linalg.eigh(S)
    top = w.max() if w.size else 0.0
    if top <= 0.0:
        raise DegenerateEstimateError("covariance estimate has no positive eigenvalue")
    keep = w > rel_tol * top
    inv = (V[:, keep] / w[keep]) @ V[:, keep].T
    return 0.5 * (inv + inv.T), int(keep.sum())


def chi2_statistics(Z: np.ndarray, S_inv: np.ndarray) -> np.ndarray:
    """g = z^T S_inv z for every row of ``Z``."""
    Z = np.atleast_2d(Z)
    return np.einsum("ij,jk,ik->i", Z, S_inv, Z)


def chi2_statistic(z, S_inv: np.ndarray) -> DetectorStat:
    vec = np.asarray(getattr(z, "z", z), dtype=float)
    return DetectorStat(g=float(vec @ S_inv @ vec), dof=vec.size)


def detect(g, lam: float) -> Hypothesis:
    value = g.g if isinstance(g, DetectorStat) else g
    return Hypothesis.H1 if value > lam else Hypothesis.H0


@dataclass(frozen=True)
class RocPoint:
    lam: float
    fpr: float
    tpr: float


@dataclass
class RocCurve:
    lambdas: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray

    @property
    def points(self) -> list[RocPoint]:
        return [RocPoint(float(l), float(f), float(t)) for l, f, t in zip(self.lambdas, self.fpr, self.tpr)]

    def auc(self) -> float:
        """Trapezoidal area, closing the curve at (0, 0) and (1, 1)."""
        x = np.concatenate([[1.0], self.fpr, [0.0]])
        y = np.concatenate([[1.0], self.tpr, [0.0]])
        # lambdas ascend, so fpr descends; integrate left to right
        return float(np.trapezoid(y[::-1], x[::-1]))


def _exceed_fraction(values: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    ordered = np.sort(values)
    return 1.0 - np.searchsorted(ordered, thresholds, side="right") / ordered.size


def roc_curve(nominal_g: Sequence[float], attacked_g: Sequence[float], thresholds: Sequence[float]) -> RocCurve:
    nominal = np.asarray(nominal_g, dtype=float)
    attacked = np.asarray(attacked_g, dtype=float)
    if nominal.size == 0 or attacked.size == 0:
        raise ValueError("both statistic samples must be nonempty")
    lams = np.sort(np.asarray(thresholds, dtype=float))
    return RocCurve(lambdas=lams, fpr=_exceed_fraction(nominal, lams), tpr=_exceed_fraction(attacked, lams))


def threshold_grid(*samples: np.ndarray, points: int = 512) -> np.ndarray:
    pooled = np.concatenate([np.asarray(s, dtype=float) for s in samples])
    return np.quantile(pooled, np.linspace(0.0, 1.0, points))


class ComparisonConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    system_seed: int = 7
    n: int = Field(3, ge=1)
    m: int = Field(1, ge=1)
    p: int = Field(1, ge=1)
    T: int = Field(7, ge=2)
    L: int = Field(3, ge=1)
    N_grid: tuple[int, ...] = (40, 90, 150, 200)
    sigma_u: float = Field(1.0, ge=0)
    sigma_w: float = Field(1.0, ge=0)
    sigma_v: float = Field(1.0, ge=0)
    sigma_a: float = Field(1.5, ge=0)
    trials: int = Field(50, ge=1)
    test_samples: int = Field(200, ge=1)
    thresholds: int = Field(512, ge=2)
    pinv_rel_tol: float = Field(1e-8, gt=0)
    master_seed: int = 0
    include_oracle: bool = False

    @field_validator("N_grid")
    @classmethod
    def _grid_nonempty(cls, v):
        if not v or min(v) < 1:
            raise ValueError("N_grid must be a nonempty list of positive sizes")
        return tuple(v)

    def noise(self) -> NoiseSpec:
        return NoiseSpec(self.sigma_u, self.sigma_w, self.sigma_v)


@dataclass
class ComparisonResult:
    config: ComparisonConfig
    curves: dict  # (method, N) -> RocCurve
    aucs: dict  # (method, N) -> float
    failures: dict  # (method, N) -> int
    statistics: dict = field(default_factory=dict)  # (method, N) -> (nominal_g, attacked_g)

    def methods(self) -> list[str]:
        return sorted({k[0] for k in self.curves})

    def leader(self, N: int) -> str:
        return "direct" if self.aucs[("direct", N)] >= self.aucs[("indirect", N)] else "indirect"

    def crossover_N(self, tol: float = 0.0) -> Optional[int]:
        """Smallest N at which the direct AUC reaches the indirect AUC (minus tol)."""
        for N in self.config.N_grid:
            if self.aucs[("direct", N)] >= self.aucs[("indirect", N)] - tol:
                return N
        return None


def _seed_from(*keys: int) -> int:
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def _run_trial(cfg: ComparisonConfig, sys: LtiSystem, trial: int):
    """One trial: fresh test behaviors, then per-N training and scoring."""
    noise = cfg.noise()
    T = cfg.T
    u0, y0 = simulate_batch(sys, noise, NoAttack(), T, derive_rng(cfg.master_seed, trial, ROLE_NOMINAL), cfg.test_samples)
    u1, y1 = simulate_batch(
        sys, noise, GaussianInjection(cfg.sigma_a), T, derive_rng(cfg.master_seed, trial, ROLE_ATTACK), cfg.test_samples
    )
    Z0 = np.hstack([u0.reshape(cfg.test_samples, -1), y0.reshape(cfg.test_samples, -1)])
    Z1 = np.hstack([u1.reshape(cfg.test_samples, -1), y1.reshape(cfg.test_samples, -1)])

    out = {}
    failures = {}
    if cfg.include_oracle:
        S_inv, _ = invert_covariance(true_behavior_covariance(sys, noise, T).S_hat, cfg.pinv_rel_tol)
        for N in cfg.N_grid:
            out[("oracle", N)] = (chi2_statistics(Z0, S_inv), chi2_statistics(Z1, S_inv))
    for N in cfg.N_grid:
        n_fail = 0
        for attempt in range(MAX_RESAMPLES):
            train = generate_experiments(sys, noise, N, T, _seed_from(cfg.master_seed, trial, ROLE_TRAIN, attempt))
            try:
                estimates = {
                    "direct": direct_covariance(train.behaviors()).S_hat,
                    "indirect": indirect_covariance(train, cfg.L)[0].S_hat,
                }
                inverses = {k: invert_covariance(v, cfg.pinv_rel_tol)[0] for k, v in estimates.items()}
            except (InsufficientDataError, UnstableModelError, DegenerateEstimateError) as exc:
                n_fail += 1
                log.info("trial %d, N=%d, attempt %d failed: %s", trial, N, attempt, exc)
                continue
            break
        else:
            raise InsufficientDataError(f"trial {trial} at N={N} failed {MAX_RESAMPLES} times")
        for method, S_inv in inverses.items():
            out[(method, N)] = (chi2_statistics(Z0, S_inv), chi2_statistics(Z1, S_inv))
        failures[N] = n_fail
    return out, failures


def run_comparison(cfg: ComparisonConfig, workers: int = 1) -> ComparisonResult:
    """Pool detector statistics over trials and build one ROC per (method, N)."""
    sys = random_stable_system(cfg.n, cfg.m, cfg.p, cfg.system_seed)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_trial, [cfg] * cfg.trials, [sys] * cfg.trials, range(cfg.trials)))
    else:
        results = [_run_trial(cfg, sys, k) for k in range(cfg.trials)]

    keys = list(results[0][0].keys())
    curves, aucs, stats = {}, {}, {}
    failures = {(method, N): 0 for method, N in keys}
    for _, fails in results:
        for N, count in fails.items():
            failures[("indirect", N)] += count
    for key in keys:
        g0 = np.concatenate([r[0][key][0] for r in results])
        g1 = np.concatenate([r[0][key][1] for r in results])
        curve = roc_curve(g0, g1, threshold_grid(g0, g1, points=cfg.thresholds))
        curves[key] = curve
        aucs[key] = curve.auc()
        stats[key] = (g0, g1)
    return ComparisonResult(config=cfg, curves=curves, aucs=aucs, failures=failures, statistics=stats)
