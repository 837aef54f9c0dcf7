"""Behavior vectors, sliding minor behaviors and the reconstruction selector.

A behavior stacks u_0..u_{T-1} followed by y_1..y_T. Minor behavior j
(1-based, j = 1..T-L+1) stacks u_{j-1}..u_{j+L-2} followed by y_j..y_{j+L-1},
so every window has length L(m+p) and keeps the one-step input/output offset
of the full behavior.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InvalidWindowError
from .system_sim import ExperimentSet, Trajectory


@dataclass(frozen=True)
class BehaviorVector:
    z: np.ndarray
    horizon: int
    m: int
    p: int

    def __post_init__(self):
        if self.z.shape != (self.horizon * (self.m + self.p),):
            raise ValueError("behavior length must be T(m+p)")

    def unstack(self) -> Trajectory:
        split = self.horizon * self.m
        return Trajectory(
            inputs=self.z[:split].reshape(self.horizon, self.m).copy(),
            outputs=self.z[split:].reshape(self.horizon, self.p).copy(),
        )


@dataclass(frozen=True)
class MinorBehavior:
    f: np.ndarray
    window: int  # 1-based
    length: int  # L


@dataclass(frozen=True)
class DataMatrices:
    F: np.ndarray
    F_next: np.ndarray
    L: int

    @property
    def n_samples(self) -> int:
        return self.F.shape[1]

    def to_csv(self, path) -> None:
        np.savetxt(path, np.vstack([self.F, self.F_next]), delimiter=",")


def stack_behavior(traj: Trajectory) -> BehaviorVector:
    z = np.concatenate([np.ravel(traj.inputs), np.ravel(traj.outputs)])
    return BehaviorVector(z=z, horizon=traj.horizon, m=traj.m, p=traj.p)


@lru_cache(maxsize=256)
def _window_indices(T: int, L: int, m: int, p: int) -> np.ndarray:
    """Row j-1 holds the behavior coordinates of window j, in window order."""
    rows = []
    for j in range(1, T - L + 2):
        u_idx = [(j - 1 + l) * m + c for l in range(L) for c in range(m)]
        y_idx = [T * m + (j - 1 + l) * p + c for l in range(L) for c in range(p)]
        rows.append(u_idx + y_idx)
    out = np.array(rows, dtype=np.intp)
    out.setflags(write=False)
    return out


def window_indices(T: int, L: int, m: int, p: int) -> np.ndarray:
    """Index map from each minor behavior into the full behavior vector.

    Returns an integer array of shape (T-L+1, L(m+p)).
    """
    if not 1 <= L <= T:
        raise InvalidWindowError(f"window length L={L} must satisfy 1 <= L <= T={T}")
    return _window_indices(T, L, m, p)


def minor_behaviors(traj: Trajectory, L: int) -> list[MinorBehavior]:
    idx = window_indices(traj.horizon, L, traj.m, traj.p)
    z = stack_behavior(traj).z
    return [MinorBehavior(f=z[row], window=j + 1, length=L) for j, row in enumerate(idx)]


def build_regression_matrices(data: ExperimentSet, L: int) -> DataMatrices:
    """F holds f_1..f_{T-L} and F_next holds f_2..f_{T-L+1} for every experiment.

    Columns are ordered experiment-major, then by window.
    """
    T = data.T
    if not 1 <= L < T:
        raise InvalidWindowError(f"no regression pairs: need 1 <= L < T, got L={L}, T={T}")
    idx = window_indices(T, L, data.m, data.p)
    Z = data.behaviors()
    windows = Z[:, idx]  # (N, T-L+1, L(m+p))
    d = idx.shape[1]
    F = windows[:, :-1, :].reshape(-1, d).T
    F_next = windows[:, 1:, :].reshape(-1, d).T
    return DataMatrices(F=np.ascontiguousarray(F), F_next=np.ascontiguousarray(F_next), L=L)


def selector_matrix(T: int, L: int, m: int, p: int) -> np.ndarray:
    """Binary K with K @ D == Z, D being the stacked minor behaviors.

    Each behavior coordinate is copied from the earliest window containing it.
    """
    idx = window_indices(T, L, m, p)
    flat = idx.ravel()
    d = T * (m + p)
    K = np.zeros((d, flat.size))
    seen = np.zeros(d, dtype=bool)
    for pos, q in enumerate(flat):
        if not seen[q]:
            K[q, pos] = 1.0
            seen[q] = True
    return K


def stack_minor_behaviors(Z: np.ndarray, T: int, L: int, m: int, p: int) -> np.ndarray:
    """D vectors for a batch of behaviors ``Z`` of shape (N, T(m+p))."""
    idx = window_indices(T, L, m, p)
    return np.asarray(Z)[..., idx.ravel()]
