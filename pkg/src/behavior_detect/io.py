"""File formats: JSON for systems, configs and metadata; CSV for data, matrices and curves.

Floats are written with 17 significant digits so files round-trip exactly
and identical runs produce identical bytes.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .estimation import CovarianceEstimate
from .system_sim import ExperimentSet, LtiSystem, NoiseSpec

FLOAT_FMT = "%.17g"


def _fmt(x) -> str:
    return FLOAT_FMT % x if isinstance(x, (float, np.floating)) else str(x)


def write_json(doc: dict, path) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def save_system(sys: LtiSystem, path) -> None:
    write_json(sys.to_dict(), path)


def load_system(path) -> LtiSystem:
    return LtiSystem.from_dict(read_json(path))


def sidecar(path) -> Path:
    return Path(path).with_suffix(".json")


def save_experiments(data: ExperimentSet, path, extra_meta: dict | None = None) -> None:
    """CSV rows ``traj_id, t, u_0..u_{m-1}, y_1..y_p``; row t carries u_t and y_{t+1}."""
    m, p = data.m, data.p
    header = ["traj_id", "t"] + [f"u_{c}" for c in range(m)] + [f"y_{c + 1}" for c in range(p)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(data.N):
            for t in range(data.T):
                row = [i, t] + [_fmt(x) for x in data.inputs[i, t]] + [_fmt(x) for x in data.outputs[i, t]]
                writer.writerow(row)
    meta = {
        "N": data.N,
        "T": data.T,
        "m": m,
        "p": p,
        "master_seed": data.master_seed,
        "system_fingerprint": data.system_fingerprint,
        "sigma_u": data.noise.sigma_u,
        "sigma_w": data.noise.sigma_w,
        "sigma_v": data.noise.sigma_v,
        **data.metadata,
        **(extra_meta or {}),
    }
    write_json(meta, sidecar(path))


def load_experiments(path) -> ExperimentSet:
    meta = read_json(sidecar(path))
    N, T, m, p = meta["N"], meta["T"], meta["m"], meta["p"]
    raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if raw.shape != (N * T, 2 + m + p):
        raise ValueError(f"{path}: expected {N * T} rows of {2 + m + p} columns, got {raw.shape}")
    order = np.lexsort((raw[:, 1], raw[:, 0]))
    raw = raw[order]
    inputs = raw[:, 2:2 + m].reshape(N, T, m)
    outputs = raw[:, 2 + m:].reshape(N, T, p)
    noise = NoiseSpec(meta["sigma_u"], meta["sigma_w"], meta["sigma_v"])
    known = {"N", "T", "m", "p", "master_seed", "system_fingerprint", "sigma_u", "sigma_w", "sigma_v"}
    return ExperimentSet(
        inputs=inputs,
        outputs=outputs,
        noise=noise,
        master_seed=meta["master_seed"],
        system_fingerprint=meta.get("system_fingerprint", ""),
        metadata={k: v for k, v in meta.items() if k not in known},
    )


def save_matrix(M: np.ndarray, path) -> None:
    np.savetxt(path, np.atleast_2d(M), delimiter=",", fmt=FLOAT_FMT)


def load_matrix(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)


def save_covariance(est: CovarianceEstimate, path) -> None:
    save_matrix(est.S_hat, path)
    write_json(est.metadata(), sidecar(path))


def load_covariance(path) -> CovarianceEstimate:
    meta = read_json(sidecar(path))
    method = meta.pop("method")
    meta.pop("dim", None)
    return CovarianceEstimate(S_hat=load_matrix(path), method=method, params=meta)


ROC_HEADER = ["method", "N", "T", "L", "lambda", "fpr", "tpr"]
AUC_HEADER = ["method", "N", "T", "auc", "trials", "failures"]


def write_roc_csv(result, path) -> None:
    cfg = result.config
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ROC_HEADER)
        for (method, N), curve in sorted(result.curves.items()):
            for lam, fpr, tpr in zip(curve.lambdas, curve.fpr, curve.tpr):
                writer.writerow([method, N, cfg.T, cfg.L, _fmt(lam), _fmt(fpr), _fmt(tpr)])


def write_auc_csv(result, path) -> None:
    cfg = result.config
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(AUC_HEADER)
        for (method, N), auc in sorted(result.aucs.items()):
            writer.writerow([method, N, cfg.T, _fmt(auc), cfg.trials, result.failures.get((method, N), 0)])


def read_csv_rows(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
