"""Command-line front end.

Exit codes: 0 success, 2 invalid arguments or config, 3 estimation failure,
4 file errors, 130 interrupted.
"""

from __future__ import annotations

import argparse
import logging
import sys as _sys
from pathlib import Path
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from . import io
from .bounds import bound_diagnostics
from .detection import (
    ComparisonConfig,
    chi2_statistics,
    invert_covariance,
    roc_curve,
    run_comparison,
    threshold_grid,
)
from .errors import BehaviorDetectError, DegenerateSystemError, InvalidWindowError
from .estimation import direct_covariance, indirect_covariance
from .system_sim import (
    ExperimentSet,
    GaussianInjection,
    NoAttack,
    NoiseSpec,
    derive_rng,
    generate_experiments,
    random_stable_system,
    simulate_batch,
)

EXIT_OK, EXIT_VALIDATION, EXIT_ESTIMATION, EXIT_IO, EXIT_INTERRUPT = 0, 2, 3, 4, 130

log = logging.getLogger("behavior_detect")


class RunConfig(BaseModel):
    """Contents of a ``--config`` file; command-line flags take precedence."""

    model_config = ConfigDict(extra="forbid")

    seed: Optional[int] = None
    out_dir: Optional[str] = None
    threads: int = Field(1, ge=1)
    comparison: dict = Field(default_factory=dict)
    method: Optional[str] = None
    L: Optional[int] = Field(None, ge=1)
    theta: Optional[float] = Field(None, ge=0)
    k: Optional[float] = Field(None, gt=0)
    pinv_rel_tol: Optional[float] = Field(None, gt=0)


class UsageError(Exception):
    pass


def _positive(value: str) -> int:
    ivalue = int(value)
    if ivalue < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {value}")
    return ivalue


def _nonneg(value: str) -> float:
    fvalue = float(value)
    if fvalue < 0:
        raise argparse.ArgumentTypeError(f"must be nonnegative, got {value}")
    return fvalue


def _pick(cli_value, cfg_value, default):
    if cli_value is not None:
        return cli_value
    if cfg_value is not None:
        return cfg_value
    return default


def _out_dir(args, cfg: RunConfig) -> Path:
    path = Path(_pick(args.out_dir, cfg.out_dir, "."))
    path.mkdir(parents=True, exist_ok=True)
    return path


def cmd_sysgen(args, cfg: RunConfig) -> int:
    seed = _pick(args.seed, cfg.seed, 0)
    system = random_stable_system(args.n, args.m, args.p, seed)
    out = Path(args.out) if args.out else _out_dir(args, cfg) / "system.json"
    io.save_system(system, out)
    print(f"wrote {out}")
    print(f"spectral radius of A: {system.spectral_radius:.6f}")
    print(f"controllable: {system.is_controllable()}  observable: {system.is_observable()}")
    return EXIT_OK


def _noise(args) -> NoiseSpec:
    return NoiseSpec(args.sigma_u, args.sigma_w, args.sigma_v)


def cmd_simulate(args, cfg: RunConfig) -> int:
    system = io.load_system(args.system)
    noise = _noise(args)
    seed = _pick(args.seed, cfg.seed, 0)
    if args.attack_sigma > 0:
        u, y = simulate_batch(system, noise, GaussianInjection(args.attack_sigma), args.T,
                              derive_rng(seed), args.N)
        data = ExperimentSet(u, y, noise, seed, system.fingerprint())
        meta = {"attack_sigma": args.attack_sigma}
    else:
        data = generate_experiments(system, noise, args.N, args.T, seed)
        meta = {"attack_sigma": 0.0}
    out = Path(args.out) if args.out else _out_dir(args, cfg) / "experiments.csv"
    io.save_experiments(data, out, meta)
    print(f"wrote {out} ({data.N} trajectories, T={data.T})")
    return EXIT_OK


def cmd_estimate(args, cfg: RunConfig) -> int:
    data = io.load_experiments(args.data)
    method = _pick(args.method, cfg.method, "direct")
    out = _out_dir(args, cfg)
    if method == "direct":
        est = direct_covariance(data.behaviors(), params={"T": data.T, "seed": data.master_seed})
    elif method == "indirect":
        L = _pick(args.L, cfg.L, None)
        if L is None:
            raise UsageError("--L is required for the indirect method")
        est, model = indirect_covariance(data, L)
        est.params["seed"] = data.master_seed
        est.params["spectral_radius"] = model.spectral_radius
        io.save_matrix(model.M_hat, out / "M_hat.csv")
        io.save_matrix(model.Sigma_eps_hat, out / "Sigma_eps_hat.csv")
        io.save_matrix(model.P_hat, out / "P_hat.csv")
        print(f"spectral radius of M_hat: {model.spectral_radius:.6f}")
    else:
        raise UsageError(f"unknown method {method!r}")
    path = out / f"covariance_{method}.csv"
    io.save_covariance(est, path)
    print(f"wrote {path} ({est.dim}x{est.dim})")
    return EXIT_OK


def cmd_detect(args, cfg: RunConfig) -> int:
    est = io.load_covariance(args.covariance)
    data = io.load_experiments(args.data)
    tol = _pick(args.pinv_rel_tol, cfg.pinv_rel_tol, 1e-8)
    S_inv, rank = invert_covariance(est.S_hat, tol)
    g = chi2_statistics(data.behaviors(), S_inv)
    out = Path(args.out) if args.out else _out_dir(args, cfg) / "statistics.csv"
    with open(out, "w") as fh:
        fh.write("traj_id,g,alarm\n")
        for i, val in enumerate(g):
            alarm = "" if args.threshold is None else int(val > args.threshold)
            fh.write(f"{i},{io.FLOAT_FMT % val},{alarm}\n")
    print(f"rank {rank}/{est.dim}; wrote {out}")
    if args.threshold is not None:
        print(f"alarm rate at lambda={args.threshold}: {np.mean(g > args.threshold):.4f}")
    return EXIT_OK


def cmd_roc(args, cfg: RunConfig) -> int:
    g0 = np.array([float(r["g"]) for r in io.read_csv_rows(args.nominal)])
    g1 = np.array([float(r["g"]) for r in io.read_csv_rows(args.attacked)])
    curve = roc_curve(g0, g1, threshold_grid(g0, g1, points=args.points))
    out = Path(args.out) if args.out else _out_dir(args, cfg) / "roc.csv"
    with open(out, "w") as fh:
        fh.write("lambda,fpr,tpr\n")
        for lam, f, t in zip(curve.lambdas, curve.fpr, curve.tpr):
            fh.write(f"{io.FLOAT_FMT % lam},{io.FLOAT_FMT % f},{io.FLOAT_FMT % t}\n")
    print(f"AUC {curve.auc():.4f}; wrote {out}")
    return EXIT_OK


def cmd_bounds(args, cfg: RunConfig) -> int:
    system = io.load_system(args.system)
    theta = _pick(args.theta, cfg.theta, 5.0)
    k = _pick(args.k, cfg.k, 1.0)
    L = _pick(args.L, cfg.L, system.n)
    if not 1 <= L < args.T:
        raise InvalidWindowError(f"no regression pairs: need 1 <= L < T, got L={L}, T={args.T}")
    report = bound_diagnostics(system, _noise(args), args.N, args.T, L, theta, args.ols_theta, k,
                               args.draws, _pick(args.seed, cfg.seed, 0))
    rows = [
        ("direct (sample covariance)", report["direct"]["bound"], report["direct"]["confidence"],
         f"exceedance {report['direct']['exceedance']:.3f}", report["direct"]["flags"]),
        ("OLS ||dM||", report["ols"]["bound"], report["ols"]["confidence"],
         f"coverage {report['ols']['coverage']:.3f}", report["ols"]["flags"]),
        ("sensitivity of P", float("nan"), float("nan"),
         f"coverage {report['sensitivity_P']['coverage']} on {report['sensitivity_P']['psd_draws']} PSD draws", []),
        ("sensitivity of F", float("nan"), float("nan"), f"coverage {report['sensitivity_F']['coverage']:.3f}", []),
        ("indirect (measured deltas)", float("nan"), float("nan"),
         f"coverage {report['indirect']['coverage']:.3f}", []),
    ]
    print(f"{'bound':<28} {'value':>12} {'confidence':>11}  empirical")
    for name, value, conf, emp, flags in rows:
        print(f"{name:<28} {value:>12.5g} {conf:>11.5g}  {emp}")
        for flag in flags:
            print(f"    ! {flag}")
    out = Path(args.out) if args.out else _out_dir(args, cfg) / "bounds.json"
    io.write_json(report, out)
    print(f"wrote {out}")
    return EXIT_OK


COMPARISONS = {
    "comparison1": [("T7", {"T": 7}), ("T14", {"T": 14})],
    "comparison2": [("sigma_u_0.5", {"sigma_u": 0.5}), ("sigma_u_2", {"sigma_u": 2.0})],
}


def cmd_reproduce(args, cfg: RunConfig) -> int:
    seed = _pick(args.seed, cfg.seed, 0)
    base = dict(cfg.comparison)
    base["master_seed"] = seed
    base.setdefault("system_seed", args.system_seed)
    if args.trials is not None:
        base["trials"] = args.trials
    threads = _pick(args.threads, cfg.threads, 1)
    root = _out_dir(args, cfg) / args.which
    root.mkdir(parents=True, exist_ok=True)
    for panel, overrides in COMPARISONS[args.which]:
        config = ComparisonConfig(**{**base, **overrides})
        result = run_comparison(config, workers=threads)
        out = root / panel
        out.mkdir(exist_ok=True)
        io.write_roc_csv(result, out / "roc.csv")
        io.write_auc_csv(result, out / "auc.csv")
        io.write_json(config.model_dump(), out / "config.json")
        print(f"[{panel}]")
        for N in config.N_grid:
            d, i = result.aucs[("direct", N)], result.aucs[("indirect", N)]
            print(f"  N={N:<5} AUC direct {d:.4f}  indirect {i:.4f}  leader: {result.leader(N)}")
        crossover = result.crossover_N()
        print(f"  direct reaches indirect at N={crossover if crossover else 'never (within grid)'}")
    return EXIT_OK


def _common_flags(default) -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=default, help="master seed")
    common.add_argument("--out-dir", default=default, help="output directory (default: current)")
    common.add_argument("--threads", type=_positive, default=default, help="worker processes for trial loops")
    common.add_argument("--config", default=default, help="JSON run configuration")
    common.add_argument("-v", "--verbose", action="store_true", default=False if default is None else default)
    return common


def build_parser() -> argparse.ArgumentParser:
    # global flags may appear before or after the subcommand; the subcommand
    # copies must not overwrite values given before it
    top = _common_flags(None)
    common = _common_flags(argparse.SUPPRESS)

    noise = argparse.ArgumentParser(add_help=False)
    noise.add_argument("--sigma-u", type=_nonneg, default=1.0, help="input variance")
    noise.add_argument("--sigma-w", type=_nonneg, default=1.0, help="process noise variance")
    noise.add_argument("--sigma-v", type=_nonneg, default=1.0, help="measurement noise variance")

    parser = argparse.ArgumentParser(
        prog="behavior-detect",
        description="Behavior-based chi-squared attack detection with direct and indirect covariance estimates.",
        parents=[top],
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sysgen", parents=[common], help="draw a random stable plant")
    p.add_argument("--n", type=_positive, required=True)
    p.add_argument("--m", type=_positive, required=True)
    p.add_argument("--p", type=_positive, required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_sysgen)

    p = sub.add_parser("simulate", parents=[common, noise], help="simulate an experiment set")
    p.add_argument("--system", required=True)
    p.add_argument("--N", type=_positive, required=True)
    p.add_argument("--T", type=_positive, required=True)
    p.add_argument("--attack-sigma", type=_nonneg, default=0.0,
                   help="variance of Gaussian input/sensor injection (0 = attack-free)")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", parents=[common], help="estimate the behavior covariance")
    p.add_argument("--data", required=True)
    p.add_argument("--method", choices=["direct", "indirect"], default=None)
    p.add_argument("--L", type=_positive, default=None, help="minor-behavior window length")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("detect", parents=[common], help="chi-squared statistics for a data set")
    p.add_argument("--covariance", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--pinv-rel-tol", type=float, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("roc", parents=[common], help="ROC curve from two statistic files")
    p.add_argument("--nominal", required=True)
    p.add_argument("--attacked", required=True)
    p.add_argument("--points", type=_positive, default=512)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_roc)

    p = sub.add_parser("bounds", parents=[common, noise], help="finite-sample bounds vs measured errors")
    p.add_argument("--system", required=True)
    p.add_argument("--N", type=_positive, required=True)
    p.add_argument("--T", type=_positive, required=True)
    p.add_argument("--L", type=_positive, default=None)
    p.add_argument("--theta", type=_nonneg, default=None)
    p.add_argument("--ols-theta", type=float, default=0.1)
    p.add_argument("--k", type=float, default=None, help="absolute constant of the OLS bound")
    p.add_argument("--draws", type=_positive, default=200)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("reproduce", parents=[common], help="rerun a comparison grid")
    p.add_argument("which", choices=sorted(COMPARISONS))
    p.add_argument("--trials", type=_positive, default=None)
    p.add_argument("--system-seed", type=int, default=7)
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = RunConfig.model_validate(io.read_json(args.config)) if args.config else RunConfig()
        return args.func(args, cfg)
    except (ValidationError, UsageError, InvalidWindowError, DegenerateSystemError, ValueError) as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_VALIDATION
    except BehaviorDetectError as exc:
        print(f"estimation failed: {exc}", file=_sys.stderr)
        return EXIT_ESTIMATION
    except OSError as exc:
        print(f"io error: {exc}", file=_sys.stderr)
        return EXIT_IO
    except KeyboardInterrupt:
        print("interrupted; completed panels were written", file=_sys.stderr)
        return EXIT_INTERRUPT


if __name__ == "__main__":
    _sys.exit(main())
