"""Command-line entry point: ``dpscore <subcommand> ...``.

Exit status is 0 on success, 2 for configuration or parameter errors and 3
for numerical failures.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .errors import InvalidParameterError, NumericalFailure
from .mechanisms import PrivacyBudget, SeededRng

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def _emit(args, name: str, payload: dict) -> None:
    text = json.dumps(payload, indent=2, default=float)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text + "\n")
    else:
        print(text)


def _out_dir(args) -> Path:
    if not args.out:
        raise InvalidParameterError("--out is required for this subcommand")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _budget(args) -> PrivacyBudget:
    return PrivacyBudget(args.eps, getattr(args, "delta", 0.0) or 0.0)


def cmd_fit_glm(args):
    from .dp_glm import default_dp_glm_config, estimate_curvature, fit_dp_glm, scaling_condition
    from .glm import family_by_name, read_glm_csv

    data = read_glm_csv(args.data, args.design, args.sigma_x)
    family = family_by_name(args.family)
    budget = PrivacyBudget(args.eps, args.delta if args.delta is not None else data.n ** -1.1)
    if args.curvature == "empirical":
        curv = estimate_curvature(family, data)
    else:
        curv = estimate_curvature(family, design_kind=data.design_bound_kind, sigma_x=data.sigma_x)
    cfg = default_dp_glm_config(data.n, data.d, family, budget, curv.gamma, curv.alpha, data.sigma_x)
    if args.T:
        cfg.iterations = args.T
    if not scaling_condition(data.n, data.d, budget, family.dispersion):
        print("warning: sample size is below the scaling condition for the accuracy guarantee", file=sys.stderr)
    result = fit_dp_glm(data, family, cfg, SeededRng(args.seed))
    _emit(args, "fit_glm.json", result.to_dict())


def cmd_fit_sparse_glm(args):
    from .dp_glm import estimate_curvature
    from .glm import family_by_name, read_glm_csv
    from .sparse import default_sparse_glm_config, fit_dp_sparse_glm

    data = read_glm_csv(args.data, "linf", args.sigma_x)
    family = family_by_name(args.family)
    budget = PrivacyBudget(args.eps, args.delta if args.delta is not None else data.n ** -1.1)
    curv = estimate_curvature(family, design_kind="linf", sigma_x=data.sigma_x)
    r = default_sparse_glm_config(data.n, data.d, args.s_star, family, curv.gamma, curv.alpha, data.sigma_x, args.rho)
    fit = fit_dp_sparse_glm(
        data, family, args.s or r.s, args.eta0 or r.eta0, budget, r.B, args.T or r.T, r.R, SeededRng(args.seed)
    )
    _emit(args, "fit_sparse_glm.json", fit.to_dict())


def cmd_fit_btl(args):
    from .btl import certification_thresholds, default_btl_hyperparams, fit_dp_btl, read_comparisons_csv

    data = read_comparisons_csv(args.data, args.n_items)
    n = data.n_items
    p = args.p if args.p else max(data.m / (n * (n - 1) / 2), 1e-12)
    budget = PrivacyBudget(args.eps, args.delta if args.delta is not None else n ** -1.1)
    gamma, sigma = default_btl_hyperparams(n, min(p, 1.0), budget, args.c0)
    gamma = args.gamma or gamma
    sigma = args.sigma if args.sigma is not None else sigma
    result = fit_dp_btl(data, gamma, sigma, SeededRng(args.seed))
    g_min, s_min = certification_thresholds(n, budget)
    payload = result.to_dict()
    payload["privacy_certified"] = bool(gamma >= g_min and sigma >= s_min)
    _emit(args, "fit_btl.json", payload)


def cmd_fit_nonparam(args):
    from .nonparam import McmcConfig, NonparamConfig, SobolevSpec, fit_dp_nonparam

    arr = np.loadtxt(args.data, delimiter=",", skiprows=1, ndmin=2)
    cfg = NonparamConfig(K=args.K, T=args.T, sigma=args.sigma, grid_size=args.grid_size,
                         mcmc=McmcConfig(args.burn_in, args.thin))
    fit = fit_dp_nonparam(arr[:, 0], arr[:, 1], SobolevSpec(args.alpha, args.C), PrivacyBudget(args.eps), SeededRng(args.seed), cfg)
    _emit(args, "fit_nonparam.json", fit.to_dict())
    if args.out:
        from .nonparam import write_evaluation_csv

        write_evaluation_csv(Path(args.out) / "evaluation.csv", fit)


def cmd_attack(args):
    from .attack import attack_experiment, make_model, summarize_records, write_attack_csv
    from .harness.estimators import default_estimator

    budget = None if args.eps is None else PrivacyBudget(args.eps, args.delta if args.delta is not None else args.n ** -1.1)
    rng = SeededRng(args.seed)
    if args.model == "gaussian_location":
        model = make_model("gaussian_location", d=args.d)
        theta = np.zeros(args.d)
    elif args.model == "glm":
        model = make_model("glm", d=args.d)
        theta = np.full(args.d, 0.5)
    elif args.model == "sparse_glm":
        model = make_model("sparse_glm", d=args.d)
        theta = np.zeros(args.d)
        theta[: args.s_star] = 1.0
    elif args.model == "btl":
        from .harness.experiment import btl_truth

        model = make_model("btl", p=args.p)
        theta = btl_truth(args.n)
    else:
        model = make_model("nonparam", k=args.d)
        theta = np.zeros(args.d)
        if args.d >= 2:
            theta[1] = 1.0
    kwargs = {"s_star": args.s_star} if args.model == "sparse_glm" else {}
    est = default_estimator(model, budget, **kwargs)
    records = attack_experiment(model, est, theta, args.n, args.replicates, rng, args.candidates)
    out = _out_dir(args)
    write_attack_csv(out / "attack.csv", records)
    summary = summarize_records(records)
    summary["model"] = args.model
    (out / "attack.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary, indent=2))


def cmd_audit(args):
    from .harness.audit import gaussian_count_mechanism, laplace_count_mechanism, privacy_audit

    if args.mechanism == "laplace":
        mech = laplace_count_mechanism(args.eps, scale_factor=args.scale_factor)
        delta = 0.0
    else:
        if not args.delta:
            raise InvalidParameterError("the Gaussian mechanism audit needs --delta > 0")
        mech = gaussian_count_mechanism(args.eps, args.delta, scale_factor=args.scale_factor)
        delta = args.delta
    res = privacy_audit(mech, (0.0, 1.0), args.trials, SeededRng(args.seed), bins=args.bins, delta=delta)
    _emit(args, "audit.json", {
        "mechanism": args.mechanism, "epsilon": args.eps, "delta": delta,
        "epsilon_hat": res.epsilon_hat if math.isfinite(res.epsilon_hat) else "inf",
        "note": res.note,
    })


def cmd_bench(args):
    from .harness.config import load_config
    from .harness.experiment import cell_summary, rows_to_csv, run_experiment

    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    out = Path(args.out or cfg.output or ".")
    out.mkdir(parents=True, exist_ok=True)
    rows = run_experiment(cfg, threads=args.threads)
    (out / "results.csv").write_text(rows_to_csv(rows, timings=args.timings))
    summary = {"model": cfg.model, "seed": cfg.seed, "replicates": cfg.replicates, "cells": cell_summary(rows)}
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary, indent=2))


def cmd_rate_fit(args):
    from .harness.experiment import read_rows_csv
    from .harness.rates import fit_loglog_slope

    fit = fit_loglog_slope(read_rows_csv(args.input), args.x)
    _emit(args, "rate_fit.json", fit.to_dict())


def _common_flags(seed_default):
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=seed_default, help="64-bit RNG seed")
    common.add_argument("--threads", type=int, default=1, help="worker processes for replicate-level parallelism")
    common.add_argument("--out", help="output directory (JSON is printed to stdout when omitted)")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags(seed_default=0)

    parser = argparse.ArgumentParser(prog="dpscore", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit-glm", parents=[common], help="noisy gradient descent for a GLM")
    p.add_argument("--data", required=True, help="CSV with columns y,x_1..x_d")
    p.add_argument("--family", default="logistic", choices=["logistic", "gaussian"])
    p.add_argument("--design", default="l2_scaled", choices=["l2_scaled", "linf"])
    p.add_argument("--sigma-x", type=float, default=1.0)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--delta", type=float, help="defaults to n^-1.1")
    p.add_argument("--T", type=int, help="override the iteration count")
    p.add_argument("--curvature", default="design", choices=["design", "empirical"])
    p.set_defaults(func=cmd_fit_glm)

    p = sub.add_parser("fit-sparse-glm", parents=[common], help="noisy iterative hard thresholding for a sparse GLM")
    p.add_argument("--data", required=True, help="CSV with columns y,x_1..x_d (L-infinity bounded design)")
    p.add_argument("--family", default="logistic", choices=["logistic", "gaussian"])
    p.add_argument("--sigma-x", type=float, default=1.0)
    p.add_argument("--s-star", type=int, required=True)
    p.add_argument("--s", type=int, help="working sparsity (recipe value when omitted)")
    p.add_argument("--T", type=int)
    p.add_argument("--eta0", type=float)
    p.add_argument("--rho", type=float, default=0.5)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--delta", type=float)
    p.set_defaults(func=cmd_fit_sparse_glm)

    p = sub.add_parser("fit-btl", parents=[common], help="objective-perturbed Bradley-Terry-Luce MLE")
    p.add_argument("--data", required=True, help="CSV with columns i,j,y")
    p.add_argument("--n-items", type=int)
    p.add_argument("--p", type=float, help="edge probability (estimated from the graph when omitted)")
    p.add_argument("--c0", type=float, default=1.0)
    p.add_argument("--gamma", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--delta", type=float)
    p.set_defaults(func=cmd_fit_btl)

    p = sub.add_parser("fit-nonparam", parents=[common], help="K-norm private Fourier-series regression")
    p.add_argument("--data", required=True, help="CSV with columns x,y")
    p.add_argument("--alpha", type=int, default=1)
    p.add_argument("--C", type=float, default=2 * math.pi)
    p.add_argument("--K", type=int)
    p.add_argument("--T", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--grid-size", type=int)
    p.add_argument("--burn-in", type=int, default=1000)
    p.add_argument("--thin", type=int, default=10)
    p.add_argument("--eps", type=float, required=True)
    p.set_defaults(func=cmd_fit_nonparam)

    p = sub.add_parser("attack", parents=[common], help="score attack on in-sample and fresh candidates")
    p.add_argument("--model", required=True, choices=["gaussian_location", "glm", "sparse_glm", "btl", "nonparam"])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, default=3, help="dimension (basis size for nonparam)")
    p.add_argument("--s-star", type=int, default=3)
    p.add_argument("--p", type=float, default=0.5)
    p.add_argument("--eps", type=float, help="omit for the non-private sample mean (gaussian_location only)")
    p.add_argument("--delta", type=float)
    p.add_argument("--replicates", type=int, default=100)
    p.add_argument("--candidates", type=int, default=1)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("audit", parents=[common], help="empirical privacy audit of a scalar mechanism")
    p.add_argument("--mechanism", required=True, choices=["laplace", "gaussian"])
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--delta", type=float, default=0.0)
    p.add_argument("--trials", type=int, default=1_000_000)
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--scale-factor", type=float, default=1.0, help="multiply the noise scale (below 1 breaks privacy)")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("bench", parents=[_common_flags(seed_default=None)], help="run a Monte Carlo risk experiment from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--timings", action="store_true", help="include wall time per row (breaks byte-identical output)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("rate-fit", parents=[common], help="log-log slope of mean risk from a results CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--x", required=True, choices=["n", "eps", "d"])
    p.set_defaults(func=cmd_rate_fit)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except InvalidParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
