"""Monte Carlo risk experiments over a parameter grid."""

from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from ..btl import default_btl_hyperparams, fit_dp_btl, sample_comparisons
from ..dp_glm import default_dp_glm_config, estimate_curvature, fit_dp_glm
from ..glm import family_by_name, generate_glm
from ..mechanisms import PrivacyBudget, SeededRng
from ..nonparam import McmcConfig, NonparamConfig, SobolevSpec, fit_dp_nonparam, mise, series
from ..sparse import default_sparse_glm_config, fit_dp_sparse_glm
from .config import ConfigError, ExperimentConfig

DEFAULTS = {
    "glm": {"n": 1000, "d": 5, "eps": 1.0, "delta": "n^-1.1", "beta_scale": 0.5, "family": "logistic", "sigma_x": 1.0},
    "sparse_glm": {"n": 4000, "d": 50, "s_star": 3, "eps": 1.0, "delta": "n^-1.1", "beta_scale": 1.0,
                   "family": "logistic", "sigma_x": 1.0},
    "btl": {"n": 200, "p": 0.5, "eps": 1.0, "delta": "n^-1.1", "c0": 1.0},
    "nonparam": {"n": 1000, "eps": 1.0, "delta": 0.0, "alpha": 1, "C": 2 * math.pi, "sigma": 1.0},
}


def _get(cell, opts, key, model):
    if key in cell:
        return cell[key]
    if key in opts:
        return opts[key]
    return DEFAULTS[model][key]


def _budget(cell, opts, model):
    from .config import resolve_delta

    n = int(_get(cell, opts, "n", model))
    delta = resolve_delta(_get(cell, opts, "delta", model), n)
    return PrivacyBudget(float(_get(cell, opts, "eps", model)), delta)


def _run_glm(cell, opts, rng):
    n, d = int(_get(cell, opts, "n", "glm")), int(_get(cell, opts, "d", "glm"))
    family = family_by_name(str(_get(cell, opts, "family", "glm")))
    sigma_x = float(_get(cell, opts, "sigma_x", "glm"))
    beta = np.full(d, float(_get(cell, opts, "beta_scale", "glm")))
    data = generate_glm(n, d, beta, family, rng.child(0), "l2_scaled", sigma_x)
    curv = estimate_curvature(family, design_kind="l2_scaled", sigma_x=sigma_x)
    cfg = default_dp_glm_config(n, d, family, _budget(cell, opts, "glm"), curv.gamma, curv.alpha, sigma_x)
    if "T" in opts:
        cfg.iterations = int(opts["T"])
    fit = fit_dp_glm(data, family, cfg, rng.child(1))
    return float(np.sum((fit.beta - beta) ** 2))


def _run_sparse(cell, opts, rng):
    m = "sparse_glm"
    n, d = int(_get(cell, opts, "n", m)), int(_get(cell, opts, "d", m))
    s_star = int(_get(cell, opts, "s_star", m))
    family = family_by_name(str(_get(cell, opts, "family", m)))
    sigma_x = float(_get(cell, opts, "sigma_x", m))
    beta = np.zeros(d)
    beta[:s_star] = float(_get(cell, opts, "beta_scale", m))
    data = generate_glm(n, d, beta, family, rng.child(0), "linf", sigma_x)
    curv = estimate_curvature(family, design_kind="linf", sigma_x=sigma_x)
    recipe = default_sparse_glm_config(n, d, s_star, family, curv.gamma, curv.alpha, sigma_x, rho=float(opts.get("rho", 0.5)))
    s = int(opts.get("s", recipe.s))
    T = int(opts.get("T", recipe.T))
    eta0 = float(opts.get("eta0", recipe.eta0))
    fit = fit_dp_sparse_glm(data, family, s, eta0, _budget(cell, opts, m), recipe.B, T, recipe.R, rng.child(1))
    return float(np.sum((fit.beta - beta) ** 2))


def btl_truth(n: int) -> np.ndarray:
    """Evenly spread centred strengths in [-1, 1]."""
    return np.linspace(-1.0, 1.0, n)


def _run_btl(cell, opts, rng):
    n, p = int(_get(cell, opts, "n", "btl")), float(_get(cell, opts, "p", "btl"))
    theta = btl_truth(n)
    data = sample_comparisons(n, p, theta, rng.child(0))
    gamma, sigma = default_btl_hyperparams(n, p, _budget(cell, opts, "btl"), float(_get(cell, opts, "c0", "btl")))
    fit = fit_dp_btl(data, gamma, sigma, rng.child(1))
    return float(np.sum((fit.theta - theta) ** 2))


def _run_nonparam(cell, opts, rng):
    m = "nonparam"
    n = int(_get(cell, opts, "n", m))
    spec = SobolevSpec(int(_get(cell, opts, "alpha", m)), float(_get(cell, opts, "C", m)))
    sigma = float(_get(cell, opts, "sigma", m))
    f_true = series([0.0, 1.0])
    gen = rng.child(0).generator
    X = gen.random(n)
    Y = f_true(X) + sigma * gen.standard_normal(n)
    cfg = NonparamConfig(
        K=opts.get("K"),
        sigma=sigma,
        grid_size=opts.get("grid_size"),
        mcmc=McmcConfig(int(opts.get("burn_in", 1000)), int(opts.get("thin", 10))),
    )
    fit = fit_dp_nonparam(X, Y, spec, _budget(cell, opts, m), rng.child(1), cfg)
    return mise(fit, f_true)


RUNNERS = {"glm": _run_glm, "sparse_glm": _run_sparse, "btl": _run_btl, "nonparam": _run_nonparam}


def _task(args):
    model, cell_idx, cell, opts, seed, rep = args
    rng = SeededRng(seed, (cell_idx, rep))
    start = time.perf_counter()
    err = RUNNERS[model](cell, opts, rng)
    return cell_idx, rep, err, time.perf_counter() - start


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> list[dict]:
    """Run every (cell, replicate) task and return rows sorted by (cell, replicate).

    Each task draws from its own stream ``(cell, replicate)`` under the
    config seed, so results do not depend on ``threads`` or scheduling.
    Rows carry ``cell``, ``replicate``, the cell's grid values,
    ``sq_error`` (squared L2 error, or integrated squared error for
    ``nonparam``) and ``wall_time`` in seconds.
    """
    if cfg.model not in RUNNERS:
        raise ConfigError(f"unknown model kind {cfg.model!r}")
    cells = cfg.cells()
    tasks = [(cfg.model, ci, cell, cfg.options, cfg.seed, r) for ci, cell in enumerate(cells) for r in range(cfg.replicates)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_task, tasks, chunksize=max(1, len(tasks) // (4 * threads))))
    else:
        results = [_task(t) for t in tasks]
    rows = []
    for ci, rep, err, wall in sorted(results, key=lambda r: (r[0], r[1])):
        row = {"cell": ci, "replicate": rep}
        row.update(cells[ci])
        row["sq_error"] = err
        row["wall_time"] = wall
        rows.append(row)
    return rows


def rows_to_csv(rows: list[dict], timings: bool = False) -> str:
    """CSV text for experiment rows.

    Wall time is left out unless ``timings`` is set, so that two runs with the
    same seed produce byte-identical files.
    """
    if not rows:
        return ""
    fields = [k for k in rows[0] if timings or k != "wall_time"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for row in rows:
        w.writerow([repr(row[k]) if isinstance(row[k], float) else row[k] for k in fields])
    return buf.getvalue()


def read_rows_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for rec in reader:
            row = {}
            for k, v in rec.items():
                try:
                    num = float(v)
                    row[k] = int(num) if k in ("cell", "replicate") else num
                except ValueError:
                    row[k] = v
            rows.append(row)
    return rows


def cell_summary(rows: list[dict]) -> list[dict]:
    """Mean squared error and its standard error per cell."""
    by_cell: dict = {}
    for row in rows:
        by_cell.setdefault(row["cell"], []).append(row)
    out = []
    for ci in sorted(by_cell):
        group = by_cell[ci]
        errs = np.array([r["sq_error"] for r in group])
        se = float(errs.std(ddof=1) / math.sqrt(errs.size)) if errs.size > 1 else math.nan
        entry = {k: v for k, v in group[0].items() if k not in ("replicate", "sq_error", "wall_time")}
        entry.update({"replicates": int(errs.size), "mean_sq_error": float(errs.mean()), "se": se})
        out.append(entry)
    return out
