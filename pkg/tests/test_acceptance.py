"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line."""

import itertools
import math
import time

import numpy as np
import pytest
from scipy.stats import kstest, laplace

from dpscore.attack import (
    BtlModel,
    GaussianLocationModel,
    GlmModel,
    NonparamModel,
    SparseGlmModel,
    completeness_experiment,
    soundness_experiment,
    stein_identity_check,
)
from dpscore.harness import cell_summary, fit_loglog_slope, parse_config, privacy_audit, run_experiment
from dpscore.harness.audit import gaussian_count_mechanism, laplace_count_mechanism
from dpscore.harness.estimators import (
    dp_btl_estimator,
    dp_glm_estimator,
    dp_nonparam_estimator,
    dp_sparse_estimator,
)
from dpscore.harness.experiment import btl_truth
from dpscore.mechanisms import PrivacyBudget, SeededRng, ZeroNoiseRng
from dpscore.nonparam import OrbitopeGrid, mise, sample_knorm_noise, series, truncated_empirical_coeffs
from dpscore.sparse import noisy_hard_threshold

pytestmark = pytest.mark.acceptance


def exhaustive_top_s(v, s):
    """Support maximizing the retained energy, over every size-``s`` subset."""
    best = max(itertools.combinations(range(v.size), s), key=lambda c: float(np.sum(v[list(c)] ** 2)))
    out = np.zeros_like(v)
    out[list(best)] = v[list(best)]
    return out


def test_noisy_ht_zero_noise_equivalence(acceptance):
    start = time.perf_counter()
    gen = np.random.default_rng(1)
    mismatches = 0
    for k in range(500):
        d = int(gen.integers(1, 13))
        s = int(gen.integers(1, min(d, 6) + 1))
        v = gen.normal(scale=gen.choice([0.01, 1.0, 100.0]), size=d)
        got, _ = noisy_hard_threshold(v, s, 1.0, 1e-3, 1.0, ZeroNoiseRng(k))
        mismatches += not np.array_equal(got.values, exhaustive_top_s(v, s))
    elapsed = time.perf_counter() - start
    acceptance(1, "NoisyHT zero-noise equivalence", mismatches == 0 and elapsed < 10,
               f"{mismatches} mismatches on 500 vectors in {elapsed:.1f}s")


def test_peeling_accuracy_bound(acceptance):
    start = time.perf_counter()
    gen = np.random.default_rng(2)
    violations = 0
    worst = 0.0
    for k in range(1000):
        d = int(gen.integers(2, 60))
        s = int(gen.integers(1, d))
        s_hat = int(gen.integers(1, s + 1))
        v = gen.normal(scale=gen.choice([0.1, 1.0, 10.0]), size=d)
        v_hat = np.zeros(d)
        v_hat[gen.choice(d, s_hat, replace=False)] = gen.normal(size=s_hat)
        lam = float(gen.choice([0.01, 0.3, 3.0]))
        out, noise = noisy_hard_threshold(v, s, 1.0, 0.1, lam, SeededRng(k), record_noise=True)
        lhs = float(np.sum(v**2) - np.sum(v[out.support] ** 2))
        c = 1.0
        rhs = (1 + 1 / c) * (d - s) / (d - s_hat) * float(np.sum((v_hat - v) ** 2)) + 4 * (1 + c) * float(
            np.sum(np.max(np.abs(noise.per_round), axis=1) ** 2)
        )
        violations += lhs > rhs * (1 + 1e-12)
        worst = max(worst, lhs / rhs if rhs > 0 else 0.0)
    elapsed = time.perf_counter() - start
    acceptance(2, "peeling accuracy bound (c = 1)", violations == 0 and elapsed < 30,
               f"{violations} violations on 1000 instances, max lhs/rhs {worst:.3f}, {elapsed:.1f}s")


def test_score_soundness(acceptance):
    start = time.perf_counter()
    budget = PrivacyBudget(1.0, 1e-3)
    sparse_theta = np.zeros(20)
    sparse_theta[:2] = 0.5
    glm, sparse, btl, nonparam = GlmModel(3), SparseGlmModel(20), BtlModel(0.5), NonparamModel(2)
    cases = [
        ("glm", glm, dp_glm_estimator(glm, budget), np.array([0.5, -0.3, 0.2]), 200),
        ("sparse_glm", sparse, dp_sparse_estimator(sparse, budget, s_star=2, s=4, T=3), sparse_theta, 500),
        ("btl", btl, dp_btl_estimator(btl, budget), btl_truth(20), 20),
        ("nonparam", nonparam, dp_nonparam_estimator(nonparam, budget), np.array([0.2, 0.8]), 200),
    ]
    parts, ok = [], True
    for k, (name, model, est, theta, n) in enumerate(cases):
        s = soundness_experiment(model, est, theta, n, 10_000, SeededRng(3, k))
        z = s.mean_out / s.se_out
        ok &= abs(z) <= 4
        parts.append(f"{name} z={z:+.2f}")
    elapsed = time.perf_counter() - start
    acceptance(3, "score soundness, 10^4 replicates per model", ok and elapsed < 300, f"{', '.join(parts)}; {elapsed:.0f}s")


def test_completeness_sample_mean(acceptance):
    start = time.perf_counter()
    parts, ok = [], True
    for d in (1, 3, 10):
        c = completeness_experiment(GaussianLocationModel(d), lambda data, r: data.mean(axis=0),
                                    np.linspace(-1, 1, d), 20, 10_000, SeededRng(4, d))
        fd_exact = abs(c.divergence_fd - d) <= 1e-10 * d
        attack_ok = abs(c.sum_in_attack - d) <= 4 * c.se_attack
        ok &= fd_exact and attack_ok
        parts.append(f"d={d}: fd-d={c.divergence_fd - d:.1e}, attack={c.sum_in_attack:.3f}±{c.se_attack:.3f}")
    elapsed = time.perf_counter() - start
    acceptance(4, "completeness for the sample mean", ok and elapsed < 120, f"{'; '.join(parts)}; {elapsed:.0f}s")


STEIN_FUNCTIONS = {
    "z": (lambda z: z, lambda z: np.ones_like(z)),
    "z^2": (lambda z: z**2, lambda z: 2 * z),
    "z^3": (lambda z: z**3, lambda z: 3 * z**2),
    "sin": (np.sin, np.cos),
    "tanh": (np.tanh, lambda z: 1 / np.cosh(z) ** 2),
}


def test_stein_identities(acceptance):
    start = time.perf_counter()
    failed = []
    worst = 0.0
    for k, (density, (name, (h, hp))) in enumerate(itertools.product(("normal", "quartic"), STEIN_FUNCTIONS.items())):
        r = stein_identity_check(density, h, hp, 1_000_000, SeededRng(5, k))
        worst = max(worst, r.gap / r.se if r.se > 0 else 0.0)
        if not r.passed:
            failed.append(f"{density}/{name}")
    elapsed = time.perf_counter() - start
    acceptance(5, "Stein identities, 5 functions x 2 densities", not failed and elapsed < 60,
               f"failures {failed or 'none'}, worst gap {worst:.2f} SE, {elapsed:.0f}s")


def glm_rate(eps):
    ns = ", ".join(str(2**k) for k in range(10, 15))
    cfg = parse_config(f"model = glm\nn = {ns}\nd = 5\neps = {eps}\ndelta = n^-1.1\nreplicates = 200\nseed = 6\n")
    rows = run_experiment(cfg)
    fit = fit_loglog_slope(rows, "n")
    cells = ", ".join(f"{int(x)}:{m:.3g}" for x, m, _ in fit.cells)
    return fit.slope, cells


def test_dp_glm_statistical_rate(acceptance):
    start = time.perf_counter()
    slope, cells = glm_rate(5.0)
    elapsed = time.perf_counter() - start
    acceptance(6, "DP-GLM slope at eps = 5 in [-1.25, -0.75]", -1.25 <= slope <= -0.75 and elapsed < 1200,
               f"slope {slope:.3f} (MSE by n {cells}), {elapsed:.0f}s")


def test_dp_glm_privacy_rate(acceptance):
    start = time.perf_counter()
    slope, cells = glm_rate(0.1)
    elapsed = time.perf_counter() - start
    acceptance(7, "DP-GLM slope at eps = 0.1 in [-2.4, -1.5]", -2.4 <= slope <= -1.5 and elapsed < 1200,
               f"slope {slope:.3f} (MSE by n {cells}), {elapsed:.0f}s")


def test_sparse_dimension_insensitivity(acceptance):
    start = time.perf_counter()
    cfg = parse_config(
        "model = sparse_glm\nn = 40000\nd = 50, 200, 800\ns_star = 3\neps = 5\ndelta = n^-1.1\n"
        "s = 12\nT = 5\nreplicates = 100\nseed = 8\n"
    )
    summary = {c["d"]: c for c in cell_summary(run_experiment(cfg))}
    lo, hi = summary[50], summary[800]
    ratio = hi["mean_sq_error"] / lo["mean_sq_error"]
    ratio_se = ratio * math.hypot(hi["se"] / hi["mean_sq_error"], lo["se"] / lo["mean_sq_error"])
    bound = 2.5 * math.log(800) / math.log(50)
    elapsed = time.perf_counter() - start
    mses = ", ".join(f"d={d}:{c['mean_sq_error']:.3f}" for d, c in summary.items())
    acceptance(8, "sparse GLM MSE ratio d=800 vs 50", ratio - ratio_se <= bound and elapsed < 1800,
               f"ratio {ratio:.2f}±{ratio_se:.2f} vs bound {bound:.2f} ({mses}), {elapsed:.0f}s")


def non_increasing(cells):
    return all(b["mean_sq_error"] <= a["mean_sq_error"] + math.hypot(a["se"], b["se"]) for a, b in zip(cells, cells[1:]))


def test_btl_risk_monotone(acceptance):
    start = time.perf_counter()
    by_p = cell_summary(run_experiment(parse_config("model = btl\nn = 200\np = 0.2, 0.4, 0.8\neps = 1\nreplicates = 200\nseed = 9")))
    by_eps = cell_summary(run_experiment(parse_config("model = btl\nn = 200\np = 0.5\neps = 0.3, 1, 3\nreplicates = 200\nseed = 9")))
    elapsed = time.perf_counter() - start
    ok = non_increasing(by_p) and non_increasing(by_eps)
    fmt = lambda cells, key: ", ".join(f"{c[key]}:{c['mean_sq_error']:.1f}±{c['se']:.1f}" for c in cells)
    acceptance(9, "BTL MSE non-increasing in p and eps", ok and elapsed < 900,
               f"by p {fmt(by_p, 'p')}; by eps {fmt(by_eps, 'eps')}; {elapsed:.0f}s")


def test_nonparam_bias_term(acceptance):
    start = time.perf_counter()
    theta = np.array([0.3, 0.8, -0.5, 0.4, 0.25, -0.2])
    f = series(theta)
    gen = SeededRng(10).generator
    X = gen.random(4000)
    Y = f(X) + 0.5 * gen.standard_normal(4000)
    worst = 0.0
    for K in range(1, 10):
        est = truncated_empirical_coeffs(X, Y, K, 1e6).theta
        m = min(K, 6)
        # everything outside the tail lives in the first min(K, 6) coordinates
        head = float(np.sum((est[:m] - theta[:m]) ** 2) + np.sum(est[m:] ** 2))
        tail = mise(series(est), f) - head
        expected = float(np.sum(theta[K:] ** 2))
        worst = max(worst, abs(tail - expected))
    elapsed = time.perf_counter() - start
    acceptance(10, "nonparametric tail term matches Parseval", worst <= 1e-8 and elapsed < 60,
               f"max |tail - sum_(j>K) theta_j^2| = {worst:.1e} over K = 1..9, {elapsed:.1f}s")


def test_knorm_one_dimensional_laplace(acceptance):
    start = time.perf_counter()
    scale = 0.37
    draws = sample_knorm_noise(scale, OrbitopeGrid(1), SeededRng(11), size=10_000)[:, 0]
    p = kstest(draws, laplace(scale=scale).cdf).pvalue
    elapsed = time.perf_counter() - start
    acceptance(11, "K = 1 K-norm noise is Laplace", p > 0.01 and elapsed < 60, f"KS p-value {p:.3f}, {elapsed:.1f}s")


def test_privacy_audit(acceptance):
    start = time.perf_counter()
    parts, ok = [], True
    delta = 1e-5
    for k, eps in enumerate((0.5, 1.0, 2.0)):
        for j, (name, make, dlt) in enumerate((
            ("laplace", lambda e, f: laplace_count_mechanism(e, scale_factor=f), 0.0),
            ("gaussian", lambda e, f: gaussian_count_mechanism(e, delta, scale_factor=f), delta),
        )):
            honest = privacy_audit(make(eps, 1.0), (0.0, 1.0), 1_000_000, SeededRng(12, (k, j, 0)), delta=dlt).epsilon_hat
            broken = privacy_audit(make(eps, 0.5), (0.0, 1.0), 1_000_000, SeededRng(12, (k, j, 1)), delta=dlt).epsilon_hat
            ok &= honest <= eps + 0.1 and broken > eps
            parts.append(f"{name} eps={eps}: {honest:.3f}/{broken:.3f}")
    elapsed = time.perf_counter() - start
    acceptance(12, "privacy audit (honest/broken estimates)", ok and elapsed < 300, f"{'; '.join(parts)}; {elapsed:.0f}s")


def test_privacy_suppresses_attack(acceptance):
    start = time.perf_counter()
    model = GlmModel(3)
    theta = np.array([0.5, -0.3, 0.2])
    n = 2000
    sums = {}
    for eps in (0.2, 5.0):
        est = dp_glm_estimator(model, PrivacyBudget(eps, n**-1.1))
        sums[eps] = completeness_experiment(model, est, theta, n, 1000, SeededRng(13), finite_differences=False)
    lo, hi = sums[0.2], sums[5.0]
    combined = math.hypot(lo.se_attack, hi.se_attack)
    elapsed = time.perf_counter() - start
    acceptance(13, "attack sum at eps = 0.2 below eps = 5 by 1 SE", lo.sum_in_attack <= hi.sum_in_attack - combined and elapsed < 600,
               f"eps=0.2: {lo.sum_in_attack:.2f}±{lo.se_attack:.2f}, eps=5: {hi.sum_in_attack:.2f}±{hi.se_attack:.2f}, {elapsed:.0f}s")
