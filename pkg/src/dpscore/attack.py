"""Score attacks, soundness/completeness experiments, priors and Stein checks.

The attack statistic for a candidate record ``z`` against an estimate ``M`` is
``<M - theta, S_theta(z)>`` where ``S_theta`` is the score (gradient of the
log-likelihood).  Out-of-sample candidates give mean zero for any estimator.
Summed over the records actually used, the expectation equals the divergence
of ``theta -> E M``.

Each model kind is wrapped in a small adapter that knows how to sample data,
pick in-sample or fresh candidates, and evaluate scores.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import expit
from scipy.stats import truncnorm

from .btl import ComparisonData, resample_outcomes, sample_comparisons
from .errors import InvalidParameterError
from .glm import LOGISTIC, GlmDataset, GlmFamily, generate_glm, glm_score
from .mechanisms import SeededRng
from .nonparam import fourier_basis

Estimator = Callable[[object, SeededRng], np.ndarray]


class GaussianLocationModel:
    """``z ~ N(theta, sigma^2 I_d)``; data is an ``n x d`` array."""

    kind = "gaussian_location"

    def __init__(self, d: int, sigma: float = 1.0):
        self.d = int(d)
        self.sigma = float(sigma)

    def sample(self, theta, n, rng):
        theta = np.asarray(theta, dtype=float)
        return theta + self.sigma * rng.generator.standard_normal((n, self.d))

    def n_candidates(self, data):
        return data.shape[0]

    def in_sample(self, data, i):
        return data[i]

    def fresh_candidate(self, data, theta, rng):
        return self.sample(theta, 1, rng)[0]

    def score(self, z, theta):
        return (np.asarray(z) - theta) / self.sigma**2

    def total_score(self, data, theta):
        return (data - theta).sum(axis=0) / self.sigma**2

    def support(self, theta):
        return None


class GlmModel:
    """GLM records ``(x, y)`` with the design of :func:`generate_glm`."""

    kind = "glm"

    def __init__(self, d: int, family: GlmFamily = LOGISTIC, design_bound_kind: str = "l2_scaled", sigma_x: float = 1.0):
        self.d = int(d)
        self.family = family
        self.design_bound_kind = design_bound_kind
        self.sigma_x = sigma_x

    def sample(self, theta, n, rng) -> GlmDataset:
        return generate_glm(n, self.d, theta, self.family, rng, self.design_bound_kind, self.sigma_x)

    def n_candidates(self, data):
        return data.n

    def in_sample(self, data, i):
        return data.X[i], data.y[i]

    def fresh_candidate(self, data, theta, rng):
        one = self.sample(theta, 1, rng)
        return one.X[0], one.y[0]

    def score(self, z, theta):
        x, y = z
        return glm_score(self.family, x, y, theta)

    def total_score(self, data, theta):
        return glm_score(self.family, data.X, data.y, theta).sum(axis=0)

    def support(self, theta):
        return None


class SparseGlmModel(GlmModel):
    """Sparse GLM: the attack only looks at coordinates in ``supp(theta)``."""

    kind = "sparse_glm"

    def __init__(self, d: int, family: GlmFamily = LOGISTIC, sigma_x: float = 1.0):
        super().__init__(d, family, "linf", sigma_x)

    def support(self, theta):
        return np.flatnonzero(np.asarray(theta))


class BtlModel:
    """BTL comparisons on a random graph; a candidate is one item's outcome vector.

    A candidate is ``(i, opponents, wins)``.  Fresh candidates resample item
    ``i``'s outcomes on the same edges.
    """

    kind = "btl"

    def __init__(self, p: float):
        self.p = float(p)

    def sample(self, theta, n, rng) -> ComparisonData:
        return sample_comparisons(n, self.p, theta, rng)

    def n_candidates(self, data):
        return data.n_items

    def in_sample(self, data, i):
        opp, wins = data.item_outcomes(i)
        return i, opp, wins

    def fresh_candidate(self, data, theta, rng):
        i = int(rng.generator.integers(data.n_items))
        k = data.incident(i)
        y = resample_outcomes(data, theta, rng, k)
        first = data.edges[k, 0] == i
        opp = np.where(first, data.edges[k, 1], data.edges[k, 0])
        wins = np.where(first, y, 1 - y)
        return i, opp, wins

    def score(self, z, theta):
        i, opp, wins = z
        theta = np.asarray(theta, dtype=float)
        r = wins - expit(theta[i] - theta[opp])
        s = np.zeros_like(theta)
        s[i] = r.sum()
        np.subtract.at(s, opp, r)
        return s

    def total_score(self, data, theta):
        theta = np.asarray(theta, dtype=float)
        e = data.edges
        r = data.outcomes - expit(theta[e[:, 0]] - theta[e[:, 1]])
        n = data.n_items
        return np.bincount(e[:, 0], r, minlength=n) - np.bincount(e[:, 1], r, minlength=n)

    def support(self, theta):
        return None


@dataclass(frozen=True)
class NonparamData:
    X: np.ndarray
    Y: np.ndarray

    @property
    def n(self):
        return self.X.shape[0]


class NonparamModel:
    """``Y = sum_{j<=k} theta_j phi_j(X) + sigma N(0,1)`` with ``X ~ U(0,1)``."""

    kind = "nonparam"

    def __init__(self, k: int, sigma: float = 1.0):
        self.k = int(k)
        self.sigma = float(sigma)

    def sample(self, theta, n, rng) -> NonparamData:
        gen = rng.generator
        X = gen.random(n)
        Y = fourier_basis(self.k, X) @ np.asarray(theta, dtype=float) + self.sigma * gen.standard_normal(n)
        return NonparamData(X, Y)

    def n_candidates(self, data):
        return data.n

    def in_sample(self, data, i):
        return data.X[i], data.Y[i]

    def fresh_candidate(self, data, theta, rng):
        one = self.sample(theta, 1, rng)
        return one.X[0], one.Y[0]

    def score(self, z, theta):
        x, y = z
        phi = fourier_basis(self.k, [x])[0]
        return (y - phi @ theta) * phi / self.sigma**2

    def total_score(self, data, theta):
        Phi = fourier_basis(self.k, data.X)
        return Phi.T @ (data.Y - Phi @ theta) / self.sigma**2

    def support(self, theta):
        return None


MODEL_KINDS = {
    "gaussian_location": GaussianLocationModel,
    "glm": GlmModel,
    "sparse_glm": SparseGlmModel,
    "btl": BtlModel,
    "nonparam": NonparamModel,
}


def make_model(kind: str, **kwargs):
    try:
        return MODEL_KINDS[kind](**kwargs)
    except KeyError:
        raise InvalidParameterError(f"unknown model kind {kind!r}; expected one of {sorted(MODEL_KINDS)}") from None


def _restricted_diff(model, estimate, theta):
    estimate = np.asarray(estimate, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if estimate.shape != theta.shape:
        raise InvalidParameterError(f"estimate shape {estimate.shape} does not match theta shape {theta.shape}")
    diff = estimate - theta
    supp = model.support(theta)
    if supp is not None:
        masked = np.zeros_like(diff)
        masked[supp] = diff[supp]
        diff = masked
    return diff


def score_attack(model, candidate, estimate, theta) -> float:
    """``<M - theta, S_theta(candidate)>``, restricted to ``supp(theta)`` for the sparse model."""
    diff = _restricted_diff(model, estimate, theta)
    s = model.score(candidate, np.asarray(theta, dtype=float))
    if s.shape != diff.shape:
        raise InvalidParameterError(f"score has shape {s.shape}, estimate has {diff.shape}")
    return float(diff @ s)


def _mean_se(values):
    v = np.asarray(values, dtype=float)
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else math.inf
    return float(v.mean()), se


@dataclass
class SoundnessSummary:
    mean_out: float
    se_out: float
    mean_abs_out: float
    rmse: float
    fisher_lambda_max: float
    cs_ratio: float
    values: np.ndarray = field(repr=False, default=None)

    def to_dict(self):
        return {k: getattr(self, k) for k in ("mean_out", "se_out", "mean_abs_out", "rmse", "fisher_lambda_max", "cs_ratio")}


def soundness_experiment(model, estimator: Estimator, theta, n: int, replicates: int, rng: SeededRng) -> SoundnessSummary:
    """Attack values on fresh out-of-sample candidates.

    ``cs_ratio = mean_abs / (rmse * sqrt(lambda_max(I_hat)))`` where ``I_hat``
    is the empirical second moment of the candidate scores (restricted to the
    attacked coordinates); by Cauchy-Schwarz it should not exceed 1 beyond
    Monte Carlo error.
    """
    theta = np.asarray(theta, dtype=float)
    supp = model.support(theta)
    values = np.empty(replicates)
    sq_err = np.empty(replicates)
    dim = theta.size if supp is None else len(supp)
    fisher = np.zeros((dim, dim))
    for r in range(replicates):
        rr = rng.child(r)
        data = model.sample(theta, n, rr.child(0))
        est = np.asarray(estimator(data, rr.child(1)), dtype=float)
        cand = model.fresh_candidate(data, theta, rr.child(2))
        values[r] = score_attack(model, cand, est, theta)
        s = model.score(cand, theta)
        diff = _restricted_diff(model, est, theta)
        if supp is not None:
            s = s[supp]
            diff = diff[supp]
        fisher += np.outer(s, s)
        sq_err[r] = diff @ diff
    fisher /= replicates
    mean, se = _mean_se(values)
    mean_abs = float(np.abs(values).mean())
    rmse = math.sqrt(sq_err.mean())
    lam = float(np.linalg.eigvalsh(fisher)[-1]) if dim else 0.0
    denom = rmse * math.sqrt(lam)
    ratio = mean_abs / denom if denom > 0 else (0.0 if mean_abs == 0 else math.inf)
    return SoundnessSummary(mean, se, mean_abs, rmse, lam, ratio, values)


@dataclass
class CompletenessSummary:
    sum_in_attack: float
    se_attack: float
    divergence_fd: float
    se_fd: float
    gap: float
    combined_se: float
    attack_values: np.ndarray = field(repr=False, default=None)

    def to_dict(self):
        return {k: getattr(self, k) for k in ("sum_in_attack", "se_attack", "divergence_fd", "se_fd", "gap", "combined_se")}


def completeness_experiment(
    model,
    estimator: Estimator,
    theta,
    n: int,
    replicates: int,
    rng: SeededRng,
    fd_step: float = 0.01,
    finite_differences: bool = True,
) -> CompletenessSummary:
    """Compare the in-sample attack sum with the divergence of the estimator's mean.

    The left side averages ``sum_i A_i`` (computed as ``<M - theta, total score>``)
    over replicates.  The right side averages central differences
    ``(M_j(theta + h e_j) - M_j(theta - h e_j)) / 2h`` over the attacked
    coordinates, with both sides of each difference driven by the same
    random streams.
    """
    theta = np.asarray(theta, dtype=float)
    supp = model.support(theta)
    coords = np.arange(theta.size) if supp is None else np.asarray(supp)
    attack = np.empty(replicates)
    fd = np.empty(replicates)
    for r in range(replicates):
        rr = rng.child(r)
        data = model.sample(theta, n, rr.child(0))
        est = np.asarray(estimator(data, rr.child(1)), dtype=float)
        diff = _restricted_diff(model, est, theta)
        attack[r] = float(diff @ model.total_score(data, theta))
        if finite_differences:
            total = 0.0
            for j in coords:
                step = np.zeros_like(theta)
                step[j] = fd_step
                up = estimator(model.sample(theta + step, n, rr.child(0)), rr.child(1))[j]
                down = estimator(model.sample(theta - step, n, rr.child(0)), rr.child(1))[j]
                total += (up - down) / (2 * fd_step)
            fd[r] = total
    a_mean, a_se = _mean_se(attack)
    if finite_differences:
        f_mean, f_se = _mean_se(fd)
    else:
        f_mean, f_se = math.nan, math.nan
    combined = math.hypot(a_se, f_se) if finite_differences else a_se
    return CompletenessSummary(a_mean, a_se, f_mean, f_se, abs(a_mean - f_mean), combined, attack)


# ---- priors -----------------------------------------------------------------

PRIOR_KINDS = ("beta33", "quartic", "sparse_trunc_normal", "uniform_pm")


@dataclass(frozen=True)
class PriorSpec:
    """Prior over parameter vectors of dimension ``d``.

    ``beta33``: i.i.d. Beta(3, 3).  ``quartic``: i.i.d. with density
    ``(15/16)(1 - t^2)^2`` on (-1, 1).  ``sparse_trunc_normal``: ``d`` draws
    of N(0, gamma^2) truncated to (-1, 1), keeping the ``s_star`` largest in
    magnitude; ``gamma^2`` defaults to ``1 / (4 log(d / (4 s_star)))``.
    ``uniform_pm``: i.i.d. Uniform(-B, B).
    """

    kind: str
    d: int
    s_star: int | None = None
    gamma: float | None = None
    B: float | None = None

    def __post_init__(self):
        if self.kind not in PRIOR_KINDS:
            raise InvalidParameterError(f"unknown prior kind {self.kind!r}")
        if self.d < 1:
            raise InvalidParameterError(f"d must be positive, got {self.d}")
        if self.kind == "sparse_trunc_normal":
            if self.s_star is None or self.s_star < 1:
                raise InvalidParameterError("sparse prior needs s_star >= 1")
            if 4 * self.s_star >= self.d:
                raise InvalidParameterError(f"sparse prior needs 4 s_star < d, got s_star={self.s_star}, d={self.d}")
        if self.kind == "uniform_pm" and not (self.B is not None and self.B > 0):
            raise InvalidParameterError("uniform_pm prior needs B > 0")

    @property
    def trunc_normal_gamma(self) -> float:
        if self.gamma is not None:
            return self.gamma
        return math.sqrt(1.0 / (4.0 * math.log(self.d / (4 * self.s_star))))


def sample_prior(spec: PriorSpec, rng: SeededRng, size: int | None = None) -> np.ndarray:
    """One parameter vector (or ``size`` of them stacked) from the prior."""
    gen = rng.generator
    m = 1 if size is None else size
    if spec.kind == "beta33":
        out = gen.beta(3.0, 3.0, size=(m, spec.d))
    elif spec.kind == "quartic":
        out = 2.0 * gen.beta(3.0, 3.0, size=(m, spec.d)) - 1.0
    elif spec.kind == "uniform_pm":
        out = gen.uniform(-spec.B, spec.B, size=(m, spec.d))
    else:
        g = spec.trunc_normal_gamma
        draws = truncnorm.rvs(-1.0 / g, 1.0 / g, scale=g, size=(m, spec.d), random_state=gen)
        out = np.zeros_like(draws)
        keep = np.argsort(-np.abs(draws), axis=1, kind="stable")[:, : spec.s_star]
        rows = np.arange(m)[:, None]
        out[rows, keep] = draws[rows, keep]
    return out[0] if size is None else out


# ---- Stein identities -------------------------------------------------------

def _normal_sampler(gen, n):
    return gen.standard_normal(n)


def _quartic_sampler(gen, n):
    return 2.0 * gen.beta(3.0, 3.0, n) - 1.0


STEIN_DENSITIES = {
    # name: (sampler, -p'(z)/p(z))
    "normal": (_normal_sampler, lambda z: z),
    "quartic": (_quartic_sampler, lambda z: 4.0 * z / (1.0 - z**2)),
}


@dataclass
class SteinResult:
    lhs: float
    rhs: float
    gap: float
    se: float
    passed: bool


def stein_identity_check(density: str, h: Callable, h_prime: Callable, n: int, rng: SeededRng) -> SteinResult:
    """Monte Carlo check of ``E h'(Z) = E[h(Z) * (-p'(Z)/p(Z))]``.

    Both densities vanish (or decay) at the boundary, so no boundary term
    appears for bounded ``h``.  The gap is tested against four standard errors
    of the paired difference.
    """
    try:
        sampler, neg_log_deriv = STEIN_DENSITIES[density]
    except KeyError:
        raise InvalidParameterError(f"unknown density {density!r}; expected one of {sorted(STEIN_DENSITIES)}") from None
    z = sampler(rng.generator, n)
    left = h_prime(z)
    right = h(z) * neg_log_deriv(z)
    d = left - right
    mean, se = _mean_se(d)
    return SteinResult(float(left.mean()), float(right.mean()), abs(mean), se, abs(mean) <= 4 * se)


# ---- record-level experiment ------------------------------------------------

@dataclass(frozen=True)
class AttackRecord:
    replicate: int
    candidate: int
    membership: bool
    value: float


def attack_experiment(
    model, estimator: Estimator, theta, n: int, replicates: int, rng: SeededRng, in_per_replicate: int = 1
) -> list[AttackRecord]:
    """Attack values for in-sample and fresh candidates, one row each.

    Per replicate the first ``in_per_replicate`` records of the dataset are
    attacked along with the same number of fresh candidates; the candidate
    ids of fresh draws are ``-1, -2, ...``.
    """
    theta = np.asarray(theta, dtype=float)
    records = []
    for r in range(replicates):
        rr = rng.child(r)
        data = model.sample(theta, n, rr.child(0))
        est = estimator(data, rr.child(1))
        k = min(in_per_replicate, model.n_candidates(data))
        for i in range(k):
            records.append(AttackRecord(r, i, True, score_attack(model, model.in_sample(data, i), est, theta)))
        for i in range(k):
            cand = model.fresh_candidate(data, theta, rr.child(2).child(i))
            records.append(AttackRecord(r, -(i + 1), False, score_attack(model, cand, est, theta)))
    return records


def summarize_records(records: list[AttackRecord]) -> dict:
    out = {}
    for label, member in (("in", True), ("out", False)):
        vals = [rec.value for rec in records if rec.membership == member]
        if vals:
            m, se = _mean_se(vals)
            out[label] = {"count": len(vals), "mean": m, "se": se}
    return out


def write_attack_csv(path, records: list[AttackRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["replicate", "candidate", "membership", "A"])
        for rec in records:
            w.writerow([rec.replicate, rec.candidate, int(rec.membership), repr(rec.value)])


def write_attack_summary(path, records: list[AttackRecord], extra: dict | None = None) -> None:
    summary = summarize_records(records)
    if extra:
        summary.update(extra)
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2)
