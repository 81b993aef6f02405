"""Hard thresholding, private top-s selection by peeling, and noisy IHT for sparse GLMs."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dp_glm import certified_noise_scale, default_truncation
from .errors import InvalidParameterError, UnsupportedError
from .glm import GlmDataset, GlmFamily, glm_gradient, neg_log_likelihood
from .mechanisms import PrivacyBudget, SeededRng, compose, split_budget


@dataclass
class SparseIterate:
    """Sparse vector plus its support.

    ``order`` lists the support indices in the order they were selected;
    ``support`` is the same set sorted.
    """

    values: np.ndarray
    support: np.ndarray
    order: tuple = ()

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.support = np.sort(np.asarray(self.support, dtype=int))
        if not self.order:
            self.order = tuple(int(j) for j in self.support)

    @classmethod
    def from_dense(cls, values) -> "SparseIterate":
        values = np.asarray(values, dtype=float)
        return cls(values, np.flatnonzero(values))

    def to_dict(self) -> dict:
        return {"values": self.values.tolist(), "support": self.support.tolist(), "order": list(self.order)}


@dataclass
class NoisyHtNoise:
    """Laplace draws used by one call of :func:`noisy_hard_threshold`.

    ``per_round`` is s x d (row i drawn for selection round i), ``final`` has
    length d; only its entries on the selected support reach the output.
    """

    per_round: np.ndarray
    final: np.ndarray
    scale: float


def _check_s(s, d):
    if isinstance(s, bool) or int(s) != s or s < 1:
        raise InvalidParameterError(f"sparsity s must be a positive integer, got {s}")
    if s > d:
        raise InvalidParameterError(f"sparsity s={s} exceeds the dimension {d}")
    return int(s)


def exact_top_s(v, s: int) -> SparseIterate:
    """Keep the ``s`` largest-magnitude coordinates; ties go to the lower index."""
    v = np.asarray(v, dtype=float).reshape(-1)
    s = _check_s(s, v.shape[0])
    order = np.argsort(-np.abs(v), kind="stable")[:s]
    out = np.zeros_like(v)
    out[order] = v[order]
    return SparseIterate(out, order, tuple(int(j) for j in order))


def peeling_noise_scale(lam: float, s: int, eps: float, delta: float) -> float:
    """Laplace scale ``lam * 2 sqrt(3 s log(1/delta)) / eps`` used in every peeling round."""
    if not 0 < delta < 1:
        raise UnsupportedError("private top-s selection requires 0 < delta < 1")
    if not (eps > 0 and lam > 0):
        raise InvalidParameterError(f"eps and lambda must be positive, got eps={eps}, lambda={lam}")
    return lam * 2.0 * math.sqrt(3.0 * s * math.log(1.0 / delta)) / eps


def noisy_hard_threshold(
    v, s: int, eps: float, delta: float, lam: float, rng: SeededRng, record_noise: bool = False
) -> tuple[SparseIterate, NoisyHtNoise | None]:
    """Private top-``s`` projection by peeling.

    Each of ``s`` rounds adds fresh Laplace noise to ``|v|`` and selects the
    largest noisy score among indices not chosen yet (lowest index on ties).
    The original values on the selected set are then released with another
    fresh Laplace draw added.  It is ``(eps, delta)``-DP when ``lam`` bounds
    the L-infinity change of ``v`` between adjacent datasets.

    Returns the iterate and, when ``record_noise`` is set, the noise used.
    """
    v = np.asarray(v, dtype=float).reshape(-1)
    d = v.shape[0]
    s = _check_s(s, d)
    scale = peeling_noise_scale(lam, s, eps, delta)
    W = rng.laplace(scale, (s, d))
    score = np.abs(v)
    available = np.ones(d, dtype=bool)
    order = []
    for i in range(s):
        noisy = np.where(available, score + W[i], -np.inf)
        j = int(np.argmax(noisy))
        order.append(j)
        available[j] = False
    w_final = rng.laplace(scale, (d,))
    idx = np.array(order)
    out = np.zeros(d)
    out[idx] = v[idx] + w_final[idx]
    noise = NoisyHtNoise(np.asarray(W), np.asarray(w_final), scale) if record_noise else None
    return SparseIterate(out, idx, tuple(order)), noise


@dataclass
class NoisyIhtResult:
    iterate: SparseIterate
    trace: list = field(default_factory=list)
    per_round_budget: PrivacyBudget | None = None
    consumed_budget: PrivacyBudget | None = None
    noise: list = field(default_factory=list)


def noisy_iht(
    grad: Callable[[np.ndarray], np.ndarray],
    n: int,
    s: int,
    eta0: float,
    budget: PrivacyBudget,
    B: float,
    T: int,
    theta0,
    rng: SeededRng,
    record_noise: bool = False,
) -> NoisyIhtResult:
    """Noisy iterative hard thresholding.

    Runs ``theta <- NoisyHT(theta - eta0 * grad(theta))`` for ``T`` rounds,
    each at budget ``(eps/T, delta/T)`` with sensitivity ``eta0 * B / n``.
    ``grad`` is the gradient of the empirical loss; ``B`` must bound the
    L-infinity change of a per-datum gradient for the privacy guarantee.
    """
    theta0 = np.asarray(theta0, dtype=float).reshape(-1)
    s = _check_s(s, theta0.shape[0])
    if np.count_nonzero(theta0) > s:
        raise InvalidParameterError(f"initial iterate has {np.count_nonzero(theta0)} nonzeros, more than s={s}")
    if isinstance(T, bool) or int(T) != T or T < 0:
        raise InvalidParameterError(f"T must be a non-negative integer, got {T}")
    current = SparseIterate.from_dense(theta0)
    if T == 0:
        return NoisyIhtResult(current, [current])
    per_round = split_budget(budget, T)
    lam = eta0 * B / n
    result = NoisyIhtResult(current, [current], per_round, compose([per_round] * T))
    for _ in range(int(T)):
        step = current.values - eta0 * grad(current.values)
        current, noise = noisy_hard_threshold(
            step, s, per_round.epsilon, per_round.delta, lam, rng, record_noise=record_noise
        )
        result.trace.append(current)
        if record_noise:
            result.noise.append(noise)
    result.iterate = current
    return result


def iht(grad: Callable[[np.ndarray], np.ndarray], s: int, eta: float, T: int, theta0) -> SparseIterate:
    """Plain (non-private) iterative hard thresholding."""
    theta = np.asarray(theta0, dtype=float).reshape(-1)
    current = SparseIterate.from_dense(theta)
    for _ in range(T):
        current = exact_top_s(current.values - eta * grad(current.values), s)
    return current


@dataclass
class SparseGlmResult:
    beta: np.ndarray
    support: np.ndarray
    selected: list
    iht: NoisyIhtResult
    config: dict
    privacy_certified: bool

    def to_dict(self) -> dict:
        return {
            "beta": self.beta.tolist(),
            "support": self.support.tolist(),
            "selected": [list(o) for o in self.selected],
            "trace": {"beta_norms": [float(np.linalg.norm(it.values)) for it in self.iht.trace]},
            "config": self.config,
            "privacy_certified": self.privacy_certified,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def fit_dp_sparse_glm(
    data: GlmDataset,
    family: GlmFamily,
    s: int,
    eta0: float,
    budget: PrivacyBudget,
    B: float,
    T: int,
    R: float,
    rng: SeededRng,
    beta0=None,
    record_noise: bool = False,
) -> SparseGlmResult:
    """Private sparse GLM fit: clipped-response gradient step followed by NoisyHT.

    Requires an L-infinity bounded design.  ``B >= 4 (R + c1) sigma_x``
    certifies the privacy guarantee; a smaller ``B`` is allowed and reported
    through ``privacy_certified``.
    """
    if data.design_bound_kind != "linf":
        raise InvalidParameterError("the sparse estimator needs a design with an L-infinity bound (design_bound_kind='linf')")
    beta0 = np.zeros(data.d) if beta0 is None else np.asarray(beta0, dtype=float)

    def grad(beta):
        return glm_gradient(data, family, beta, R)

    run = noisy_iht(grad, data.n, s, eta0, budget, B, T, beta0, rng, record_noise=record_noise)
    certified = B >= certified_noise_scale(R, family, data.sigma_x)
    config = {"s": int(s), "eta0": eta0, "budget": budget.to_dict(), "B": B, "T": int(T), "R": R}
    return SparseGlmResult(
        beta=run.iterate.values,
        support=run.iterate.support,
        selected=[it.order for it in run.trace[1:]],
        iht=run,
        config=config,
        privacy_certified=bool(certified),
    )


@dataclass(frozen=True)
class SparseRecipe:
    s: int
    eta0: float
    T: int
    R: float
    B: float


def default_sparse_glm_config(
    n: int,
    d: int,
    s_star: int,
    family: GlmFamily,
    gamma_hat: float,
    alpha_hat: float,
    sigma_x: float = 1.0,
    rho: float = 0.5,
    c0: float = 72.0,
) -> SparseRecipe:
    """Working sparsity ``s = 4 c0 (gamma/alpha)^2 s*`` (capped at ``d``),
    ``eta0 = 1/(2 gamma)`` and ``T = ceil((2 gamma/(rho alpha)) log(6 gamma n))``."""
    if not (alpha_hat > 0 and gamma_hat >= alpha_hat):
        raise InvalidParameterError(f"need gamma_hat >= alpha_hat > 0, got gamma={gamma_hat}, alpha={alpha_hat}")
    if not 0 < rho < 1:
        raise InvalidParameterError(f"rho must lie in (0, 1), got {rho}")
    s = min(d, math.ceil(4 * c0 * (gamma_hat / alpha_hat) ** 2 * s_star))
    T = max(1, math.ceil(2 * gamma_hat / (rho * alpha_hat) * math.log(max(6 * gamma_hat * n, math.e))))
    R = default_truncation(n, family)
    return SparseRecipe(s=s, eta0=1.0 / (2 * gamma_hat), T=T, R=R, B=certified_noise_scale(R, family, sigma_x))


def constrained_minimizer(
    data: GlmDataset, family: GlmFamily, s: int, eta0: float, T: int, beta0=None
) -> SparseIterate:
    """Approximate ``argmin_{||b||_0 <= s} L_n(b)`` by plain IHT run for ``10 T`` iterations."""
    beta0 = np.zeros(data.d) if beta0 is None else beta0
    return iht(lambda b: glm_gradient(data, family, b), s, eta0, 10 * T, beta0)


def suboptimality_path(data: GlmDataset, family: GlmFamily, trace: list, reference: SparseIterate) -> np.ndarray:
    """``L_n(theta_t) - L_n(theta_hat)`` along an IHT trace."""
    base = neg_log_likelihood(data, family, reference.values)
    return np.array([neg_log_likelihood(data, family, it.values) - base for it in trace])
