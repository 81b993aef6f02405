"""Bradley-Terry-Luce pairwise comparisons and the objective-perturbed private MLE.

The estimator minimizes

    L(theta; y) + (gamma/2) ||theta||^2 + w' theta,   w ~ N(0, sigma^2 I),

over ``{theta : ||theta||_inf <= 1, sum(theta) = 0}``.  Two datasets are
adjacent when they differ in every outcome involving one item, on the same
comparison graph.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import ConvergenceError, InvalidParameterError, UnsupportedError
from .mechanisms import PrivacyBudget, SeededRng


@dataclass(frozen=True)
class ComparisonData:
    """Comparison graph with one Bernoulli outcome per edge.

    ``edges`` is an ``m x 2`` integer array with ``i < j`` in each row and
    ``outcomes[k] = 1`` iff ``edges[k, 0]`` beat ``edges[k, 1]``.
    """

    n_items: int
    edges: np.ndarray
    outcomes: np.ndarray
    p: float = 1.0

    def __post_init__(self):
        edges = np.array(self.edges, dtype=np.int64).reshape(-1, 2)
        outcomes = np.array(self.outcomes, dtype=np.int64).reshape(-1)
        if self.n_items < 2:
            raise InvalidParameterError(f"need at least 2 items, got {self.n_items}")
        if edges.shape[0] != outcomes.shape[0]:
            raise InvalidParameterError("edges and outcomes differ in length")
        if edges.size and (edges.min() < 0 or edges.max() >= self.n_items):
            raise InvalidParameterError("edge endpoint out of range")
        if np.any(edges[:, 0] >= edges[:, 1]):
            raise InvalidParameterError("edges must be stored as (i, j) with i < j")
        keys = edges[:, 0] * self.n_items + edges[:, 1]
        if np.unique(keys).size != keys.size:
            raise InvalidParameterError("duplicate edges")
        if not np.all((outcomes == 0) | (outcomes == 1)):
            raise InvalidParameterError("outcomes must be 0 or 1")
        if not 0 < self.p <= 1:
            raise InvalidParameterError(f"edge probability must lie in (0, 1], got {self.p}")
        edges.setflags(write=False)
        outcomes.setflags(write=False)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "outcomes", outcomes)

    @property
    def m(self) -> int:
        return self.edges.shape[0]

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.n_items)

    def incident(self, i: int) -> np.ndarray:
        """Indices of edges touching item ``i``."""
        return np.flatnonzero((self.edges[:, 0] == i) | (self.edges[:, 1] == i))

    def item_outcomes(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Opponents of item ``i`` and whether ``i`` won each comparison."""
        k = self.incident(i)
        e = self.edges[k]
        first = e[:, 0] == i
        opponents = np.where(first, e[:, 1], e[:, 0])
        wins = np.where(first, self.outcomes[k], 1 - self.outcomes[k])
        return opponents, wins

    def with_item_outcomes(self, i: int, wins) -> "ComparisonData":
        """Adjacent dataset where item ``i``'s results (ordered as in :meth:`item_outcomes`) are replaced."""
        k = self.incident(i)
        wins = np.asarray(wins, dtype=np.int64)
        if wins.shape[0] != k.shape[0]:
            raise InvalidParameterError(f"item {i} has {k.shape[0]} comparisons, got {wins.shape[0]} outcomes")
        first = self.edges[k, 0] == i
        out = self.outcomes.copy()
        out[k] = np.where(first, wins, 1 - wins)
        return ComparisonData(self.n_items, self.edges, out, self.p)


def win_probability(theta_i, theta_j):
    """``P(i beats j) = e^theta_i / (e^theta_i + e^theta_j)``."""
    return expit(np.asarray(theta_i) - np.asarray(theta_j))


def sample_comparisons(n: int, p: float, theta_true, rng: SeededRng) -> ComparisonData:
    """Erdos-Renyi comparison graph on ``n`` items with BTL outcomes."""
    if not 0 < p <= 1:
        raise InvalidParameterError(f"edge probability must lie in (0, 1], got {p}")
    theta_true = np.asarray(theta_true, dtype=float)
    if theta_true.shape != (n,):
        raise InvalidParameterError(f"theta_true must have length n={n}")
    if np.max(np.abs(theta_true)) > 1 + 1e-12:
        raise InvalidParameterError("theta_true must satisfy ||theta||_inf <= 1")
    gen = rng.generator
    i, j = np.triu_indices(n, k=1)
    keep = gen.random(i.shape[0]) < p
    i, j = i[keep], j[keep]
    y = (gen.random(i.shape[0]) < win_probability(theta_true[i], theta_true[j])).astype(np.int64)
    return ComparisonData(n, np.column_stack([i, j]), y, p)


def resample_outcomes(data: ComparisonData, theta, rng: SeededRng, edges=None) -> np.ndarray:
    """Fresh BTL outcomes for the given edge indices (all edges by default)."""
    k = np.arange(data.m) if edges is None else np.asarray(edges)
    e = data.edges[k]
    theta = np.asarray(theta, dtype=float)
    return (rng.generator.random(k.shape[0]) < win_probability(theta[e[:, 0]], theta[e[:, 1]])).astype(np.int64)


def _check_theta(data: ComparisonData, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.shape[0] != data.n_items:
        raise InvalidParameterError(f"theta has length {theta.shape[0]}, data has {data.n_items} items")
    return theta


def btl_neg_log_likelihood(data: ComparisonData, theta) -> float:
    """``sum over edges of -y z + log(1 + e^z)`` with ``z = theta_i - theta_j``."""
    theta = _check_theta(data, theta)
    z = theta[data.edges[:, 0]] - theta[data.edges[:, 1]]
    return float(np.sum(np.logaddexp(0.0, z) - data.outcomes * z))


def btl_gradient(data: ComparisonData, theta) -> np.ndarray:
    theta = _check_theta(data, theta)
    z = theta[data.edges[:, 0]] - theta[data.edges[:, 1]]
    r = expit(z) - data.outcomes
    n = data.n_items
    return np.bincount(data.edges[:, 0], r, minlength=n) - np.bincount(data.edges[:, 1], r, minlength=n)


def _project_exact(v: np.ndarray) -> np.ndarray:
    # The projection is clip(v - tau) with tau the root of the non-increasing
    # piecewise-linear g(tau) = sum(clip(v - tau, -1, 1)); locate it between breakpoints.
    bp = np.sort(np.concatenate([v - 1.0, v + 1.0]))
    g = np.clip(v[None, :] - bp[:, None], -1.0, 1.0).sum(axis=1) if v.size <= 256 else None
    if g is None:
        g = np.array([np.clip(v - t, -1.0, 1.0).sum() for t in bp])
    k = int(np.searchsorted(-g, 0.0))
    if k == 0:
        tau = bp[0]
    elif k == bp.size:
        tau = bp[-1]
    else:
        lo, hi = bp[k - 1], bp[k]
        g_lo, g_hi = g[k - 1], g[k]
        tau = lo if g_lo == g_hi else lo + (hi - lo) * g_lo / (g_lo - g_hi)
    return np.clip(v - tau, -1.0, 1.0)


def _project_dykstra(v: np.ndarray, tol: float, max_iter: int) -> np.ndarray:
    p = np.zeros_like(v)
    q = np.zeros_like(v)
    x = v.copy()
    for _ in range(max_iter):
        y = np.clip(x + p, -1.0, 1.0)
        p = x + p - y
        x_new = y + q
        x_new = x_new - x_new.mean()
        q = y + q - x_new
        # x can stall while the corrections still move, so also require the
        # box and hyperplane iterates to agree
        change = max(np.max(np.abs(x_new - x)), np.max(np.abs(x_new - y)))
        x = x_new
        if change <= tol:
            return x
    violation = max(np.max(np.abs(x)) - 1.0, 0.0)
    if violation > 1e-9:
        raise ConvergenceError("Dykstra projection did not converge", violation)
    return x


def project_feasible(v, method: str = "exact", tol: float = 1e-13, max_iter: int = 100_000) -> np.ndarray:
    """Euclidean projection onto ``{||theta||_inf <= 1, sum(theta) = 0}``.

    ``method="exact"`` shifts and clips, ``clip(v - tau, -1, 1)``, with the
    shift found exactly from the sorted breakpoints ``v_i +- 1``.
    ``method="dykstra"`` alternates between clipping to the box and removing
    the mean, carrying Dykstra's correction terms so the limit is the nearest
    feasible point; it is much slower when many coordinates sit on the box.
    """
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        return v.copy()
    x = v - v.mean()
    if np.max(np.abs(x)) <= 1.0:
        return x
    if method == "exact":
        return _project_exact(v)
    if method == "dykstra":
        return _project_dykstra(v, tol, max_iter)
    raise InvalidParameterError(f"unknown projection method {method!r}")


@dataclass
class BtlResult:
    theta: np.ndarray
    residual: float
    iterations: int
    hyperparams: dict

    def to_dict(self) -> dict:
        return {"theta": self.theta.tolist(), "residual": self.residual, "hyperparams": self.hyperparams}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def btl_step_size(data: ComparisonData, gamma: float) -> float:
    """``1 / (gamma + max_degree / 2)``.

    The likelihood Hessian is at most a quarter of the graph Laplacian, whose
    largest eigenvalue is at most twice the maximum degree.
    """
    return 1.0 / (gamma + data.degrees().max() / 2.0)


def fit_dp_btl(
    data: ComparisonData,
    gamma: float,
    sigma_noise: float,
    rng: SeededRng,
    tol: float = 1e-8,
    max_iter: int = 100_000,
    theta0=None,
) -> BtlResult:
    """Objective-perturbed ridge MLE over the centred unit box, by projected gradient descent.

    Stops when the gradient-mapping residual ``||theta - P(theta - t grad)|| / t``
    falls below ``tol``.  Raises :class:`ConvergenceError` after ``max_iter``
    iterations otherwise.
    """
    if not gamma > 0:
        raise InvalidParameterError(f"gamma must be positive, got {gamma}")
    if not sigma_noise >= 0:
        raise InvalidParameterError(f"sigma_noise must be non-negative, got {sigma_noise}")
    n = data.n_items
    w = rng.normal(sigma_noise, (n,)) if sigma_noise > 0 else np.zeros(n)
    step = btl_step_size(data, gamma)
    theta = project_feasible(np.zeros(n) if theta0 is None else theta0)
    residual = math.inf
    for it in range(1, max_iter + 1):
        g = btl_gradient(data, theta) + gamma * theta + w
        nxt = project_feasible(theta - step * g)
        residual = float(np.linalg.norm(theta - nxt) / step)
        theta = nxt
        if residual <= tol:
            return BtlResult(theta, residual, it, {"gamma": gamma, "sigma": sigma_noise, "step": step})
    raise ConvergenceError(f"projected gradient did not reach tolerance {tol} in {max_iter} iterations", residual)


def default_btl_hyperparams(n: int, p: float, budget: PrivacyBudget, c0: float = 1.0) -> tuple[float, float]:
    """``gamma = max(c0 sqrt(n p), 1/eps)`` and ``sigma = 16 sqrt(n) log(1/delta) / eps``."""
    if budget.delta <= 0:
        raise UnsupportedError("the BTL noise recipe needs delta > 0")
    gamma = max(c0 * math.sqrt(n * p), 1.0 / budget.epsilon)
    sigma = 16.0 * math.sqrt(n) * math.log(1.0 / budget.delta) / budget.epsilon
    return gamma, sigma


def certification_thresholds(n: int, budget: PrivacyBudget) -> tuple[float, float]:
    """Minimum ``(gamma, sigma)`` that certify ``(eps, delta)``-DP.

    ``sigma >= sqrt(n) sqrt(8 log(2/delta) + 4 max(eps, 1)) / eps`` and
    ``gamma >= 1/eps``.  The ``max(eps, 1)`` covers both forms of the
    additive constant that appear in the privacy argument.
    """
    if budget.delta <= 0:
        raise UnsupportedError("objective perturbation with Gaussian noise needs delta > 0")
    eps = budget.epsilon
    sigma = math.sqrt(n) * math.sqrt(8 * math.log(2 / budget.delta) + 4 * max(eps, 1.0)) / eps
    return 1.0 / eps, sigma


def is_certified(n: int, gamma: float, sigma: float, budget: PrivacyBudget) -> bool:
    g_min, s_min = certification_thresholds(n, budget)
    return gamma >= g_min and sigma >= s_min


def write_comparisons_csv(path, data: ComparisonData) -> None:
    arr = np.column_stack([data.edges, data.outcomes])
    np.savetxt(path, arr, delimiter=",", header="i,j,y", comments="", fmt="%d")


def read_comparisons_csv(path, n_items: int | None = None, p: float = 1.0) -> ComparisonData:
    with open(path) as fh:
        if fh.readline().strip() != "i,j,y":
            raise InvalidParameterError(f"{path}: expected header i,j,y")
    arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2, dtype=np.int64)
    n = int(arr[:, :2].max()) + 1 if n_items is None else n_items
    return ComparisonData(n, arr[:, :2], arr[:, 2], p)
