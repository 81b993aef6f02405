"""Differentially private GLM estimation by noisy gradient descent.

Each of the ``T`` iterations takes a gradient step on the loss with responses
clipped to ``[-R, R]`` and adds spherical Gaussian noise calibrated to an
``(epsilon/T, delta/T)`` share of the budget.  Replacing one observation moves
the noiseless update by at most ``(eta/n) * B * sqrt(d)`` in L2 whenever
``B >= 4 (R + c1) sigma_x``, which is the condition reported as
``privacy_certified``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError, UnsupportedError
from .glm import GlmDataset, GlmFamily, design_second_moment, glm_gradient
from .mechanisms import PrivacyBudget, SeededRng, gaussian_sigma, split_budget


@dataclass
class DpGlmConfig:
    step_size: float
    iterations: int
    truncation: float
    noise_scale: float
    budget: PrivacyBudget
    beta0: np.ndarray | None = None

    def __post_init__(self):
        if not self.step_size > 0:
            raise InvalidParameterError(f"step_size must be positive, got {self.step_size}")
        if isinstance(self.iterations, bool) or int(self.iterations) != self.iterations or self.iterations < 1:
            raise InvalidParameterError(f"iterations must be a positive integer, got {self.iterations}")
        self.iterations = int(self.iterations)
        if not self.truncation > 0:
            raise InvalidParameterError(f"truncation must be positive, got {self.truncation}")
        if not self.noise_scale > 0:
            raise InvalidParameterError(f"noise_scale must be positive, got {self.noise_scale}")
        if self.beta0 is not None:
            self.beta0 = np.asarray(self.beta0, dtype=float).reshape(-1)

    def noise_std(self, n: int, d: int) -> float:
        """Per-coordinate standard deviation of the noise added at each iteration.

        Squared, this is ``eta^2 * 2 B^2 d log(2T/delta) / (n^2 (epsilon/T)^2)``.
        """
        per_step = split_budget(self.budget, self.iterations)
        sensitivity = self.step_size * self.noise_scale * math.sqrt(d) / n
        return gaussian_sigma(sensitivity, per_step)

    def to_dict(self) -> dict:
        return {
            "step_size": self.step_size,
            "iterations": self.iterations,
            "truncation": self.truncation,
            "noise_scale": self.noise_scale,
            "budget": self.budget.to_dict(),
            "beta0": None if self.beta0 is None else self.beta0.tolist(),
        }


@dataclass
class DpGlmTrace:
    """Per-iteration diagnostics.

    ``grad_norms[t]`` is the L2 norm of the clipped-response gradient at
    iterate ``t`` and ``beta_norms[t]`` the norm of that iterate.  Only the
    final two iterates are kept in full.
    """

    grad_norms: list = field(default_factory=list)
    beta_norms: list = field(default_factory=list)
    last_iterates: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "grad_norms": [float(v) for v in self.grad_norms],
            "beta_norms": [float(v) for v in self.beta_norms],
            "last_iterates": [np.asarray(b).tolist() for b in self.last_iterates],
        }


@dataclass
class DpGlmResult:
    beta: np.ndarray
    trace: DpGlmTrace
    config: DpGlmConfig
    privacy_certified: bool

    def to_dict(self) -> dict:
        return {
            "beta": self.beta.tolist(),
            "trace": self.trace.to_dict(),
            "config": self.config.to_dict(),
            "privacy_certified": self.privacy_certified,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def certified_noise_scale(truncation: float, family: GlmFamily, sigma_x: float) -> float:
    """Smallest noise scale ``B = 4 (R + c1) sigma_x`` covered by the sensitivity bound."""
    return 4.0 * (truncation + family.psi_prime_bound) * sigma_x


def update_sensitivity(cfg: DpGlmConfig, family: GlmFamily, n: int, d: int, sigma_x: float) -> float:
    """L2 bound on how much one replaced observation moves a noiseless update."""
    return cfg.step_size / n * certified_noise_scale(cfg.truncation, family, sigma_x) * math.sqrt(d)


def fit_dp_glm(data: GlmDataset, family: GlmFamily, cfg: DpGlmConfig, rng: SeededRng) -> DpGlmResult:
    """Run exactly ``cfg.iterations`` steps of noisy truncated gradient descent.

    A noise scale below the certified bound does not raise; the result
    carries ``privacy_certified=False`` and a ``RuntimeWarning`` is issued.
    """
    # an linf bound sigma_x implies the l2 bound sigma_x sqrt(d), so both designs are covered
    n, d = data.n, data.d
    beta = np.zeros(d) if cfg.beta0 is None else cfg.beta0.copy()
    if beta.shape[0] != d:
        raise InvalidParameterError(f"beta0 has length {beta.shape[0]}, data has d={d}")
    std = cfg.noise_std(n, d)

    certified = cfg.noise_scale >= certified_noise_scale(cfg.truncation, family, data.sigma_x)
    if not certified:
        warnings.warn(
            "noise_scale is below 4 (R + c1) sigma_x; the output is not certified differentially private",
            RuntimeWarning,
            stacklevel=2,
        )

    trace = DpGlmTrace()
    for t in range(cfg.iterations):
        grad = glm_gradient(data, family, beta, cfg.truncation)
        trace.grad_norms.append(np.linalg.norm(grad))
        trace.beta_norms.append(np.linalg.norm(beta))
        beta = beta - cfg.step_size * grad + rng.normal(std, (d,))
        if t >= cfg.iterations - 2:
            trace.last_iterates.append(beta.copy())
    return DpGlmResult(beta, trace, cfg, bool(certified))


@dataclass(frozen=True)
class Curvature:
    """Smoothness ``gamma`` and restricted strong convexity ``alpha`` estimates."""

    gamma: float
    alpha: float


def estimate_curvature(family: GlmFamily, data: GlmDataset | None = None, *, design_kind=None, sigma_x=None) -> Curvature:
    """Curvature constants for the hyperparameter recipe.

    With ``data`` the estimate reads the empirical second moment
    ``X'X/n``: ``gamma = c2 * lambda_max`` and
    ``alpha = max(1e-3, c2 * lambda_min * exp(-1/2))``.  Looking at the data
    this way is not itself private.  Passing ``design_kind`` and ``sigma_x``
    instead uses the known population second moment of the built-in designs,
    which costs no privacy.
    """
    c2 = family.psi_double_prime_bound
    if data is not None:
        eig = np.linalg.eigvalsh(data.X.T @ data.X / data.n)
        lo, hi = float(eig[0]), float(eig[-1])
    elif design_kind is not None and sigma_x is not None:
        lo = hi = design_second_moment(design_kind, sigma_x)
    else:
        raise InvalidParameterError("pass either data or both design_kind and sigma_x")
    gamma = c2 * hi
    alpha = max(1e-3, c2 * lo * math.exp(-0.5))
    return Curvature(gamma, min(alpha, gamma))


def default_truncation(n: int, family: GlmFamily) -> float:
    """``R = min(ess sup |y|, c1 + sqrt(2 c2 c(sigma) log n))``."""
    if math.isinf(family.psi_prime_bound):
        raise UnsupportedError(f"the truncation recipe needs a bounded psi'; family {family.name!r} has none")
    tail = family.psi_prime_bound + math.sqrt(2 * family.psi_double_prime_bound * family.dispersion * math.log(n))
    return min(family.response_bound, tail)


def default_dp_glm_config(
    n: int,
    d: int,
    family: GlmFamily,
    budget: PrivacyBudget,
    gamma_hat: float,
    alpha_hat: float,
    sigma_x: float = 1.0,
    beta0=None,
) -> DpGlmConfig:
    """Hyperparameters ``eta = 3/(4 gamma)``, ``T = ceil((2 gamma/alpha) log(9n))``,
    the :func:`default_truncation` ``R`` and ``B = 4 (R + c1) sigma_x``."""
    if not (alpha_hat > 0 and gamma_hat >= alpha_hat):
        raise InvalidParameterError(f"need gamma_hat >= alpha_hat > 0, got gamma={gamma_hat}, alpha={alpha_hat}")
    if n < 2:
        raise InvalidParameterError(f"n must be at least 2, got {n}")
    R = default_truncation(n, family)
    T = max(1, math.ceil(2 * gamma_hat / alpha_hat * math.log(9 * n) - 1e-9))
    return DpGlmConfig(
        step_size=3.0 / (4.0 * gamma_hat),
        iterations=T,
        truncation=R,
        noise_scale=certified_noise_scale(R, family, sigma_x),
        budget=budget,
        beta0=np.zeros(d) if beta0 is None else beta0,
    )


def scaling_condition(n: int, d: int, budget: PrivacyBudget, dispersion: float = 1.0) -> bool:
    """Whether ``n >= 10 c(sigma) d sqrt(log(1/delta)) log(n)^2 / epsilon``.

    The sample-size requirement of the accuracy guarantee; callers report a
    failure and continue.
    """
    if budget.delta <= 0:
        return False
    need = 10 * dispersion * d * math.sqrt(math.log(1 / budget.delta)) * math.log(n) ** 2 / budget.epsilon
    return n >= need
