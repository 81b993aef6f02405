"""Noise-addition primitives, privacy budgets and a reproducible RNG handle.

Every randomized routine in the package draws its noise through a
:class:`SeededRng`.  Laplace variates are produced by inverting the CDF of
uniform draws and Gaussian variates by the Box-Muller transform, so a given
``(seed, stream)`` replays bit-identically on any platform that ships the same
NumPy bit generator.  :class:`ZeroNoiseRng` returns exact zeros from the noise
methods and turns every mechanism into the identity map, which is how the
test-suite recovers the non-private algorithms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

import numpy as np

from .errors import InvalidParameterError, UnsupportedError

_TWO53 = float(2**53)


@dataclass(frozen=True)
class PrivacyBudget:
    """An ``(epsilon, delta)`` pair.

    Budgets obtained from :func:`split_budget` remember their exact rational
    share, so composing the pieces with :func:`compose` gives back the parent
    budget without floating-point drift.
    """

    epsilon: float
    delta: float = 0.0
    _eps_exact: Fraction | None = field(default=None, repr=False, compare=False)
    _delta_exact: Fraction | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        eps, delta = float(self.epsilon), float(self.delta)
        if not (math.isfinite(eps) and eps > 0):
            raise InvalidParameterError(f"epsilon must be positive and finite, got {self.epsilon}")
        if not (0.0 <= delta < 1.0):
            raise InvalidParameterError(f"delta must lie in [0, 1), got {self.delta}")
        object.__setattr__(self, "epsilon", eps)
        object.__setattr__(self, "delta", delta)
        if self._eps_exact is None:
            object.__setattr__(self, "_eps_exact", Fraction(eps))
        if self._delta_exact is None:
            object.__setattr__(self, "_delta_exact", Fraction(delta))

    @property
    def is_pure(self) -> bool:
        return self.delta == 0.0

    @classmethod
    def _from_exact(cls, eps: Fraction, delta: Fraction) -> "PrivacyBudget":
        return cls(float(eps), float(delta), eps, delta)

    def to_dict(self) -> dict:
        return {"epsilon": self.epsilon, "delta": self.delta}


def split_budget(budget: PrivacyBudget, T: int) -> PrivacyBudget:
    """Per-step budget ``(epsilon/T, delta/T)`` for a ``T``-fold simple composition."""
    if isinstance(T, bool) or int(T) != T or T < 1:
        raise InvalidParameterError(f"T must be a positive integer, got {T}")
    T = int(T)
    if T == 1:
        return budget
    return PrivacyBudget._from_exact(budget._eps_exact / T, budget._delta_exact / T)


def compose(budgets: Iterable[PrivacyBudget]) -> PrivacyBudget:
    """Simple (basic) composition: epsilons and deltas add."""
    eps = Fraction(0)
    delta = Fraction(0)
    count = 0
    for b in budgets:
        eps += b._eps_exact
        delta += b._delta_exact
        count += 1
    if count == 0:
        raise InvalidParameterError("cannot compose an empty sequence of budgets")
    return PrivacyBudget._from_exact(eps, delta)


class SeededRng:
    """Reproducible random source identified by ``(seed, stream)``.

    ``child(k)`` derives an independent stream, which is how replicates and
    worker tasks get their own generators without sharing state.

    Parameters
    ----------
    seed : int
        Non-negative 64-bit seed.
    stream : int or tuple of int
        Stream identifier; distinct streams under one seed are independent.
    """

    is_zero_noise = False

    def __init__(self, seed: int, stream: int | tuple[int, ...] = 0):
        if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)) or seed < 0 or seed >= 2**64:
            raise InvalidParameterError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self.stream = tuple(stream) if isinstance(stream, tuple) else (int(stream),)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.stream)
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def __repr__(self):
        return f"{type(self).__name__}(seed={self.seed}, stream={self.stream})"

    def child(self, k: int) -> "SeededRng":
        return type(self)(self.seed, self.stream + (int(k),))

    def open_uniform(self, size=None) -> np.ndarray:
        """Uniform draws on the open interval (0, 1)."""
        k = self.generator.integers(0, 2**53, size=size, dtype=np.int64)
        return (k + 0.5) / _TWO53

    def laplace(self, scale: float, size=None) -> np.ndarray:
        """Laplace(0, scale) by inverse CDF."""
        u = self.open_uniform(size)
        return np.where(u < 0.5, scale * np.log(2.0 * u), -scale * np.log(2.0 * (1.0 - u)))

    def normal(self, std: float, size=None) -> np.ndarray:
        """N(0, std^2) by the Box-Muller transform."""
        count = 1 if size is None else int(np.prod(size))
        half = (count + 1) // 2
        u1 = self.open_uniform(half)
        u2 = self.open_uniform(half)
        radius = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([radius * np.cos(2 * np.pi * u2), radius * np.sin(2 * np.pi * u2)])[:count]
        z = std * z
        return float(z[0]) if size is None else z.reshape(size)


class ZeroNoiseRng(SeededRng):
    """RNG stub whose noise methods return exact zeros.

    Data-generation draws through ``generator`` stay random; only the privacy
    noise vanishes.
    """

    is_zero_noise = True

    def laplace(self, scale, size=None):
        return 0.0 if size is None else np.zeros(size)

    def normal(self, std, size=None):
        return 0.0 if size is None else np.zeros(size)


def laplace_scale(l1_sensitivity: float, eps: float) -> float:
    if not l1_sensitivity > 0:
        raise InvalidParameterError(f"l1_sensitivity must be positive, got {l1_sensitivity}")
    if not eps > 0:
        raise InvalidParameterError(f"eps must be positive, got {eps}")
    return l1_sensitivity / eps


def laplace_perturb(v, l1_sensitivity: float, eps: float, rng: SeededRng) -> np.ndarray:
    """Laplace mechanism: ``v + w`` with i.i.d. Laplace(l1_sensitivity/eps) coordinates."""
    v = np.asarray(v, dtype=float)
    scale = laplace_scale(l1_sensitivity, eps)
    return v + rng.laplace(scale, v.shape)


def gaussian_sigma(l2_sensitivity: float, budget: PrivacyBudget) -> float:
    """Noise standard deviation ``sqrt(2 B^2 log(2/delta)) / epsilon`` of the Gaussian mechanism."""
    if not l2_sensitivity > 0:
        raise InvalidParameterError(f"l2_sensitivity must be positive, got {l2_sensitivity}")
    if budget.delta == 0.0:
        raise UnsupportedError("the Gaussian mechanism requires delta > 0")
    return math.sqrt(2.0 * l2_sensitivity**2 * math.log(2.0 / budget.delta)) / budget.epsilon


def gaussian_perturb(v, l2_sensitivity: float, budget: PrivacyBudget, rng: SeededRng) -> np.ndarray:
    """Gaussian mechanism: ``v + w`` with ``w ~ N(0, sigma^2 I)``, sigma from :func:`gaussian_sigma`."""
    v = np.asarray(v, dtype=float)
    sigma = gaussian_sigma(l2_sensitivity, budget)
    return v + rng.normal(sigma, v.shape)
