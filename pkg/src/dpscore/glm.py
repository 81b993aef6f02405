"""Canonical exponential-family GLMs: families, datasets, likelihood and score.

The model is ``f(y | x) = h(y, sigma) exp((y x'beta - psi(x'beta)) / c(sigma))``.
Two families ship with the package:

* ``LOGISTIC``: ``psi(t) = log(1 + e^t)``, ``c(sigma) = 1``, with
  ``|psi'| <= 1`` and ``0 <= psi'' <= 1/4``.
* ``gaussian_linear(sigma)``: ``psi(t) = t^2 / 2``, ``c(sigma) = sigma^2``.
  Here ``psi'`` is unbounded, so the bounded-derivative assumption used by
  the DP sensitivity analysis does not hold; ``psi_prime_bound`` is ``inf``.
  The family is provided for attack experiments and as a stress case.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import expit

from .errors import ConvergenceError, InvalidParameterError
from .mechanisms import SeededRng

DESIGN_KINDS = ("l2_scaled", "linf")


@dataclass(frozen=True)
class GlmFamily:
    name: str
    psi: Callable[[np.ndarray], np.ndarray]
    psi_prime: Callable[[np.ndarray], np.ndarray]
    psi_double_prime: Callable[[np.ndarray], np.ndarray]
    dispersion: float
    psi_prime_bound: float
    psi_double_prime_bound: float

    @property
    def response_is_binary(self) -> bool:
        return self.name == "logistic"

    @property
    def response_bound(self) -> float:
        """Essential supremum of ``|y|`` (``inf`` when the response is unbounded)."""
        return 1.0 if self.response_is_binary else math.inf


def _logistic_psi(t):
    # logaddexp(0, t) = log1p(exp(t)) without overflow for large |t|
    t = np.asarray(t, dtype=float)
    return np.where(t > 30, t + np.log1p(np.exp(-np.abs(t))), np.log1p(np.exp(np.minimum(t, 30.0))))


def _logistic_psi_dd(t):
    p = expit(t)
    return p * (1.0 - p)


LOGISTIC = GlmFamily(
    name="logistic",
    psi=_logistic_psi,
    psi_prime=expit,
    psi_double_prime=_logistic_psi_dd,
    dispersion=1.0,
    psi_prime_bound=1.0,
    psi_double_prime_bound=0.25,
)


def gaussian_linear(sigma: float = 1.0) -> GlmFamily:
    """Gaussian linear regression with noise standard deviation ``sigma``."""
    if not sigma > 0:
        raise InvalidParameterError(f"sigma must be positive, got {sigma}")
    return GlmFamily(
        name="gaussian",
        psi=lambda t: 0.5 * np.asarray(t, dtype=float) ** 2,
        psi_prime=lambda t: np.asarray(t, dtype=float) * 1.0,
        psi_double_prime=lambda t: np.ones_like(np.asarray(t, dtype=float)),
        dispersion=float(sigma) ** 2,
        psi_prime_bound=math.inf,
        psi_double_prime_bound=1.0,
    )


def family_by_name(name: str, sigma: float = 1.0) -> GlmFamily:
    if name == "logistic":
        return LOGISTIC
    if name in ("gaussian", "linear"):
        return gaussian_linear(sigma)
    raise InvalidParameterError(f"unknown GLM family {name!r}")


@dataclass(frozen=True)
class GlmDataset:
    """Covariates ``X`` (n x d), responses ``y`` and the declared design bound.

    ``design_bound_kind`` is ``"l2_scaled"`` for ``||x||_2 <= sigma_x sqrt(d)``
    or ``"linf"`` for ``||x||_inf <= sigma_x``.  The bound is checked on
    construction.
    """

    X: np.ndarray
    y: np.ndarray
    design_bound_kind: str = "l2_scaled"
    sigma_x: float = 1.0

    def __post_init__(self):
        X = np.array(self.X, dtype=float, ndmin=2)
        y = np.array(self.y, dtype=float).reshape(-1)
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise InvalidParameterError(f"need n >= 1 and d >= 1, got shape {X.shape}")
        if y.shape[0] != X.shape[0]:
            raise InvalidParameterError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
        if self.design_bound_kind not in DESIGN_KINDS:
            raise InvalidParameterError(f"design_bound_kind must be one of {DESIGN_KINDS}")
        if not self.sigma_x > 0:
            raise InvalidParameterError(f"sigma_x must be positive, got {self.sigma_x}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise InvalidParameterError("X and y must be finite")
        bound = design_bound(self.design_bound_kind, self.sigma_x, X.shape[1])
        norms = row_norms(X, self.design_bound_kind)
        if norms.max() > bound * (1 + 1e-12):
            raise InvalidParameterError(
                f"a covariate row violates the {self.design_bound_kind} bound {bound:g} (max norm {norms.max():g})"
            )
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "sigma_x", float(self.sigma_x))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def replace_row(self, i: int, x, y) -> "GlmDataset":
        """Adjacent dataset with row ``i`` swapped for ``(x, y)``."""
        X = self.X.copy()
        Y = self.y.copy()
        X[i] = x
        Y[i] = y
        return GlmDataset(X, Y, self.design_bound_kind, self.sigma_x)


def design_bound(kind: str, sigma_x: float, d: int) -> float:
    return sigma_x * math.sqrt(d) if kind == "l2_scaled" else sigma_x


def row_norms(X: np.ndarray, kind: str) -> np.ndarray:
    return np.linalg.norm(X, axis=1) if kind == "l2_scaled" else np.abs(X).max(axis=1)


def design_second_moment(kind: str, sigma_x: float) -> float:
    """Diagonal of ``E[x x']`` for the built-in designs.

    Uniform on the sphere of radius ``sigma_x sqrt(d)`` gives ``sigma_x^2 I``;
    i.i.d. uniform on ``[-sigma_x, sigma_x]`` gives ``sigma_x^2 / 3 I``.
    """
    if kind == "l2_scaled":
        return sigma_x**2
    if kind == "linf":
        return sigma_x**2 / 3.0
    raise InvalidParameterError(f"unknown design kind {kind!r}")


def _check_beta(data: GlmDataset, beta) -> np.ndarray:
    beta = np.asarray(beta, dtype=float).reshape(-1)
    if beta.shape[0] != data.d:
        raise InvalidParameterError(f"beta has length {beta.shape[0]}, data has d={data.d}")
    return beta


def neg_log_likelihood(data: GlmDataset, family: GlmFamily, beta) -> float:
    """``(1/n) sum_i psi(x_i'beta) - y_i x_i'beta``."""
    beta = _check_beta(data, beta)
    eta = data.X @ beta
    return float(np.mean(family.psi(eta) - data.y * eta))


def glm_gradient(data: GlmDataset, family: GlmFamily, beta, R: float = math.inf) -> np.ndarray:
    """``(1/n) sum_i (psi'(x_i'beta) - clip(y_i, -R, R)) x_i``.

    With ``R = inf`` this is the exact gradient of :func:`neg_log_likelihood`.
    """
    beta = _check_beta(data, beta)
    if not R > 0:
        raise InvalidParameterError(f"truncation R must be positive, got {R}")
    y = data.y if math.isinf(R) else np.clip(data.y, -R, R)
    resid = family.psi_prime(data.X @ beta) - y
    return data.X.T @ resid / data.n


def glm_score(family: GlmFamily, x, y, beta) -> np.ndarray:
    """Score ``(y - psi'(x'beta)) x / c(sigma)`` of one observation.

    Also accepts a stack of rows ``x`` (m x d) with ``y`` of length m and
    returns the m x d matrix of scores.
    """
    x = np.asarray(x, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if x.shape[-1] != beta.shape[-1]:
        raise InvalidParameterError(f"x has {x.shape[-1]} columns, beta has length {beta.shape[-1]}")
    resid = (np.asarray(y, dtype=float) - family.psi_prime(x @ beta)) / family.dispersion
    return resid[..., None] * x


def sample_design(n: int, d: int, kind: str, sigma_x: float, gen: np.random.Generator) -> np.ndarray:
    if kind == "l2_scaled":
        Z = gen.standard_normal((n, d))
        norms = np.linalg.norm(Z, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        X = Z / norms * (sigma_x * math.sqrt(d))
        # rounding can push a row a few ulps past the radius
        over = np.linalg.norm(X, axis=1) > sigma_x * math.sqrt(d)
        X[over] *= 1 - 4 * np.finfo(float).eps
        return X
    if kind == "linf":
        return gen.uniform(-sigma_x, sigma_x, size=(n, d))
    raise InvalidParameterError(f"unknown design kind {kind!r}")


def sample_response(X: np.ndarray, beta, family: GlmFamily, gen: np.random.Generator) -> np.ndarray:
    eta = X @ np.asarray(beta, dtype=float)
    if family.name == "logistic":
        return (gen.random(eta.shape) < expit(eta)).astype(float)
    if family.name == "gaussian":
        return eta + math.sqrt(family.dispersion) * gen.standard_normal(eta.shape)
    raise InvalidParameterError(f"no response sampler for family {family.name!r}")


def generate_glm(
    n: int,
    d: int,
    beta_true,
    family: GlmFamily,
    rng: SeededRng,
    design_bound_kind: str = "l2_scaled",
    sigma_x: float = 1.0,
) -> GlmDataset:
    """Draw ``n`` observations from the GLM with coefficient ``beta_true``.

    Covariates are uniform on the sphere of radius ``sigma_x sqrt(d)``
    (``"l2_scaled"``) or i.i.d. uniform on ``[-sigma_x, sigma_x]`` (``"linf"``).
    """
    beta_true = np.asarray(beta_true, dtype=float).reshape(-1)
    if beta_true.shape[0] != d:
        raise InvalidParameterError(f"beta_true has length {beta_true.shape[0]}, expected d={d}")
    if n < 1 or d < 1:
        raise InvalidParameterError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
    gen = rng.generator
    X = sample_design(n, d, design_bound_kind, sigma_x, gen)
    y = sample_response(X, beta_true, family, gen)
    return GlmDataset(X, y, design_bound_kind, sigma_x)


def fit_glm_mle(
    data: GlmDataset, family: GlmFamily, beta0=None, tol: float = 1e-12, max_iter: int = 200
) -> np.ndarray:
    """Non-private maximum-likelihood fit by damped Newton steps."""
    beta = np.zeros(data.d) if beta0 is None else np.array(beta0, dtype=float)
    loss = neg_log_likelihood(data, family, beta)
    for _ in range(max_iter):
        g = glm_gradient(data, family, beta)
        gnorm = np.linalg.norm(g)
        if gnorm <= tol:
            return beta
        w = family.psi_double_prime(data.X @ beta)
        H = (data.X.T * w) @ data.X / data.n
        step = np.linalg.solve(H + 1e-14 * np.eye(data.d), g)
        t = 1.0
        while t > 1e-10:
            cand = beta - t * step
            new_loss = neg_log_likelihood(data, family, cand)
            if new_loss <= loss + 1e-4 * t * (g @ -step) or new_loss <= loss:
                break
            t *= 0.5
        beta, loss = cand, new_loss
    gnorm = np.linalg.norm(glm_gradient(data, family, beta))
    if gnorm <= max(tol, 1e-9):
        return beta
    raise ConvergenceError("Newton iterations for the GLM MLE did not converge", gnorm)


def write_glm_csv(path, data: GlmDataset) -> None:
    header = ",".join(["y"] + [f"x_{j + 1}" for j in range(data.d)])
    np.savetxt(path, np.column_stack([data.y, data.X]), delimiter=",", header=header, comments="", fmt="%.17g")


def read_glm_csv(path, design_bound_kind: str = "l2_scaled", sigma_x: float = 1.0) -> GlmDataset:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    if not header or header[0] != "y" or any(h != f"x_{j + 1}" for j, h in enumerate(header[1:])):
        raise InvalidParameterError(f"{path}: expected columns y,x_1..x_d")
    arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return GlmDataset(arr[:, 1:], arr[:, 0], design_bound_kind, sigma_x)
