"""Private Fourier-series regression on [0, 1] with K-norm noise.

The estimator truncates responses at ``T``, averages ``Y_i phi(X_i)`` over the
sample and perturbs the result with noise whose density is proportional to
``exp(-||t||_S / scale)``, where ``||.||_S`` is the gauge of the convex hull
``S = conv{+-phi(x) : x in [0, 1]}``.  Replacing one observation moves the
average by at most ``2T/n`` in that norm, so ``scale = 2T / (n eps)`` gives
``(eps, 0)``-DP.

``S`` is approximated by the hull over a uniform grid.  Norms are linear
programs; uniform points in ``S`` come from hit-and-run, with chord endpoints
also found by linear programming.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import simpson
from scipy.optimize import linprog

from .errors import InfeasibleError, InvalidParameterError, NumericalFailure
from .mechanisms import PrivacyBudget, SeededRng


def fourier_eval(j: int, x) -> np.ndarray:
    """Trigonometric basis on [0, 1]: ``phi_1 = 1``, ``phi_2k = sqrt2 cos(2 pi k x)``,
    ``phi_2k+1 = sqrt2 sin(2 pi k x)``."""
    if isinstance(j, bool) or int(j) != j or j < 1:
        raise InvalidParameterError(f"basis index must be a positive integer, got {j}")
    x = np.asarray(x, dtype=float)
    if j == 1:
        return np.ones_like(x)
    k = j // 2
    if j % 2 == 0:
        return math.sqrt(2) * np.cos(2 * np.pi * k * x)
    return math.sqrt(2) * np.sin(2 * np.pi * k * x)


def fourier_basis(K: int, x) -> np.ndarray:
    """``len(x) x K`` matrix whose column ``j-1`` is ``phi_j(x)``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return np.column_stack([fourier_eval(j, x) for j in range(1, K + 1)])


def series(theta) -> Callable[[np.ndarray], np.ndarray]:
    """The function ``x -> sum_j theta_j phi_j(x)``."""
    theta = np.asarray(theta, dtype=float)

    def f(x):
        x = np.asarray(x, dtype=float)
        return (fourier_basis(theta.shape[0], x.reshape(-1)) @ theta).reshape(x.shape)

    return f


@dataclass(frozen=True)
class SobolevSpec:
    alpha: int
    C: float

    def __post_init__(self):
        if isinstance(self.alpha, bool) or int(self.alpha) != self.alpha or self.alpha < 1:
            raise InvalidParameterError(f"alpha must be a positive integer, got {self.alpha}")
        if not self.C > 0:
            raise InvalidParameterError(f"C must be positive, got {self.C}")

    def weights(self, K: int) -> np.ndarray:
        """``tau_j = j^alpha`` for even ``j`` and ``(j-1)^alpha`` for odd ``j``."""
        j = np.arange(1, K + 1)
        return np.where(j % 2 == 0, j, j - 1).astype(float) ** self.alpha

    @property
    def radius_sq(self) -> float:
        return self.C**2 / math.pi ** (2 * self.alpha)

    def ellipsoid_value(self, theta) -> float:
        theta = np.asarray(theta, dtype=float)
        return float(np.sum((self.weights(theta.shape[0]) * theta) ** 2))

    def contains(self, theta) -> bool:
        return self.ellipsoid_value(theta) < self.radius_sq

    def prior_bound(self, k: int) -> float:
        """Half-width ``B`` of the uniform prior on ``[-B, B]^k`` that sits inside the ellipsoid.

        ``B^2 = C^2 / (2 pi^{2 alpha}) / int_1^{k+1} t^{2 alpha} dt``.
        """
        a2 = 2 * self.alpha
        integral = ((k + 1) ** (a2 + 1) - 1) / (a2 + 1)
        return math.sqrt(self.radius_sq / 2 / integral)

    def random_member(self, K: int, rng: SeededRng, fill: float = 0.9) -> np.ndarray:
        """Coefficients of a random function inside the ellipsoid (at ``fill`` of the radius)."""
        gen = rng.generator
        z = gen.standard_normal(K)
        tau = self.weights(K)
        tau[0] = 1.0
        theta = z / tau
        value = self.ellipsoid_value(theta)
        if value > 0:
            theta = theta * math.sqrt(fill * self.radius_sq / value)
        return theta


@dataclass
class FourierCoeffs:
    theta: np.ndarray

    @property
    def K(self) -> int:
        return int(self.theta.shape[0])

    def __call__(self, x):
        return series(self.theta)(x)


def truncated_empirical_coeffs(X, Y, K: int, T: float) -> FourierCoeffs:
    """``(1/n) sum_i Y_i 1(|Y_i| <= T) phi(X_i)``."""
    X = np.asarray(X, dtype=float).reshape(-1)
    Y = np.asarray(Y, dtype=float).reshape(-1)
    if X.shape != Y.shape:
        raise InvalidParameterError("X and Y differ in length")
    if K < 1:
        raise InvalidParameterError(f"K must be at least 1, got {K}")
    if not T > 0:
        raise InvalidParameterError(f"T must be positive, got {T}")
    Yt = np.where(np.abs(Y) <= T, Y, 0.0)
    return FourierCoeffs(fourier_basis(K, X).T @ Yt / X.shape[0])


class OrbitopeGrid:
    """Grid approximation of ``conv{+-phi(x) : x in [0, 1]}`` in ``R^K``.

    Uses ``G`` equally spaced points ``x_g = g / G`` (so 0 is included and the
    periodic endpoint 1 is not duplicated).  ``vertices`` is ``K x G``; the
    negated columns are implied.
    """

    def __init__(self, K: int, G: int | None = None):
        if K < 1:
            raise InvalidParameterError(f"K must be at least 1, got {K}")
        self.K = int(K)
        self.G = int(max(64, 16 * K) if G is None else G)
        if self.G < 1:
            raise InvalidParameterError(f"grid size must be positive, got {self.G}")
        self.points = np.arange(self.G) / self.G
        self.vertices = fourier_basis(self.K, self.points).T.copy()
        self._A_eq = np.hstack([self.vertices, -self.vertices])

    def refine(self, factor: int = 2) -> "OrbitopeGrid":
        return OrbitopeGrid(self.K, self.G * factor)


def _check_vec(t, grid):
    t = np.asarray(t, dtype=float).reshape(-1)
    if t.shape[0] != grid.K:
        raise InvalidParameterError(f"vector has length {t.shape[0]}, grid has K={grid.K}")
    return t


def orbitope_norm(t, grid: OrbitopeGrid) -> float:
    """Gauge of the gridded orbitope, as the LP ``min sum(l+ + l-)`` s.t. ``V (l+ - l-) = t``."""
    t = _check_vec(t, grid)
    if not np.any(t):
        return 0.0
    res = linprog(np.ones(2 * grid.G), A_eq=grid._A_eq, b_eq=t, bounds=(0, None), method="highs")
    if res.status == 2:
        raise InfeasibleError(f"grid of {grid.G} points does not span R^{grid.K}; use a larger grid")
    if res.status != 0:
        raise NumericalFailure(f"orbitope norm LP failed: {res.message}")
    return float(res.fun)


def norm_grid_convergence(t, grid: OrbitopeGrid) -> float:
    """Relative change of the norm of ``t`` when the grid is doubled (under 1% is considered converged)."""
    a = orbitope_norm(t, grid)
    b = orbitope_norm(t, grid.refine(2))
    return abs(a - b) / max(a, 1e-300)


def _chord_length(x, u, grid: OrbitopeGrid) -> float:
    """Largest ``s >= 0`` with ``x + s u`` inside the gridded orbitope."""
    G = grid.G
    c = np.zeros(2 * G + 1)
    c[-1] = -1.0
    A_eq = np.hstack([grid._A_eq, -u[:, None]])
    A_ub = np.ones((1, 2 * G + 1))
    A_ub[0, -1] = 0.0
    res = linprog(c, A_ub=A_ub, b_ub=[1.0], A_eq=A_eq, b_eq=x, bounds=(0, None), method="highs")
    if res.status == 2:
        raise InfeasibleError("hit-and-run point left the orbitope; the grid may be degenerate")
    if res.status != 0:
        raise NumericalFailure(f"chord LP failed: {res.message}")
    return float(-res.fun)


@dataclass(frozen=True)
class McmcConfig:
    burn_in: int = 1000
    thin: int = 10

    def __post_init__(self):
        if self.burn_in < 0 or self.thin < 1:
            raise InvalidParameterError(f"need burn_in >= 0 and thin >= 1, got {self.burn_in}, {self.thin}")


def _uniform_exact(grid: OrbitopeGrid, gen: np.random.Generator, m: int) -> np.ndarray | None:
    # K = 1 hull is [-1, 1]; K = 2 hull is the box [-1, 1] x [-max|v2|, max|v2|]
    if grid.K == 1:
        return gen.uniform(-1.0, 1.0, size=(m, 1))
    if grid.K == 2:
        h = np.max(np.abs(grid.vertices[1]))
        return np.column_stack([gen.uniform(-1.0, 1.0, m), gen.uniform(-h, h, m)])
    return None


def sample_uniform_orbitope(grid: OrbitopeGrid, rng: SeededRng, mcmc: McmcConfig = McmcConfig(), size: int = 1) -> np.ndarray:
    """``size x K`` points approximately uniform in the gridded orbitope.

    Exact for ``K <= 2``; hit-and-run from the origin otherwise, keeping every
    ``thin``-th state after ``burn_in`` steps.
    """
    gen = rng.generator
    exact = _uniform_exact(grid, gen, size)
    if exact is not None:
        return exact
    K = grid.K
    x = np.zeros(K)
    out = np.empty((size, K))
    total = mcmc.burn_in + mcmc.thin * size
    kept = 0
    for step in range(1, total + 1):
        u = gen.standard_normal(K)
        u /= np.linalg.norm(u)
        hi = max(_chord_length(x, u, grid), 0.0)
        lo = max(_chord_length(x, -u, grid), 0.0)
        if hi + lo <= 1e-12:
            # a full-dimensional body has zero-length chords with probability zero
            raise InfeasibleError(f"orbitope of a {grid.G}-point grid is flat in R^{K}; use a larger grid")
        x = x + gen.uniform(-lo, hi) * u
        if step > mcmc.burn_in and (step - mcmc.burn_in) % mcmc.thin == 0:
            out[kept] = x
            kept += 1
    return out


def sample_knorm_noise(
    scale: float, grid: OrbitopeGrid, rng: SeededRng, mcmc: McmcConfig = McmcConfig(), size: int | None = None
) -> np.ndarray:
    """Draw from the density proportional to ``exp(-||t||_S / scale)``.

    Uses the polar decomposition ``t = R U`` with ``R ~ Gamma(K + 1, scale)``
    and ``U`` uniform in ``S``.  A zero-noise RNG returns zeros.
    """
    if not scale > 0:
        raise InvalidParameterError(f"scale must be positive, got {scale}")
    m = 1 if size is None else int(size)
    if rng.is_zero_noise:
        out = np.zeros((m, grid.K))
    else:
        U = sample_uniform_orbitope(grid, rng, mcmc, m)
        R = rng.generator.gamma(grid.K + 1, scale, size=m)
        out = R[:, None] * U
    return out[0] if size is None else out


def knorm_scale(T: float, n: int, eps: float) -> float:
    """Noise scale ``2T / (n eps)``: the sensitivity ``2T/n`` in the orbitope norm divided by ``eps``."""
    return 2.0 * T / (n * eps)


def default_K(n: int, eps: float, alpha: int, c1: float = 1.0) -> int:
    """``round(c1 * min(n^{1/(2 alpha + 1)}, (n eps)^{1/(alpha + 1)}))``, at least 1."""
    return max(1, int(round(c1 * min(n ** (1 / (2 * alpha + 1)), (n * eps) ** (1 / (alpha + 1))))))


def mad_sigma(Y) -> float:
    """Median-absolute-deviation estimate of the noise level, scaled for Gaussian consistency."""
    Y = np.asarray(Y, dtype=float)
    return 1.4826 * float(np.median(np.abs(Y - np.median(Y))))


def default_truncation(n: int, sigma: float) -> float:
    """``T = 4 sigma sqrt(log n)``."""
    return 4.0 * sigma * math.sqrt(math.log(n))


@dataclass
class NonparamConfig:
    K: int | None = None
    T: float | None = None
    sigma: float | None = None
    grid_size: int | None = None
    c1: float = 1.0
    mcmc: McmcConfig = field(default_factory=McmcConfig)


@dataclass
class NonparamFit:
    coeffs: FourierCoeffs
    nonprivate: FourierCoeffs
    K: int
    T: float
    scale: float

    def __call__(self, x):
        return self.coeffs(x)

    def to_dict(self) -> dict:
        return {"theta": self.coeffs.theta.tolist(), "K": self.K, "T": self.T, "scale": self.scale}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def evaluation_table(self, points: int = 512) -> np.ndarray:
        x = np.arange(points) / (points - 1)
        return np.column_stack([x, self(x)])


def fit_dp_nonparam(X, Y, spec: SobolevSpec, budget: PrivacyBudget, rng: SeededRng, config: NonparamConfig | None = None) -> NonparamFit:
    """Truncated empirical Fourier coefficients plus K-norm noise; pure ``eps``-DP.

    ``budget.delta`` is ignored.  Unset fields of ``config`` take the defaults
    :func:`default_K`, :func:`default_truncation` (with ``sigma`` from
    :func:`mad_sigma` when not supplied) and a grid of ``max(64, 16K)`` points.
    """
    config = NonparamConfig() if config is None else config
    X = np.asarray(X, dtype=float).reshape(-1)
    n = X.shape[0]
    if n < 2:
        raise InvalidParameterError("need at least two observations")
    if np.any((X < 0) | (X > 1)):
        raise InvalidParameterError("covariates must lie in [0, 1]")
    eps = budget.epsilon
    K = config.K if config.K is not None else default_K(n, eps, spec.alpha, config.c1)
    if K < 1:
        raise InvalidParameterError(f"K must be at least 1, got {K}")
    if config.T is not None:
        T = config.T
    else:
        sigma = config.sigma if config.sigma is not None else mad_sigma(Y)
        T = default_truncation(n, sigma)
    base = truncated_empirical_coeffs(X, Y, K, T)
    scale = knorm_scale(T, n, eps)
    grid = OrbitopeGrid(K, config.grid_size)
    w = sample_knorm_noise(scale, grid, rng, config.mcmc)
    return NonparamFit(FourierCoeffs(base.theta + w), base, K, T, scale)


def mise(estimate: Callable, f_true: Callable, intervals: int = 10_000) -> float:
    """``int_0^1 (estimate - f_true)^2`` by composite Simpson on ``intervals`` subintervals."""
    x = np.linspace(0.0, 1.0, intervals + 1)
    diff = np.asarray(estimate(x), dtype=float) - np.asarray(f_true(x), dtype=float)
    return float(simpson(diff**2, x=x))


def write_evaluation_csv(path, fit: NonparamFit, points: int = 512) -> None:
    np.savetxt(path, fit.evaluation_table(points), delimiter=",", header="x,f", comments="", fmt="%.17g")
