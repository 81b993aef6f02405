"""Differentially private estimators for GLMs, sparse GLMs, Bradley-Terry-Luce
rankings and Fourier-series regression, with score-attack and privacy-audit tools."""

from .errors import ConvergenceError, InfeasibleError, InvalidParameterError, NumericalFailure, UnsupportedError
from .mechanisms import (
    PrivacyBudget,
    SeededRng,
    ZeroNoiseRng,
    compose,
    gaussian_perturb,
    gaussian_sigma,
    laplace_perturb,
    laplace_scale,
    split_budget,
)

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError",
    "InfeasibleError",
    "InvalidParameterError",
    "NumericalFailure",
    "PrivacyBudget",
    "SeededRng",
    "UnsupportedError",
    "ZeroNoiseRng",
    "compose",
    "gaussian_perturb",
    "gaussian_sigma",
    "laplace_perturb",
    "laplace_scale",
    "split_budget",
]
