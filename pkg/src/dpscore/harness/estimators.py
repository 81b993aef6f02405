"""Ready-made private estimators for attack experiments, keyed by model kind."""

from __future__ import annotations

import math

import numpy as np

from ..attack import BtlModel, GaussianLocationModel, GlmModel, NonparamModel, SparseGlmModel
from ..btl import default_btl_hyperparams, fit_dp_btl
from ..dp_glm import default_dp_glm_config, estimate_curvature, fit_dp_glm
from ..errors import InvalidParameterError
from ..mechanisms import PrivacyBudget, gaussian_sigma
from ..nonparam import McmcConfig, NonparamConfig, SobolevSpec, fit_dp_nonparam
from ..sparse import default_sparse_glm_config, fit_dp_sparse_glm


def dp_glm_estimator(model: GlmModel, budget: PrivacyBudget, iterations: int | None = None):
    curv = estimate_curvature(model.family, design_kind=model.design_bound_kind, sigma_x=model.sigma_x)

    def est(data, rng):
        cfg = default_dp_glm_config(data.n, data.d, model.family, budget, curv.gamma, curv.alpha, model.sigma_x)
        if iterations is not None:
            cfg.iterations = iterations
        return fit_dp_glm(data, model.family, cfg, rng).beta

    return est


def dp_sparse_estimator(model: SparseGlmModel, budget: PrivacyBudget, s_star: int, s: int | None = None, T: int | None = None):
    curv = estimate_curvature(model.family, design_kind="linf", sigma_x=model.sigma_x)

    def est(data, rng):
        r = default_sparse_glm_config(data.n, data.d, s_star, model.family, curv.gamma, curv.alpha, model.sigma_x)
        fit = fit_dp_sparse_glm(data, model.family, s or r.s, r.eta0, budget, r.B, T or r.T, r.R, rng)
        return fit.beta

    return est


def dp_btl_estimator(model: BtlModel, budget: PrivacyBudget):
    def est(data, rng):
        gamma, sigma = default_btl_hyperparams(data.n_items, model.p, budget)
        return fit_dp_btl(data, gamma, sigma, rng).theta

    return est


def dp_nonparam_estimator(model: NonparamModel, budget: PrivacyBudget, alpha: int = 1, C: float = 2 * math.pi, mcmc=None):
    spec = SobolevSpec(alpha, C)
    cfg = NonparamConfig(K=model.k, sigma=model.sigma, mcmc=mcmc or McmcConfig())

    def est(data, rng):
        return fit_dp_nonparam(data.X, data.Y, spec, budget, rng, cfg).coeffs.theta

    return est


def dp_mean_estimator(model: GaussianLocationModel, budget: PrivacyBudget | None, clip: float = 4.0):
    """Sample mean, optionally clipped to ``[-clip, clip]`` per coordinate and Gaussian-noised."""

    def est(data, rng):
        if budget is None:
            return data.mean(axis=0)
        n, d = data.shape
        sens = 2 * clip * math.sqrt(d) / n
        return np.clip(data, -clip, clip).mean(axis=0) + rng.normal(gaussian_sigma(sens, budget), (d,))

    return est


def default_estimator(model, budget: PrivacyBudget | None, **kwargs):
    if isinstance(model, GaussianLocationModel):
        return dp_mean_estimator(model, budget)
    if budget is None:
        raise InvalidParameterError("a privacy budget is required for this model kind")
    if isinstance(model, SparseGlmModel):
        return dp_sparse_estimator(model, budget, **kwargs)
    if isinstance(model, GlmModel):
        return dp_glm_estimator(model, budget, **kwargs)
    if isinstance(model, BtlModel):
        return dp_btl_estimator(model, budget)
    if isinstance(model, NonparamModel):
        return dp_nonparam_estimator(model, budget, **kwargs)
    raise InvalidParameterError(f"no default estimator for {type(model).__name__}")
