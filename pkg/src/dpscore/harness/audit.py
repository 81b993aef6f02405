"""Empirical lower bound on the privacy loss of a mechanism from output histograms."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.stats import beta as beta_dist

from ..errors import InvalidParameterError, NumericalFailure
from ..mechanisms import PrivacyBudget, SeededRng, gaussian_sigma, laplace_scale

# (dataset, rng, size) -> array of shape (size,) or (size, dim)
Mechanism = Callable[[object, SeededRng, int], np.ndarray]


@dataclass
class AuditResult:
    epsilon_hat: float
    bin_index: int
    direction: str
    trials: int
    note: str

    def __float__(self):
        return self.epsilon_hat


def clopper_pearson(k, n, alpha):
    """One-sided ``1 - alpha`` Clopper-Pearson lower and upper bounds for ``k`` successes out of ``n``."""
    k = np.asarray(k, dtype=float)
    lo = np.where(k > 0, beta_dist.ppf(alpha, k, n - k + 1), 0.0)
    hi = np.where(k < n, beta_dist.ppf(1 - alpha, k + 1, n - k), 1.0)
    return np.nan_to_num(lo), np.nan_to_num(hi, nan=1.0)


def privacy_audit(
    mechanism: Mechanism,
    pair,
    trials: int,
    rng: SeededRng,
    bins: int = 50,
    delta: float = 0.0,
    projection: int = 0,
    alpha: float = 0.05,
) -> AuditResult:
    """Estimate ``max_S log((P(M(X) in S) - delta) / P(M(X') in S))`` over histogram bins.

    ``mechanism(data, rng, size)`` returns ``size`` independent outputs;
    multi-dimensional outputs are projected onto coordinate ``projection``.
    ``pair`` is ``(X, X')`` or a zero-argument callable producing one.
    Bin edges span the 0.1%-99.9% quantiles of the pooled outputs, with two
    open-ended outer bins.  The numerator probability is replaced by its
    lower and the denominator by its upper Clopper-Pearson bound, so the
    estimate errs low.  Both directions are checked and the result is floored
    at 0.  A bin hit at least 100 times under one dataset and never under the
    other reports ``inf``.
    """
    if trials < 1 or bins < 1:
        raise InvalidParameterError("trials and bins must be positive")
    X, Xp = pair() if callable(pair) else pair
    outs = []
    for k, data in enumerate((X, Xp)):
        out = np.asarray(mechanism(data, rng.child(k), trials), dtype=float)
        if out.ndim > 1:
            out = out[:, projection]
        outs.append(out.reshape(-1))
    pooled = np.concatenate(outs)
    if not np.all(np.isfinite(pooled)):
        raise NumericalFailure("mechanism produced non-finite outputs")
    lo, hi = np.quantile(pooled, [0.001, 0.999])
    if hi > lo:
        inner = np.linspace(lo, hi, bins + 1)
    else:
        inner = np.array([lo - 0.5, lo + 0.5])
    edges = np.concatenate([[-np.inf], inner, [np.inf]])
    counts = [np.histogram(o, bins=edges)[0] for o in outs]
    n1, n2 = outs[0].size, outs[1].size
    if counts[0].sum() + counts[1].sum() == 0:
        raise NumericalFailure("all bins are empty")

    best, best_bin, best_dir = 0.0, -1, "X vs X'"
    for label, (ka, na), (kb, nb) in (
        ("X vs X'", (counts[0], n1), (counts[1], n2)),
        ("X' vs X", (counts[1], n2), (counts[0], n1)),
    ):
        occupied = (ka > 0) | (kb > 0)
        support_gap = occupied & (kb == 0) & (ka >= 100) & (ka / na > delta)
        if np.any(support_gap):
            return AuditResult(math.inf, int(np.flatnonzero(support_gap)[0]), label, trials,
                               "outputs of one dataset land where the other never does")
        pa_lo, _ = clopper_pearson(ka, na, alpha)
        _, pb_hi = clopper_pearson(kb, nb, alpha)
        num = pa_lo - delta
        ok = occupied & (num > 0) & (pb_hi > 0)
        if np.any(ok):
            vals = np.full(ka.shape, -np.inf)
            vals[ok] = np.log(num[ok] / pb_hi[ok])
            j = int(np.argmax(vals))
            if vals[j] > best:
                best, best_bin, best_dir = float(vals[j]), j, label
    note = f"one-sided {100 * (1 - alpha):.0f}% Clopper-Pearson bounds per bin, {bins} bins, {trials} trials per dataset"
    return AuditResult(best, best_bin, best_dir, trials, note)


def laplace_count_mechanism(eps: float, sensitivity: float = 1.0, scale_factor: float = 1.0) -> Mechanism:
    """Laplace mechanism on a scalar; ``scale_factor < 1`` under-noises on purpose."""
    if not scale_factor > 0:
        raise InvalidParameterError(f"scale_factor must be positive, got {scale_factor}")
    scale = scale_factor * laplace_scale(sensitivity, eps)

    def mech(data, rng, size):
        return float(data) + rng.laplace(scale, (size,))

    return mech


def gaussian_count_mechanism(eps: float, delta: float, sensitivity: float = 1.0, scale_factor: float = 1.0) -> Mechanism:
    if not scale_factor > 0:
        raise InvalidParameterError(f"scale_factor must be positive, got {scale_factor}")
    sigma = scale_factor * gaussian_sigma(sensitivity, PrivacyBudget(eps, delta))

    def mech(data, rng, size):
        return float(data) + rng.normal(sigma, (size,))

    return mech
