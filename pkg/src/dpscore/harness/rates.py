"""Log-log regression of mean risk against one experiment axis."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import linregress

from ..errors import InvalidParameterError

_IGNORED = {"cell", "replicate", "sq_error", "wall_time", "delta"}


@dataclass
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    cells: list  # (x, mean risk, SE)

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "cells": [list(c) for c in self.cells],
        }


def fit_loglog_slope(rows: list[dict], x_axis: str) -> RateFit:
    """OLS of ``log(mean risk)`` on ``log(x)`` across cells.

    Rows are grouped by their ``x_axis`` value; every other grid value must be
    constant (``delta`` may vary with ``n``).  Cells with fewer than two
    replicates are dropped, and at least three cells must remain.
    """
    if x_axis not in ("n", "eps", "d"):
        raise InvalidParameterError(f"x_axis must be n, eps or d, got {x_axis!r}")
    groups: dict = {}
    fixed = None
    for row in rows:
        if x_axis not in row:
            raise InvalidParameterError(f"row lacks the {x_axis!r} column")
        others = tuple(sorted((k, v) for k, v in row.items() if k not in _IGNORED and k != x_axis))
        if fixed is None:
            fixed = others
        elif others != fixed:
            raise InvalidParameterError(f"rows vary in parameters other than {x_axis!r}: {dict(fixed)} vs {dict(others)}")
        groups.setdefault(float(row[x_axis]), []).append(float(row["sq_error"]))
    cells = []
    for x in sorted(groups):
        errs = np.asarray(groups[x])
        if errs.size < 2:
            continue
        cells.append((x, float(errs.mean()), float(errs.std(ddof=1) / math.sqrt(errs.size))))
    if len(cells) < 3:
        raise InvalidParameterError(f"need at least 3 cells with 2+ replicates, got {len(cells)}")
    xs = np.log([c[0] for c in cells])
    ys = np.log([c[1] for c in cells])
    fit = linregress(xs, ys)
    r2 = float(min(1.0, max(0.0, fit.rvalue**2))) if np.isfinite(fit.rvalue) else 1.0
    return RateFit(float(fit.slope), float(fit.intercept), r2, cells)
