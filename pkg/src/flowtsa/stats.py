"""Statistical features over a flow's payload-size sequence."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels

NAN = float("nan")


@dataclass(frozen=True)
class StatisticalFeatures:
    mean: float
    median: float
    stdev: float
    variance: float
    burstiness: float
    q1: float
    q3: float
    min: float
    max: float
    min_minus_max: float
    mode: float
    percent_deviation: float
    average_dispersion: float
    root_mean_square: float
    percent_above_mean: float
    percent_below_mean: float
    coefficient_of_variation: float
    skew_fp_g1_adj: float
    skew_fp_g1: float
    skew_fisher_mu3: float
    skew_pearson_sk1: float
    skew_pearson_sk2: float
    skew_galton: float
    kurtosis: float
    entropy: float
    scaled_entropy: float


def quantile_sorted(xs: np.ndarray, p: float) -> float:
    """Linearly interpolated quantile of an already sorted array.

    Uses position ``(n - 1) * p`` between closest ranks.
    """
    pos = (len(xs) - 1) * p
    lo = math.floor(pos)
    frac = pos - lo
    a = float(xs[lo])
    if frac == 0.0:
        return a
    return a + (float(xs[lo + 1]) - a) * frac


def _div(num: float, den: float) -> float:
    return num / den if den != 0 else NAN


def burstiness(stdev: float, mean: float) -> float:
    return _div(stdev - mean, stdev + mean)


def compute_statistical(values) -> StatisticalFeatures:
    """All 26 statistical features of ``values``.

    Moments are population moments. Results do not depend on the order of
    ``values``: the data is sorted before any reduction. Undefined ratios
    (zero mean, zero variance, ...) come back as NaN.
    """
    xs = np.ascontiguousarray(values, dtype=np.int64)
    if xs.ndim != 1 or len(xs) == 0:
        raise ValueError("statistical features need a non-empty 1-d sequence")
    return StatisticalFeatures(*_kernels.stat_kernel(xs).tolist())
