"""Time-based and distribution-based features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .sfts import SFTS, DerivedSequences
from .stats import NAN

BENFORD = np.log10(1.0 + 1.0 / np.arange(1, 10))


@dataclass(frozen=True)
class TimeFeatures:
    rt_mean: float
    rt_median: float
    rt_q1: float
    rt_q3: float
    dt_mean: float
    dt_median: float
    dt_min: float
    dt_max: float
    duration: float


@dataclass(frozen=True)
class DistributionFeatures:
    hurst: float
    stationarity: float
    benford: float
    normal_dist: float
    count_distribution: float
    count_nonzero_distribution: float
    time_distribution: float


@dataclass(frozen=True)
class StationarityParams:
    segments: int = 3
    max_mean_diff: float = 0.2
    max_var_diff: float = 0.5
    min_points: int = 9

    def __post_init__(self):
        if self.segments < 2:
            raise ValueError("segments must be >= 2")
        if self.min_points < 1 or self.max_mean_diff < 0 or self.max_var_diff < 0:
            raise ValueError("bad stationarity parameters")


def _f8(x) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=np.float64)


def _i8(x) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=np.int64)


def compute_time(d: DerivedSequences) -> TimeFeatures:
    return TimeFeatures(*_kernels.time_kernel(_f8(d.rel_times), _f8(d.time_diffs)).tolist())


def hurst_exponent(values, min_window: int = 8) -> float:
    """Rescaled-range estimate of the Hurst exponent.

    Window sizes are powers of two from ``min_window`` up to ``n / 2``.
    For each size, R/S is averaged over non-overlapping windows (windows
    with zero variance are skipped) and the exponent is the least-squares
    slope of log2(R/S) against log2(window size). NaN below 16 points.
    """
    return float(_kernels.hurst(_f8(values), int(min_window)))


def benford_score(digit_probs) -> float:
    """Total-variation similarity between a leading-digit distribution
    (indexed 1..9 as positions 0..8) and Benford's law."""
    p = np.asarray(digit_probs, dtype=np.float64)
    return float(1.0 - 0.5 * np.abs(p - BENFORD).sum())


def benford_similarity(values) -> float:
    """Benford similarity of the occurrence counts of the nine most frequent
    payload lengths. NaN for a single value."""
    xs = _i8(values)
    if len(xs) == 0:
        raise ValueError("benford similarity needs at least one value")
    return float(_kernels.benford(xs))


def stationarity(values, params: StationarityParams = StationarityParams()) -> float:
    """1.0 when segment means and variances agree, 0.0 otherwise.

    The series is cut into ``params.segments`` contiguous parts (lengths
    differ by at most one, longer parts first). Means and variances must
    pairwise differ by at most the configured fraction of the larger one.
    NaN below ``params.min_points`` points.
    """
    return float(_kernels.stationarity(
        _f8(values), params.segments, params.max_mean_diff, params.max_var_diff, params.min_points))


def normal_similarity(values) -> float:
    """exp(-JB/2): the chi-square(2) survival value of the Jarque-Bera statistic."""
    return float(_kernels.normal_similarity(_f8(values)))


def count_distribution(rel_times: np.ndarray, duration: float) -> float:
    """Mean relative time as a fraction of the flow duration."""
    rt = _f8(rel_times)
    if len(rt) == 0:
        return NAN
    return float(_kernels.count_distribution(rt, np.ones(len(rt), dtype=np.int64), False, duration))


def time_distribution(time_diffs: np.ndarray) -> float:
    return float(_kernels.time_distribution(_f8(time_diffs)))


def compute_distribution(
    s: SFTS, d: DerivedSequences, params: StationarityParams = StationarityParams()
) -> DistributionFeatures:
    out = _kernels.dist_kernel(
        _i8(s.values), _f8(d.rel_times), _f8(d.time_diffs),
        params.segments, params.max_mean_diff, params.max_var_diff, params.min_points,
    )
    return DistributionFeatures(*out.tolist())
