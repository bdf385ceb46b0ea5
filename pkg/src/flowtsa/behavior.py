"""Behavioural features: gaps, switching, transients, one-second buckets,
direction balance and periodic packets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .sfts import SFTS, DerivedSequences
from .stats import NAN


@dataclass(frozen=True)
class BehaviorFeatures:
    significant_spaces: float
    switching_ratio: float
    transients: float
    count_of_zeros: float
    biggest_interval: float
    directions: float
    periodicity: float


@dataclass(frozen=True)
class PeriodicityParams:
    min_occurrences: int = 5
    max_cv: float = 0.1

    def __post_init__(self):
        if self.min_occurrences < 2:
            raise ValueError("min_occurrences must be >= 2")
        if not self.max_cv > 0:
            raise ValueError("max_cv must be positive")


@dataclass(frozen=True)
class Periodic:
    period: float
    length: int | None


def _f8(x) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=np.float64)


def _i8(x) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=np.int64)


def significant_spaces(time_diffs: np.ndarray) -> float:
    """1.0 if the largest gap stands out from all the other gaps.

    The largest gap must exceed the mean of the remaining gaps by three of
    their standard deviations and by at least that mean again (so jitter
    on a perfectly regular series does not count). NaN below three gaps.
    """
    return float(_kernels.significant_spaces(_f8(time_diffs)))


def switching_ratio(values: np.ndarray) -> float:
    """Fraction of consecutive packet pairs whose sizes differ."""
    return float(_kernels.switching_ratio(_i8(values)))


def transients(times: np.ndarray, values: np.ndarray, window: float = 1.0, min_points: int = 3) -> float:
    """1.0 if some window of ``window`` seconds starting at a packet holds
    at least ``min_points`` packets whose mean size exceeds the overall
    mean by two standard deviations."""
    return float(_kernels.transients(_f8(times), _i8(values), float(window), int(min_points)))


def one_second_buckets(
    rel_times: np.ndarray, values: np.ndarray, duration: float
) -> tuple[np.ndarray, np.ndarray]:
    """Payload bytes and packet counts per one-second bucket.

    Bucket k covers [k, k+1) seconds after the first packet.
    """
    return _kernels.buckets(_f8(rel_times), _i8(values), float(duration))


def detect_periodicity(s: SFTS, params: PeriodicityParams = PeriodicityParams()) -> Periodic:
    """Period (seconds) and payload length of the dominant periodic packet.

    A payload length is periodic when it occurs at least
    ``params.min_occurrences`` times and its occurrence gaps have a
    coefficient of variation below ``params.max_cv``. Among periodic
    lengths the most frequent wins (ties: the smaller length); the period
    is the median of its gaps.
    """
    period, length = _kernels.periodicity(
        _f8(s.times), _i8(s.values), params.min_occurrences, params.max_cv)
    return Periodic(float(period), None if length < 0 else int(length))


def compute_behavior(
    s: SFTS, d: DerivedSequences, params: PeriodicityParams = PeriodicityParams()
) -> tuple[BehaviorFeatures, Periodic]:
    out, length = _kernels.behavior_kernel(
        _f8(s.times), _f8(d.rel_times), _f8(d.time_diffs), _i8(s.values),
        np.ascontiguousarray(s.directions, dtype=np.int8), params.min_occurrences, params.max_cv,
    )
    feats = BehaviorFeatures(*out.tolist())
    return feats, Periodic(feats.periodicity, None if length < 0 else int(length))
