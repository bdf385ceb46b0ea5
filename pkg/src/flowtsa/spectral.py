"""Lomb-Scargle periodogram of an SFTS and the frequency-domain features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .sfts import SFTS, DerivedSequences
from .stats import NAN

ROLLOFF = 0.85
MODE_BINS = 64


class NoSpectrum(ValueError):
    """The flow is too short (in time or points) to have a spectrum."""


@dataclass(frozen=True, eq=False)
class FrequencyGrid:
    freqs: np.ndarray

    @property
    def f_min(self) -> float:
        return float(self.freqs[0])

    @property
    def f_max(self) -> float:
        return float(self.freqs[-1])

    @property
    def count(self) -> int:
        return len(self.freqs)

    @property
    def step(self) -> float:
        return float(self.freqs[1] - self.freqs[0]) if self.count > 1 else 0.0


@dataclass(frozen=True, eq=False)
class Periodogram:
    grid: FrequencyGrid
    power: np.ndarray
    constant: bool = False

    @property
    def freqs(self) -> np.ndarray:
        return self.grid.freqs


@dataclass(frozen=True)
class FrequencyFeatures:
    min_power: float
    max_power: float
    freq_min_power: float
    freq_max_power: float
    power_mode: float
    power_mean: float
    power_stdev: float
    spectral_bandwidth: float
    spectral_centroid: float
    spectral_energy: float
    spectral_entropy: float
    spectral_flatness: float
    spectral_flux: float
    spectral_kurtosis: float
    spectral_periodicity: float
    spectral_rolloff: float
    spectral_spread: float
    spectral_skewness: float
    spectral_slope: float
    spectral_zero_cross_rate: float

    @classmethod
    def missing(cls) -> FrequencyFeatures:
        return cls(*([NAN] * 20))


def frequency_grid(d: DerivedSequences, n: int, oversample: float = 4.0) -> FrequencyGrid:
    """Uniform grid from 1/duration up to the mean-rate pseudo-Nyquist n/(2 duration).

    The grid has ceil(oversample * n / 2) points, or a single point when
    the two ends coincide (n = 2).

    Raises:
        NoSpectrum: zero duration or fewer than two points.
    """
    if oversample < 1:
        raise ValueError("oversample must be >= 1")
    freqs = _kernels.grid(d.duration, int(n), float(oversample))
    if len(freqs) == 0:
        raise NoSpectrum("flow has no time extent")
    return FrequencyGrid(freqs)


def lomb_scargle(s: SFTS, d: DerivedSequences, grid: FrequencyGrid) -> Periodogram:
    """Classic normalised Lomb-Scargle periodogram on ``grid``.

    Power is normalised by twice the population variance. A constant
    series has zero power everywhere and is flagged ``constant``.
    """
    power, constant = _kernels.ls_kernel(
        np.ascontiguousarray(d.rel_times, dtype=np.float64),
        np.ascontiguousarray(s.values, dtype=np.int64),
        np.ascontiguousarray(grid.freqs, dtype=np.float64),
    )
    return Periodogram(grid, power, constant=bool(constant))


def periodogram(s: SFTS, d: DerivedSequences, oversample: float = 4.0) -> Periodogram:
    return lomb_scargle(s, d, frequency_grid(d, s.n, oversample))


def spectral_rolloff(freqs: np.ndarray, power: np.ndarray, threshold: float = ROLLOFF) -> float:
    """Lowest frequency at which cumulative power reaches ``threshold`` of the total."""
    return float(_kernels.rolloff(np.ascontiguousarray(freqs, dtype=np.float64),
                                  np.ascontiguousarray(power, dtype=np.float64), float(threshold)))


def power_mode(power: np.ndarray, bins: int = MODE_BINS) -> float:
    """Midpoint of the most populated of ``bins`` equal-width power bins."""
    return float(_kernels.power_mode(np.ascontiguousarray(power, dtype=np.float64), int(bins)))


def compute_frequency_features(p: Periodogram, rolloff: float = ROLLOFF) -> FrequencyFeatures:
    out = _kernels.freq_kernel(
        np.ascontiguousarray(p.freqs, dtype=np.float64),
        np.ascontiguousarray(p.power, dtype=np.float64),
        float(rolloff),
    )
    return FrequencyFeatures(*out.tolist())


def compute_spectral(s: SFTS, d: DerivedSequences, oversample: float = 4.0, rolloff: float = ROLLOFF):
    """Frequency features for a flow, all NaN when it has no spectrum."""
    try:
        p = periodogram(s, d, oversample)
    except NoSpectrum:
        return FrequencyFeatures.missing()
    return compute_frequency_features(p, rolloff)
