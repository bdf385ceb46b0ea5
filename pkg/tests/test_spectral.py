import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from flowtsa.sfts import SFTS, derive_sequences
from flowtsa.spectral import (FrequencyGrid, NoSpectrum, Periodogram, compute_frequency_features,
                              compute_spectral, frequency_grid, lomb_scargle, spectral_rolloff)
from marks import invariant
from oracles import close, dft_peak_frequency, frequency_mismatches, ls_power, ls_power_dense, rolloff


def series(times, values):
    t = np.asarray(times, dtype=np.float64)
    return SFTS(np.asarray(values, dtype=np.int64), t, np.ones(len(t), dtype=np.int8))


def features(freqs, power) -> dict:
    p = Periodogram(FrequencyGrid(np.asarray(freqs, dtype=float)), np.asarray(power, dtype=float))
    return vars(compute_frequency_features(p))


def sinusoid(keep=None):
    t = np.arange(256.0)
    x = np.round(1000 + 500 * np.sin(2 * np.pi * 0.05 * t)).astype(np.int64)
    if keep is not None:
        t, x = t[keep], x[keep]
    return series(t, x)


def grid_for(times, n, oversample=1.0):
    return frequency_grid(derive_sequences(series(times, np.zeros(len(times)))), n, oversample)


# -- grid ---------------------------------------------------------------------


def test_grid_ten_seconds():
    g = grid_for([0.0, 10.0], 20)
    assert g.f_min == pytest.approx(0.1) and g.f_max == pytest.approx(1.0) and g.count == 10


def test_grid_zero_duration():
    with pytest.raises(NoSpectrum):
        grid_for([4.0, 4.0], 2)


def test_grid_oversampled():
    g = grid_for([0.0, 2.0], 100, 4)
    assert g.count == 200 and g.f_max == pytest.approx(25.0)
    assert np.ptp(np.diff(g.freqs)) <= 1e-12


# -- periodogram --------------------------------------------------------------


def test_constant_series_has_zero_power():
    s = series(np.linspace(0, 9, 10), [7] * 10)
    d = derive_sequences(s)
    p = lomb_scargle(s, d, frequency_grid(d, s.n))
    assert p.constant and not p.power.any()


def test_even_sinusoid_peak_matches_dft():
    s = sinusoid()
    d = derive_sequences(s)
    p = lomb_scargle(s, d, frequency_grid(d, s.n))
    peak = p.freqs[np.argmax(p.power)]
    # Pad the DFT to the grid's oversampling so both have the same resolution.
    assert abs(peak - dft_peak_frequency(s.values.tolist(), 1.0, pad=4)) <= p.grid.step
    assert abs(peak - 0.05) <= p.grid.step


def test_uneven_sinusoid_peak():
    keep = np.sort(np.random.default_rng(0).choice(256, int(256 * 0.7), replace=False))
    s = sinusoid(keep)
    d = derive_sequences(s)
    p = lomb_scargle(s, d, frequency_grid(d, s.n))
    g = p.grid
    dense = np.linspace(g.f_min, g.f_max, 10 * (g.count - 1) + 1)
    ref = dense[np.argmax(ls_power_dense(d.rel_times, s.values, dense))]
    peak = p.freqs[np.argmax(p.power)]
    assert abs(peak - ref) <= g.step and abs(peak - 0.05) <= g.step


def test_power_matches_definition_pointwise():
    rng = np.random.default_rng(9)
    t = np.sort(rng.uniform(0, 40, 60))
    x = rng.integers(0, 1500, 60)
    s = series(t, x)
    d = derive_sequences(s)
    p = lomb_scargle(s, d, frequency_grid(d, s.n, 4))
    for k in range(0, p.grid.count, 7):
        assert p.power[k] == pytest.approx(ls_power(d.rel_times.tolist(), x.tolist(), p.freqs[k]), rel=1e-9)


def test_single_packet_has_no_spectrum():
    s = series([1.0], [5])
    f = compute_spectral(s, derive_sequences(s))
    assert all(math.isnan(v) for v in vars(f).values())


# -- features -----------------------------------------------------------------


def test_uniform_spectrum():
    f = features([1, 2, 3, 4], [1, 1, 1, 1])
    assert f["spectral_energy"] == 4 and f["spectral_centroid"] == 2.5
    assert f["spectral_flatness"] == 1 and f["spectral_rolloff"] == 4
    assert f["spectral_entropy"] == pytest.approx(2.0)


def test_delta_spectrum():
    f = features([1, 2, 3], [0, 10, 0])
    assert f["spectral_centroid"] == 2 and f["spectral_spread"] == 0
    assert f["spectral_flatness"] == 0
    assert f["max_power"] == 10 and f["freq_max_power"] == 2


def test_all_zero_spectrum():
    f = features([1, 2, 3], [0, 0, 0])
    for name in ("spectral_centroid", "spectral_rolloff", "spectral_entropy", "spectral_bandwidth"):
        assert math.isnan(f[name]), name
    assert not any(math.isinf(v) for v in f.values())


def test_subnormal_spectrum_does_not_raise():
    f = features([1, 2], [5e-324, 0.0])
    assert math.isnan(f["spectral_centroid"]) and f["max_power"] == 5e-324
    # The mean underflows to 0 but the empty bin still fixes flatness.
    assert f["spectral_flatness"] == 0
    assert features([1, 2], [5e-324, 5e-324])["spectral_flatness"] == 1


def test_random_spectrum_matches_naive():
    rng = np.random.default_rng(256)
    freqs = np.linspace(0.01, 2.56, 256)
    power = rng.exponential(1.0, 256)
    assert frequency_mismatches(features(freqs, power), freqs, power) == []


# -- properties ---------------------------------------------------------------

spectra = st.integers(2, 200).flatmap(lambda n: st.tuples(
    st.floats(1e-3, 10), st.floats(1e-4, 1),
    hnp.arrays(np.float64, n, elements=st.floats(0, 1e3) | st.just(0.0)),
))

# Scaling is only exact-ish away from the subnormal range.
normal_spectra = st.integers(2, 200).flatmap(lambda n: st.tuples(
    st.floats(1e-3, 10), st.floats(1e-4, 1),
    hnp.arrays(np.float64, n, elements=st.floats(1e-6, 1e3) | st.just(0.0)),
))


def grid_of(f0, step, n):
    return f0 + step * np.arange(n)


@invariant("spectral: features match the naive reference and stay in range")
@given(spectra)
def test_features_reference(spec):
    f0, step, power = spec
    assume(power.mean() > 0)
    freqs = grid_of(f0, step, len(power))
    got = features(freqs, power)
    assert frequency_mismatches(got, freqs, power) == []
    assert got["min_power"] <= got["power_mean"] <= got["max_power"]
    lo, hi = freqs[0], freqs[-1]
    assert lo - 1e-9 <= got["spectral_centroid"] <= hi + 1e-9
    assert lo <= got["spectral_rolloff"] <= hi
    assert 0 <= got["spectral_flatness"] <= 1 + 1e-12
    assert 0 <= got["spectral_periodicity"] <= 1
    assert got["spectral_entropy"] >= 0


@invariant("spectral: scale equivariance of the power features")
@given(normal_spectra, st.floats(1e-3, 1e3))
def test_scale_equivariance(spec, c):
    f0, step, power = spec
    assume(power.sum() > 0)
    freqs = grid_of(f0, step, len(power))
    a, b = features(freqs, power), features(freqs, power * c)
    assert close(b["spectral_centroid"], a["spectral_centroid"], 1e-9, freqs[-1])
    if b["spectral_rolloff"] != a["spectral_rolloff"]:
        # Only an exact tie with the threshold may flip under rounding.
        k = int(np.searchsorted(freqs, min(a["spectral_rolloff"], b["spectral_rolloff"])))
        frac = math.fsum(power[:k + 1]) / math.fsum(power)
        assert abs(frac - 0.85) <= 1e-12
    for name in ("spectral_flatness", "spectral_entropy", "spectral_zero_cross_rate",
                 "spectral_periodicity"):
        assert close(b[name], a[name], 1e-9), name
    for name in ("spectral_energy", "min_power", "max_power", "power_mean", "power_stdev"):
        assert close(b[name], c * a[name], 1e-9, 1e-300), name


@invariant("spectral: rolloff is non-decreasing in its threshold")
@given(spectra, st.floats(0, 1), st.floats(0, 1))
def test_rolloff_monotone(spec, t1, t2):
    f0, step, power = spec
    assume(power.sum() > 0)
    lo, hi = sorted((t1, t2))
    freqs = grid_of(f0, step, len(power))
    assert spectral_rolloff(freqs, power, lo) <= spectral_rolloff(freqs, power, hi)
    assert spectral_rolloff(freqs, power) == rolloff(freqs.tolist(), power.tolist())


@invariant("spectral: flatness is 1 iff the spectrum is flat, 0 with an empty bin")
@given(spectra)
def test_flatness(spec):
    f0, step, power = spec
    assume(power.sum() > 0)
    freqs = grid_of(f0, step, len(power))
    flat = features(freqs, power)["spectral_flatness"]
    if (power == 0).any():
        assert flat == 0
    elif (power == power[0]).all():
        assert flat == 1
    else:
        assert flat < 1
    assert features(freqs, np.full(len(power), power.max()))["spectral_flatness"] == 1


@invariant("spectral: evenly spaced LS peak agrees with the DFT peak")
@given(st.integers(32, 128), st.floats(0.05, 0.45), st.floats(0, 2 * math.pi), st.floats(0.1, 2))
def test_even_peak_matches_dft(n, cycles, phase, dt):
    # With only a few cycles in view both estimators are biased by leakage
    # from the mirrored tone, in different ways.
    assume(n * cycles >= 8)
    t = dt * np.arange(n)
    f_true = cycles / dt
    x = np.round(1000 + 400 * np.sin(2 * np.pi * f_true * t + phase)).astype(np.int64)
    assume(np.ptp(x) > 0)
    s = series(t, x)
    d = derive_sequences(s)
    p = lomb_scargle(s, d, frequency_grid(d, s.n, 4))
    peak = p.freqs[np.argmax(p.power)]
    y = x - x.mean()
    spec = np.abs(np.fft.rfft(y, 4 * n)) ** 2
    ref = (1 + np.argmax(spec[1:])) / (4 * n * dt)
    assert abs(peak - ref) <= p.grid.step
