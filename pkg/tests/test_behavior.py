import math
import statistics

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from flowtsa.behavior import (PeriodicityParams, compute_behavior, detect_periodicity, significant_spaces,
                              switching_ratio, transients)
from flowtsa.sfts import SFTS, derive_sequences
from marks import invariant
from oracles import buckets

T0 = 1_600_000_000.0


def series(times, values, dirs=None):
    t = np.asarray(times, dtype=np.float64)
    d = np.ones(len(t), dtype=np.int8) if dirs is None else np.asarray(dirs, dtype=np.int8)
    return SFTS(np.asarray(values, dtype=np.int64), t, d)


def behave(s):
    return compute_behavior(s, derive_sequences(s))[0]


def naive_periodicity(times, values, min_occ=5, max_cv=0.1):
    best = (0, 0.0)
    for length in sorted(set(values)):
        ts = [t for t, v in zip(times, values) if v == length]
        if len(ts) < min_occ:
            continue
        gaps = [b - a for a, b in zip(ts, ts[1:])]
        mean = sum(gaps) / len(gaps)
        if mean > 0 and statistics.pstdev(gaps) / mean < max_cv and len(ts) > best[0]:
            best = (len(ts), statistics.median(gaps))
    return best[1]


def heartbeat(seed):
    rng = np.random.default_rng(seed)
    beats = np.arange(0.0, 120.0, 5.0)
    noise_t = rng.uniform(0, 120, 80)
    noise_v = rng.choice([100, 200, 300, 1400], 80)
    t = np.concatenate((beats, noise_t))
    v = np.concatenate((np.full(len(beats), 64), noise_v))
    order = np.argsort(t, kind="stable")
    return series(T0 + t[order], v[order])


def test_steady_one_per_second():
    f = behave(series(T0 + np.arange(10.0), [500] * 10))
    assert f.count_of_zeros == 0 and f.switching_ratio == 0 and f.directions == 100
    assert f.significant_spaces == 0 and f.periodicity == pytest.approx(1.0)


def test_one_big_gap():
    f = behave(series([0, 0.1, 0.2, 60], [10, 20, 30, 40]))
    assert f.significant_spaces == 1
    assert f.count_of_zeros == pytest.approx(59 / 61 * 100)


def test_alternating_directions():
    assert behave(series(np.arange(8.0), [1] * 8, [1, 0] * 4)).directions == 50


def test_heartbeat_period():
    s = heartbeat(0)
    p = detect_periodicity(s)
    assert p.period == pytest.approx(5.0, abs=0.05) and p.length == 64


def test_noise_has_no_period():
    misses = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        t = np.sort(rng.uniform(0, 300, 200))
        misses += detect_periodicity(series(t, rng.integers(0, 1500, 200))).period != 0
    assert misses <= 1


def test_too_few_packets_for_periodicity():
    assert detect_periodicity(series([0, 1, 2], [5, 5, 5])).period == 0


def test_significant_spaces_needs_four_packets():
    assert math.isnan(significant_spaces(np.array([1.0, 50.0])))


def test_transients_burst():
    t = np.concatenate((np.arange(0, 20.0), [30.0, 30.1, 30.2]))
    v = np.concatenate((np.full(20, 100), [1500, 1500, 1500]))
    assert transients(t, v) == 1.0
    assert math.isnan(transients(np.arange(10.0), np.full(10, 3)))


def test_switching_ratio_examples():
    assert switching_ratio(np.array([4, 4, 4])) == 0
    assert switching_ratio(np.array([1, 2, 1, 2])) == 1


def test_bad_periodicity_params():
    with pytest.raises(ValueError):
        PeriodicityParams(min_occurrences=1)


# -- properties ---------------------------------------------------------------

flows = st.integers(1, 150).flatmap(lambda n: st.tuples(
    hnp.arrays(np.float64, n, elements=st.floats(0, 40) | st.integers(0, 40).map(float)).map(np.sort),
    hnp.arrays(np.int64, n, elements=st.sampled_from([0, 64, 1500]) | st.integers(0, 1500)),
    hnp.arrays(np.int8, n, elements=st.integers(0, 1)),
))


@invariant("behavior: buckets, bounds, switching and direction balance")
@given(flows, st.floats(0, 2e9))
def test_behavior_invariants(flow, t0):
    rel, x, dirs = flow
    s = series(t0 + rel, x, dirs)
    f = behave(s)
    n = len(x)
    # Buckets are aligned to the first packet, i.e. defined on relative time.
    zeros, biggest = buckets((s.times - s.times[0]).tolist(), x.tolist())
    assert f.count_of_zeros == zeros
    assert f.biggest_interval == biggest
    rt = s.times - s.times[0]
    occupied = len(set(math.floor(r) for r in rt))
    assert abs(f.count_of_zeros + 100 * occupied / (math.floor(rt[-1]) + 1) - 100) <= 1e-9
    assert f.biggest_interval >= x.sum() / math.ceil(rt[-1] + 1) - 1e-9
    fwd = 100 * dirs.sum() / n
    assert f.directions == pytest.approx(fwd) and 0 <= f.directions <= 100
    assert abs(fwd + 100 * (n - dirs.sum()) / n - 100) <= 1e-9
    if n >= 2:
        want = sum(a != b for a, b in zip(x[1:], x[:-1])) / (n - 1)
        assert f.switching_ratio == pytest.approx(want)
        assert 0 <= f.switching_ratio <= 1
    assert math.isnan(f.significant_spaces) or f.significant_spaces in (0.0, 1.0)
    assert math.isnan(f.transients) or f.transients in (0.0, 1.0)
    assert 0 <= f.periodicity <= rt[-1]


@invariant("behavior: periodicity matches the longhand detector")
@given(flows)
def test_periodicity_reference(flow):
    rel, x, _ = flow
    s = series(rel, x)
    assert detect_periodicity(s).period == pytest.approx(naive_periodicity(rel.tolist(), x.tolist()), abs=1e-12)


@invariant("behavior: switching ratio is 0 for constant and 1 for alternating series")
@given(st.integers(2, 300), st.integers(0, 1500), st.integers(0, 1500))
def test_switching_extremes(n, a, b):
    assume(a != b)
    assert switching_ratio(np.full(n, a)) == 0
    assert switching_ratio(np.array([a, b] * (n // 2) + [a] * (n % 2))) == 1
