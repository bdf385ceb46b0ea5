import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from flowtsa.features import extract_features
from flowtsa.flowtable import FlowKey, FlowRecord
from flowtsa.sfts import SFTS, build_sfts, derive_sequences
from flowtsa.temporal import compute_time
from marks import invariant

KEY = FlowKey(b"\x0a\x00\x00\x01", 1, b"\x0a\x00\x00\x02", 2, 17)


def record(times, lengths, dirs):
    times = np.asarray(times, dtype=np.float64)
    lengths = np.asarray(lengths, dtype=np.int64)
    dirs = np.asarray(dirs, dtype=np.int8)
    fwd = dirs == 1
    return FlowRecord(KEY, times, lengths, dirs, int(fwd.sum()), int((~fwd).sum()),
                      int(lengths[fwd].sum()), int(lengths[~fwd].sum()))


def series(times):
    t = np.asarray(times, dtype=np.float64)
    return SFTS(np.zeros(len(t), dtype=np.int64), t, np.ones(len(t), dtype=np.int8))


def test_single_packet():
    s = build_sfts(record([0.0], [100], [1]))
    assert s.n == 1 and s.values.tolist() == [100]


def test_direct_copy():
    s = build_sfts(record([0.0, 0.5, 2.0], [100, 0, 1500], [1, 0, 1]))
    assert s.values.tolist() == [100, 0, 1500]
    assert s.times.tolist() == [0.0, 0.5, 2.0]
    assert s.directions.tolist() == [1, 0, 1]


def test_long_flow():
    rng = np.random.default_rng(7)
    times = np.cumsum(rng.uniform(1e-4, 0.01, 10_000))
    lengths = rng.integers(0, 1500, 10_000)
    s = build_sfts(record(times, lengths, np.ones(10_000)))
    assert s.n == 10_000
    assert np.all(np.diff(s.times) > 0)
    assert np.array_equal(s.times, times) and np.array_equal(s.values, lengths)


def test_empty_flow_rejected():
    with pytest.raises(ValueError):
        build_sfts(record([], [], []))


def test_series_is_read_only():
    s = build_sfts(record([0.0, 1.0], [1, 2], [1, 1]))
    with pytest.raises(ValueError):
        s.values[0] = 5


def test_derive_single_point():
    d = derive_sequences(series([5.0]))
    assert d.rel_times.tolist() == [0.0] and d.time_diffs.tolist() == [] and d.duration == 0.0


def test_derive_arithmetic():
    d = derive_sequences(series([1.0, 1.5, 3.0]))
    assert d.rel_times.tolist() == [0.0, 0.5, 2.0]
    assert d.time_diffs.tolist() == [0.5, 1.5]
    assert d.duration == 2.0


def test_gap_sum_equals_duration_n1000():
    rng = np.random.default_rng(3)
    t = np.sort(rng.uniform(1.6e9, 1.6e9 + 300, 1000))
    d = derive_sequences(series(t))
    assert abs(math.fsum(d.time_diffs) - d.duration) <= 1e-9


sorted_times = hnp.arrays(np.float64, st.integers(1, 200),
                          elements=st.floats(0, 300, allow_nan=False)).map(np.sort)
offsets = st.floats(0, 2e9)


@invariant("sfts: derived sequences shape, rt_1 = 0, gaps sum to duration")
@given(sorted_times, offsets)
def test_derived_sequences(rel, t0):
    times = np.sort(rel + t0)
    s = series(times)
    d = derive_sequences(s)
    assert len(d.rel_times) == s.n and len(d.time_diffs) == s.n - 1
    assert d.rel_times[0] == 0.0
    assert np.all(np.diff(d.rel_times) >= 0)
    assert np.all(d.time_diffs >= 0)
    assert abs(math.fsum(d.time_diffs) - d.duration) <= 1e-9 * max(1.0, t0 / 1e6)
    assert d.duration == d.rel_times[-1]


@invariant("sfts: build and derive are pure; duration is the Duration feature")
@given(sorted_times, st.data())
def test_build_is_pure(times, data):
    n = len(times)
    lengths = data.draw(hnp.arrays(np.int64, n, elements=st.integers(0, 65535)))
    dirs = data.draw(hnp.arrays(np.int8, n, elements=st.integers(0, 1)))
    rec = record(times, lengths, dirs)
    a, b = build_sfts(rec), build_sfts(rec)
    assert np.array_equal(a.values, b.values) and np.array_equal(a.times, b.times)
    assert np.array_equal(a.directions, rec.directions)
    da, db = derive_sequences(a), derive_sequences(b)
    assert np.array_equal(da.rel_times, db.rel_times) and np.array_equal(da.time_diffs, db.time_diffs)
    assert np.array_equal(rec.times, times)
    assert compute_time(da).duration == da.duration
    assert extract_features(rec).time.duration == da.duration
