"""Single flow time series: a flow's payload sizes indexed by packet time."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .flowtable import FlowRecord


@dataclass(frozen=True, eq=False)
class SFTS:
    """Unevenly spaced series of payload sizes.

    Attributes:
        values: payload bytes per packet (int64).
        times: packet timestamps in seconds, non-decreasing.
        directions: 1 for forward packets, 0 for reverse.
    """

    values: np.ndarray
    times: np.ndarray
    directions: np.ndarray

    def __post_init__(self):
        n = len(self.values)
        if n < 1:
            raise ValueError("an SFTS needs at least one data point")
        if len(self.times) != n or len(self.directions) != n:
            raise ValueError("values, times and directions must have equal length")
        for arr in (self.values, self.times, self.directions):
            arr.flags.writeable = False

    @property
    def n(self) -> int:
        return len(self.values)


@dataclass(frozen=True, eq=False)
class DerivedSequences:
    rel_times: np.ndarray
    time_diffs: np.ndarray

    @property
    def duration(self) -> float:
        return float(self.rel_times[-1])


def build_sfts(flow: FlowRecord) -> SFTS:
    if len(flow) == 0:
        raise ValueError("cannot build a time series from an empty flow")
    return SFTS(
        values=np.array(flow.lengths, dtype=np.int64),
        times=np.array(flow.times, dtype=np.float64),
        directions=np.array(flow.directions, dtype=np.int8),
    )


def derive_sequences(s: SFTS) -> DerivedSequences:
    """Relative times (from the first packet) and inter-packet gaps."""
    rel = s.times - s.times[0]
    return DerivedSequences(rel_times=rel, time_diffs=np.diff(s.times))
