"""Bidirectional 5-tuple flow aggregation with active/inactive timeouts."""

from __future__ import annotations

import enum
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .ingest import PacketBatch, PacketRecord

ACTIVE_TIMEOUT = 300.0
INACTIVE_TIMEOUT = 65.0
DEFAULT_CAPACITY = 1 << 22
REORDER_TOLERANCE = 1e-3


class Direction(enum.IntEnum):
    REVERSE = 0
    FORWARD = 1


class FlowKey(NamedTuple):
    addr_a: bytes
    port_a: int
    addr_b: bytes
    port_b: int
    protocol: int

    def reversed(self) -> FlowKey:
        return FlowKey(self.addr_b, self.port_b, self.addr_a, self.port_a, self.protocol)


def flow_key(pkt: PacketRecord) -> FlowKey:
    """Direction-insensitive lookup key for ``pkt``.

    Endpoints are put in a fixed (sorted) order, so a packet and its reply
    map to the same key. The orientation of a *record's* key is set
    separately by its first packet, see :class:`FlowRecord`.
    """
    a = (pkt.src_addr, pkt.src_port)
    b = (pkt.dst_addr, pkt.dst_port)
    if b < a:
        a, b = b, a
    return FlowKey(a[0], a[1], b[0], b[1], pkt.protocol)


@dataclass(frozen=True, eq=False)
class FlowRecord:
    """An exported flow. Immutable once emitted.

    ``key`` is oriented so that ``(addr_a, port_a)`` is the source of the
    first packet; packets from that endpoint are ``Direction.FORWARD``.
    """

    key: FlowKey
    times: np.ndarray
    lengths: np.ndarray
    directions: np.ndarray
    pkt_count_fwd: int
    pkt_count_rev: int
    byte_count_fwd: int
    byte_count_rev: int

    @property
    def first_ts(self) -> float:
        return float(self.times[0])

    @property
    def last_ts(self) -> float:
        return float(self.times[-1])

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    def __len__(self) -> int:
        return len(self.times)

    @property
    def packets(self) -> list[tuple[float, int, Direction]]:
        return [
            (float(t), int(x), Direction(int(d)))
            for t, x, d in zip(self.times, self.lengths, self.directions)
        ]

    def sort_key(self) -> tuple:
        return (self.first_ts, self.key)


class _ActiveFlow:
    __slots__ = ("key", "src", "first_ts", "last_ts", "times", "lengths", "dirs")

    def __init__(self, key: FlowKey, ts: float, length: int):
        self.key = key
        self.src = (key.addr_a, key.port_a)
        self.first_ts = ts
        self.last_ts = ts
        self.times = [ts]
        self.lengths = [length]
        self.dirs = [1]

    def freeze(self) -> FlowRecord:
        lengths = np.array(self.lengths, dtype=np.int64)
        dirs = np.array(self.dirs, dtype=np.int8)
        fwd = dirs.astype(bool)
        n_fwd = int(fwd.sum())
        bytes_fwd = int(lengths[fwd].sum())
        return FlowRecord(
            key=self.key,
            times=np.array(self.times, dtype=np.float64),
            lengths=lengths,
            directions=dirs,
            pkt_count_fwd=n_fwd,
            pkt_count_rev=len(dirs) - n_fwd,
            byte_count_fwd=bytes_fwd,
            byte_count_rev=int(lengths.sum()) - bytes_fwd,
        )


@dataclass
class FlowTable:
    """Single-writer flow cache.

    Flows are split when the gap since their last packet exceeds
    ``inactive_timeout`` (strict ``>``) or when a packet arrives at or after
    ``first_ts + active_timeout`` (``>=``). Idle flows are also swept out
    as capture time advances, which only changes *when* a record is
    returned, never its contents.
    """

    active_timeout: float = ACTIVE_TIMEOUT
    inactive_timeout: float = INACTIVE_TIMEOUT
    capacity: int = DEFAULT_CAPACITY
    reordered: int = 0
    evicted: int = 0
    _flows: OrderedDict = field(default_factory=OrderedDict, repr=False)
    _clock: float = field(default=float("-inf"), repr=False)

    def __post_init__(self):
        if not 0 < self.inactive_timeout <= self.active_timeout:
            raise ValueError("timeouts must satisfy 0 < inactive <= active")
        if self.capacity < 1:
            raise ValueError("capacity must be positive")

    def __len__(self) -> int:
        return len(self._flows)

    def ingest(self, pkt: PacketRecord) -> list[FlowRecord]:
        """Add one packet; return the flow records this packet closed."""
        ts = pkt.timestamp
        clock = self._clock
        if ts < clock:
            if clock - ts > REORDER_TOLERANCE:
                self.reordered += 1
            ts = clock
        else:
            self._clock = ts

        flows = self._flows
        out: list[FlowRecord] = []
        # Sweep idle flows from the LRU end.
        while flows:
            oldest = next(iter(flows.values()))
            if ts - oldest.last_ts > self.inactive_timeout:
                out.append(flows.popitem(last=False)[1].freeze())
            else:
                break

        key = flow_key(pkt)
        flow = flows.get(key)
        if flow is not None and ts - flow.first_ts >= self.active_timeout:
            del flows[key]
            out.append(flow.freeze())
            flow = None
        if flow is None:
            if len(flows) >= self.capacity:
                out.append(flows.popitem(last=False)[1].freeze())
                self.evicted += 1
            oriented = FlowKey(pkt.src_addr, pkt.src_port, pkt.dst_addr, pkt.dst_port, pkt.protocol)
            flows[key] = _ActiveFlow(oriented, ts, pkt.payload_len)
            return out

        flow.last_ts = ts
        flow.times.append(ts)
        flow.lengths.append(pkt.payload_len)
        flow.dirs.append(1 if (pkt.src_addr, pkt.src_port) == flow.src else 0)
        flows.move_to_end(key)
        return out

    def ingest_batch(self, batch: PacketBatch) -> list[FlowRecord]:
        """Add a batch of packets; return the flow records it closed.

        Produces the same records as calling :meth:`ingest` on each packet
        in turn (only the order of the returned list may differ).
        """
        n = len(batch)
        if n == 0:
            return []
        # Canonical endpoint order, as in flow_key().
        src = (batch.src_hi, batch.src_lo, batch.src_port)
        dst = (batch.dst_hi, batch.dst_lo, batch.dst_port)
        swap = _lex_less(dst, src)
        a_hi, a_lo, a_port = (np.where(swap, d, s_) for d, s_ in zip(dst, src))
        b_hi, b_lo, b_port = (np.where(swap, s_, d) for d, s_ in zip(dst, src))
        cols = (batch.protocol, b_port, b_lo, b_hi, a_port, a_lo, a_hi, batch.family)
        order = np.lexsort(cols)  # stable: packet order within a key
        sorted_cols = [c[order] for c in cols]
        change = np.zeros(n, dtype=bool)
        change[0] = True
        for c in sorted_cols:
            change[1:] |= c[1:] != c[:-1]
        starts = np.flatnonzero(change)
        ends = np.append(starts[1:], n)

        flows = self._flows
        if len(flows) + len(starts) > self.capacity:
            # Evictions may happen mid-batch; take the exact slow path.
            out = []
            for i in range(n):
                out.extend(self.ingest(batch.record(i)))
            return out

        raw = batch.timestamp
        clock = np.maximum.accumulate(np.concatenate(([self._clock], raw)))
        before, ts = clock[:-1], clock[1:]
        self.reordered += int(np.count_nonzero(before - raw > REORDER_TOLERANCE))

        s_ts = ts[order]
        s_len = batch.payload_len[order]
        s_swap = swap[order]
        gap_break = np.zeros(n, dtype=bool)
        gap_break[1:] = (s_ts[1:] - s_ts[:-1]) > self.inactive_timeout
        breaks = np.flatnonzero(gap_break)

        out: list[FlowRecord] = []
        touched: list[tuple[int, FlowKey]] = []
        for g0, g1 in zip(starts.tolist(), ends.tolist()):
            fam = int(sorted_cols[7][g0])
            key = FlowKey(
                _addr(fam, sorted_cols[6][g0], sorted_cols[5][g0]), int(sorted_cols[4][g0]),
                _addr(fam, sorted_cols[3][g0], sorted_cols[2][g0]), int(sorted_cols[1][g0]),
                int(sorted_cols[0][g0]),
            )
            flow = flows.get(key)
            pos = g0
            while pos < g1:
                seg = pos  # gap before this packet is already accounted for
                if flow is None:
                    first = float(s_ts[pos])
                    oriented = key.reversed() if s_swap[pos] else key
                    flow = _ActiveFlow(oriented, first, int(s_len[pos]))
                    flow_swap = bool(s_swap[pos])
                    pos += 1
                else:
                    first = flow.first_ts
                    flow_swap = flow.src != (key.addr_a, key.port_a)
                    t = float(s_ts[pos])
                    if t - flow.last_ts > self.inactive_timeout or t - first >= self.active_timeout:
                        del flows[key]
                        out.append(flow.freeze())
                        flow = None
                        continue
                # Segment runs until the next idle gap or the active limit.
                stop = g1
                k = np.searchsorted(breaks, seg, side="right")
                if k < len(breaks) and breaks[k] < stop:
                    stop = int(breaks[k])
                limit = int(np.searchsorted(s_ts[pos:stop], first + self.active_timeout, side="left"))
                stop = pos + limit
                if stop > pos:
                    flow.times.extend(s_ts[pos:stop].tolist())
                    flow.lengths.extend(s_len[pos:stop].tolist())
                    flow.dirs.extend((s_swap[pos:stop] == flow_swap).astype(np.int8).tolist())
                    flow.last_ts = flow.times[-1]
                flows[key] = flow
                if stop < g1:
                    del flows[key]
                    out.append(flow.freeze())
                    flow = None
                pos = stop
            touched.append((int(order[g1 - 1]), key))

        for _, key in sorted(touched):
            if key in flows:
                flows.move_to_end(key)
        now = float(ts[-1])
        self._clock = now
        while flows:
            oldest = next(iter(flows.values()))
            if now - oldest.last_ts > self.inactive_timeout:
                out.append(flows.popitem(last=False)[1].freeze())
            else:
                break
        return out

    def flush(self) -> list[FlowRecord]:
        """Export every resident flow, ordered by first timestamp."""
        records = [f.freeze() for f in self._flows.values()]
        self._flows.clear()
        records.sort(key=FlowRecord.sort_key)
        return records


def _lex_less(x: tuple, y: tuple) -> np.ndarray:
    """Elementwise lexicographic x < y over parallel column tuples."""
    less = np.zeros(len(x[0]), dtype=bool)
    equal = np.ones(len(x[0]), dtype=bool)
    for a, b in zip(x, y):
        less |= equal & (a < b)
        equal &= a == b
    return less


def _addr(family: int, hi, lo) -> bytes:
    if family == 4:
        return int(lo).to_bytes(4, "big")
    return int(hi).to_bytes(8, "big") + int(lo).to_bytes(8, "big")


def ingest(table: FlowTable, pkt: PacketRecord) -> list[FlowRecord]:
    return table.ingest(pkt)


def flush(table: FlowTable) -> list[FlowRecord]:
    return table.flush()
