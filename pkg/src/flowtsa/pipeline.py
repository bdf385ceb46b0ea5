"""Capture -> flows -> features -> rows."""

from __future__ import annotations

import logging
import os
import sys
import time
from concurrent.futures import Executor, ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .export import ExportError, reduce, sanitize, write_rows
from .features import FeatureConfig, extract_features
from .flowtable import ACTIVE_TIMEOUT, INACTIVE_TIMEOUT, FlowRecord, FlowTable
from .ingest import LENGTH_MODES, CaptureError, open_capture

logger = logging.getLogger(__name__)

PROGRESS_EVERY = 1_000_000
BATCH_FLOWS = 256


@dataclass
class Config:
    inputs: list[str]
    output: str = "-"
    format: str = "csv"
    mode: str = "full"
    active_timeout: float = ACTIVE_TIMEOUT
    inactive_timeout: float = INACTIVE_TIMEOUT
    oversample: float = 4.0
    length_mode: str = "transport_payload"
    min_packets: int = 1
    workers: int = 1
    reset_per_file: bool = False
    figures: str | None = None
    features: FeatureConfig = field(default_factory=FeatureConfig)

    def validate(self) -> None:
        """Raise ValueError for settings that cannot work together."""
        if not 0 < self.inactive_timeout <= self.active_timeout:
            raise ValueError("timeouts must satisfy 0 < inactive <= active")
        if self.oversample < 1:
            raise ValueError("oversample must be >= 1")
        if self.min_packets < 1:
            raise ValueError("min-packets must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.length_mode not in LENGTH_MODES:
            raise ValueError(f"length mode must be one of {LENGTH_MODES}")
        if self.format not in ("csv", "jsonl") or self.mode not in ("full", "reduced"):
            raise ValueError("bad format or mode")

    def feature_config(self) -> FeatureConfig:
        from dataclasses import replace

        return replace(self.features, oversample=self.oversample)


@dataclass
class Summary:
    flows_emitted: int = 0
    flows_skipped: int = 0
    packets_read: int = 0
    packets_total: int = 0
    non_ip: int = 0
    malformed: int = 0
    reordered: int = 0
    elapsed: float = 0.0
    status: int = 0
    error: str | None = None

    def lines(self) -> list[str]:
        rate = self.packets_read / self.elapsed if self.elapsed > 0 else 0.0
        out = [
            f"flows emitted: {self.flows_emitted}",
            f"flows below min-packets: {self.flows_skipped}",
            f"packets read: {self.packets_read} of {self.packets_total}",
            f"non-IP skipped: {self.non_ip}",
            f"malformed: {self.malformed}",
            f"reordered: {self.reordered}",
            f"elapsed: {self.elapsed:.3f} s ({rate:,.0f} packets/s)",
        ]
        if self.error:
            out.append(f"error: {self.error}")
        return out


def iter_flows(config: Config, summary: Summary) -> Iterator[FlowRecord]:
    """Every flow record in the inputs, roughly in expiry order.

    Stops early (setting ``summary.status``) when an input cannot be read;
    resident flows are then dropped rather than exported half-way.
    """
    table = FlowTable(config.active_timeout, config.inactive_timeout)
    next_report = PROGRESS_EVERY
    for path in config.inputs:
        handle = None
        try:
            handle = open_capture(path, config.length_mode)
            for batch in handle.batches():
                yield from table.ingest_batch(batch)
                summary.packets_read += len(batch)
                if summary.packets_read >= next_report:
                    logger.info("%d packets read", summary.packets_read)
                    next_report += PROGRESS_EVERY * (1 + (summary.packets_read - next_report) // PROGRESS_EVERY)
        except CaptureError as exc:
            summary.status = 1
            summary.error = str(exc)
            summary.reordered += table.reordered
            return
        finally:
            if handle is not None:
                handle.close()
                stats = handle.stats
                summary.packets_total += stats.total
                summary.non_ip += stats.non_ip
                summary.malformed += stats.malformed
        if config.reset_per_file:
            yield from table.flush()
    yield from table.flush()
    summary.reordered += table.reordered


def _vector(flow: FlowRecord, fc: FeatureConfig, mode: str):
    fv = sanitize(extract_features(flow, fc))
    return fv if mode == "full" else reduce(fv, flow)


def _vector_batch(flows: list[FlowRecord], fc: FeatureConfig, mode: str):
    return [_vector(f, fc, mode) for f in flows]


def _batched(items: Iterable, size: int) -> Iterator[list]:
    batch = []
    for item in items:
        batch.append(item)
        if len(batch) >= size:
            yield batch
            batch = []
    if batch:
        yield batch


def compute_vectors(flows: Iterable[FlowRecord], config: Config, summary: Summary,
                    executor: Executor | None = None) -> list:
    """Sanitised vectors (full or reduced) of every flow with enough packets.

    With ``config.workers > 1`` flows are processed in batches on a process
    pool; pass ``executor`` to reuse an existing pool. Output order always
    follows input order.
    """
    fc = config.feature_config()

    def kept():
        for flow in flows:
            if len(flow) < config.min_packets:
                summary.flows_skipped += 1
                continue
            yield flow

    if config.workers == 1 and executor is None:
        return [_vector(f, fc, config.mode) for f in kept()]
    if executor is not None:
        return _on_pool(executor, kept(), fc, config.mode)
    with ProcessPoolExecutor(max_workers=config.workers) as pool:
        return _on_pool(pool, kept(), fc, config.mode)


def _on_pool(pool: Executor, flows: Iterable[FlowRecord], fc: FeatureConfig, mode: str) -> list:
    pending = [pool.submit(_vector_batch, batch, fc, mode) for batch in _batched(flows, BATCH_FLOWS)]
    vectors = []
    for fut in pending:
        vectors.extend(fut.result())
    return vectors


def _open_sink(path: str):
    if path == "-":
        return sys.stdout, False
    return open(path, "w", newline="", encoding="utf-8"), True


def run(config: Config) -> Summary:
    """Run the whole pipeline and write rows to ``config.output``."""
    config.validate()
    summary = Summary()
    started = time.perf_counter()
    vectors = compute_vectors(iter_flows(config, summary), config, summary)
    try:
        sink, owned = _open_sink(config.output)
    except OSError as exc:
        summary.status = 1
        summary.error = f"cannot open output: {exc}"
        return summary
    try:
        summary.flows_emitted = write_rows(vectors, config.format, config.mode, sink)
    except ExportError as exc:
        summary.status = 1
        summary.error = f"{exc}; output may be partial"
    finally:
        if owned:
            sink.close()
    if config.figures and summary.status == 0:
        from .plotting import render_report

        os.makedirs(config.figures, exist_ok=True)
        render_report(vectors, config.mode, config.figures)
    summary.elapsed = time.perf_counter() - started
    return summary
