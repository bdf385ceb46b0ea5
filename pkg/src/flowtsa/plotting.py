"""Diagnostic figures: SFTS stem plots and a per-run feature overview."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .export import FULL_COLUMNS, REDUCED_COLUMNS, full_row, reduced_row  # noqa: E402
from .flowtable import FlowRecord, FlowTable  # noqa: E402
from .ingest import format_addr, open_capture  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
    "figure.figsize": (7.0, 3.2),
}

_SELECTOR_FIELDS = ("addr", "port", "src", "dst", "sport", "dport", "proto", "start", "index")


class SelectorError(ValueError):
    """A flow selector matched no flow or more than one."""


def describe(flow: FlowRecord) -> str:
    k = flow.key
    return (f"{format_addr(k.addr_a)}:{k.port_a} -> {format_addr(k.addr_b)}:{k.port_b} "
            f"proto {k.protocol} start {flow.first_ts!r} packets {len(flow)}")


@dataclass(frozen=True)
class FlowSelector:
    """Comma-separated ``field=value`` terms, all of which must match.

    Fields: addr, port (either endpoint), src, dst, sport, dport (key
    orientation), proto, start (first timestamp, to 1 us), index (position
    among all flows ordered by start).
    """

    terms: tuple[tuple[str, str], ...]

    @classmethod
    def parse(cls, text: str) -> FlowSelector:
        terms = []
        for part in filter(None, (p.strip() for p in text.split(","))):
            name, sep, value = part.partition("=")
            if not sep or name not in _SELECTOR_FIELDS:
                raise ValueError(f"bad selector term {part!r}; fields are {', '.join(_SELECTOR_FIELDS)}")
            terms.append((name, value))
        if not terms:
            raise ValueError("empty flow selector")
        return cls(tuple(terms))

    def matches(self, flow: FlowRecord, index: int) -> bool:
        k = flow.key
        a, b = format_addr(k.addr_a), format_addr(k.addr_b)
        for name, value in self.terms:
            ok = {
                "addr": lambda: value in (a, b),
                "port": lambda: int(value) in (k.port_a, k.port_b),
                "src": lambda: value == a,
                "dst": lambda: value == b,
                "sport": lambda: int(value) == k.port_a,
                "dport": lambda: int(value) == k.port_b,
                "proto": lambda: int(value) == k.protocol,
                "start": lambda: abs(float(value) - flow.first_ts) < 1e-6,
                "index": lambda: int(value) == index,
            }[name]()
            if not ok:
                return False
        return True


def select_flow(flows: list[FlowRecord], selector: FlowSelector) -> FlowRecord:
    ordered = sorted(flows, key=FlowRecord.sort_key)
    hits = [f for i, f in enumerate(ordered) if selector.matches(f, i)]
    if len(hits) == 1:
        return hits[0]
    pool = hits or ordered
    listing = "\n".join("  " + describe(f) for f in pool[:20])
    more = f"\n  ... {len(pool) - 20} more" if len(pool) > 20 else ""
    if not hits:
        raise SelectorError(f"no flow matches; candidates:\n{listing}{more}")
    raise SelectorError(f"{len(hits)} flows match:\n{listing}{more}")


def read_flows(paths, active: float, inactive: float, length_mode: str = "transport_payload") -> list[FlowRecord]:
    table = FlowTable(active, inactive)
    flows: list[FlowRecord] = []
    for path in paths:
        with open_capture(path, length_mode) as handle:
            for pkt in handle:
                flows.extend(table.ingest(pkt))
    flows.extend(table.flush())
    return flows


def sfts_figure(flow: FlowRecord):
    """Stem plot of payload bytes over seconds since the flow start."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        rt = flow.times - flow.times[0]
        fwd = flow.directions.astype(bool)
        for mask, colour, label in ((fwd, "C0", "forward"), (~fwd, "C3", "reverse")):
            if mask.any():
                markers, stems, base = ax.stem(rt[mask], flow.lengths[mask], linefmt=colour,
                                               markerfmt=colour + "o", basefmt=" ", label=label)
                markers.set_markersize(3)
                stems.set_linewidth(0.8)
        top = int(flow.lengths.max())
        ax.set_ylim(0, top if top > 0 else 1)
        ax.set_xlabel("time since first packet [s]")
        ax.set_ylabel("payload [bytes]")
        ax.set_title(describe(flow), fontsize=8)
        ax.legend(frameon=False, fontsize=8)
        fig.tight_layout()
    return fig


def plot_sfts(paths, selector: str, output: str, active: float = 300.0, inactive: float = 65.0,
              length_mode: str = "transport_payload") -> str:
    """Render the SFTS of the single flow matching ``selector`` to ``output``.

    Raises:
        SelectorError: zero or several flows match.
    """
    flows = read_flows(paths, active, inactive, length_mode)
    flow = select_flow(flows, FlowSelector.parse(selector))
    fig = sfts_figure(flow)
    fig.savefig(output)
    plt.close(fig)
    return output


def feature_overview(vectors, mode: str):
    """Histogram grid of every feature column (identity columns excluded)."""
    columns = FULL_COLUMNS if mode == "full" else REDUCED_COLUMNS
    to_row = full_row if mode == "full" else reduced_row
    feature_cols = [(i, c) for i, c in enumerate(columns) if i >= 6 and not c.startswith("diag_")]
    data = np.array([[to_row(v)[i] for i, _ in feature_cols] for v in vectors], dtype=np.float64)
    ncols = 5 if mode == "reduced" else 9
    nrows = math.ceil(len(feature_cols) / ncols)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(nrows, ncols, figsize=(1.9 * ncols, 1.5 * nrows), squeeze=False)
        for ax in axes.flat[len(feature_cols):]:
            ax.set_axis_off()
        for j, (ax, (_, name)) in enumerate(zip(axes.flat, feature_cols)):
            col = data[:, j] if len(data) else np.empty(0)
            if len(col):
                ax.hist(col, bins=30, color="C0")
            ax.set_title(name, fontsize=6)
            ax.tick_params(labelsize=5)
        fig.tight_layout()
    return fig


def render_report(vectors, mode: str, directory: str) -> list[str]:
    """Write the run's figures into ``directory`` and return their paths."""
    path = os.path.join(directory, f"features_{mode}.png")
    fig = feature_overview(vectors, mode)
    fig.savefig(path)
    plt.close(fig)
    return [path]
