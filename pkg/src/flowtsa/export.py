"""Feature vectors, NaN sanitation, the reduced feature set and row writers."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
from dataclasses import dataclass
from importlib import resources
from typing import IO, Iterable, NamedTuple

from .behavior import BehaviorFeatures
from .flowtable import FlowKey, FlowRecord
from .ingest import format_addr
from .spectral import FrequencyFeatures
from .stats import StatisticalFeatures
from .temporal import DistributionFeatures, TimeFeatures

SCHEMA_VERSION = 1
SCHEMA_FILE = f"schema_v{SCHEMA_VERSION}.csv"

FORMATS = ("csv", "jsonl")
MODES = ("full", "reduced")


class ExportError(OSError):
    """Writing rows failed; the sink may hold partial output."""


class Family(NamedTuple):
    name: str  # attribute on FeatureVector
    prefix: str
    cls: type
    nan_value: float


FAMILIES = (
    Family("stat", "stat", StatisticalFeatures, 0.0),
    Family("time", "time", TimeFeatures, 0.0),
    Family("dist", "dist", DistributionFeatures, 0.5),
    Family("freq", "freq", FrequencyFeatures, -1.0),
    Family("behavior", "beh", BehaviorFeatures, 0.0),
)
_FAMILY = {f.name: f for f in FAMILIES}

IDENTITY_COLUMNS = ("src_addr", "src_port", "dst_addr", "dst_port", "protocol", "first_ts")
DIAGNOSTIC_COLUMNS = ("diag_periodic_length",)

# Reduced set, in order of importance.
REDUCED_FEATURES = (
    ("freq", "spectral_kurtosis"),
    ("behavior", "periodicity"),
    ("stat", "q1"),
    ("dist", "benford"),
    ("freq", "spectral_energy"),
    ("time", "dt_median"),
    ("stat", "min"),
    ("stat", "q3"),
    ("stat", "min_minus_max"),
    ("behavior", "directions"),
)
CLASSIC_COLUMNS = (
    "flow_duration", "flow_packets_fwd", "flow_bytes_fwd", "flow_packets_rev", "flow_bytes_rev",
)

_UNITS = {
    "stat": {
        "percent_deviation": "percent", "percent_above_mean": "percent",
        "percent_below_mean": "percent", "entropy": "bits", "variance": "bytes^2",
        "skew_fisher_mu3": "bytes^3",
        **{k: "1" for k in ("burstiness", "coefficient_of_variation", "skew_fp_g1_adj",
                            "skew_fp_g1", "skew_pearson_sk1", "skew_pearson_sk2",
                            "skew_galton", "kurtosis", "scaled_entropy")},
    },
    "time": {},
    "dist": {},
    "freq": {
        "freq_min_power": "Hz", "freq_max_power": "Hz", "spectral_bandwidth": "Hz",
        "spectral_centroid": "Hz", "spectral_rolloff": "Hz", "spectral_spread": "Hz",
        "spectral_entropy": "bits", "spectral_slope": "1/Hz",
    },
    "behavior": {
        "count_of_zeros": "percent", "directions": "percent", "biggest_interval": "bytes",
        "periodicity": "s",
    },
}
_DEFAULT_UNIT = {"stat": "bytes", "time": "s", "dist": "1", "freq": "1", "behavior": "1"}


def feature_names(family: str) -> tuple[str, ...]:
    return tuple(f.name for f in dataclasses.fields(_FAMILY[family].cls))


def column_name(family: str, feature: str) -> str:
    return f"{_FAMILY[family].prefix}_{feature}"


_WIDTH = {f.name: len(dataclasses.fields(f.cls)) for f in FAMILIES}
FEATURE_COLUMNS = tuple(column_name(f.name, n) for f in FAMILIES for n in feature_names(f.name))
FULL_COLUMNS = IDENTITY_COLUMNS + FEATURE_COLUMNS + DIAGNOSTIC_COLUMNS
REDUCED_COLUMNS = IDENTITY_COLUMNS + tuple(column_name(f, n) for f, n in REDUCED_FEATURES) + CLASSIC_COLUMNS


@dataclass(frozen=True)
class FeatureVector:
    """All features of one flow, grouped by family, plus flow identity.

    ``periodic_length`` is a diagnostic (the payload length behind the
    periodicity feature), not one of the features.
    """

    key: FlowKey
    first_ts: float
    stat: StatisticalFeatures
    time: TimeFeatures
    dist: DistributionFeatures
    freq: FrequencyFeatures
    behavior: BehaviorFeatures
    periodic_length: int | None = None

    @classmethod
    def from_array(cls, key: FlowKey, first_ts: float, values: list[float],
                   periodic_length: int | None = None) -> FeatureVector:
        """Build from the 69 feature values in schema order."""
        if len(values) != len(FEATURE_COLUMNS):
            raise ValueError(f"expected {len(FEATURE_COLUMNS)} values, got {len(values)}")
        groups = {}
        o = 0
        for fam in FAMILIES:
            k = _WIDTH[fam.name]
            groups[fam.name] = fam.cls(*values[o:o + k])
            o += k
        return cls(key, first_ts, periodic_length=periodic_length, **groups)

    def values(self) -> list[float]:
        return [v for f in FAMILIES for v in vars(getattr(self, f.name)).values()]

    def sort_key(self) -> tuple:
        return (self.first_ts, self.key)


@dataclass(frozen=True)
class ReducedVector:
    key: FlowKey
    first_ts: float
    spectral_kurtosis: float
    periodicity: float
    q1: float
    benford: float
    spectral_energy: float
    dt_median: float
    min: float
    q3: float
    min_minus_max: float
    directions: float
    duration: float
    packets_fwd: int
    bytes_fwd: int
    packets_rev: int
    bytes_rev: int

    def sort_key(self) -> tuple:
        return (self.first_ts, self.key)


def _clean(group, nan_value: float):
    values = list(vars(group).values())
    if all(v == v for v in values):
        return group
    return type(group)(*[nan_value if v != v else v for v in values])


def sanitize(fv: FeatureVector) -> FeatureVector:
    """Replace NaNs: 0.5 for distribution features, -1 for frequency
    features, 0 for everything else. Other values are left alone."""
    return FeatureVector(
        fv.key, fv.first_ts, *[_clean(getattr(fv, f.name), f.nan_value) for f in FAMILIES],
        periodic_length=fv.periodic_length,
    )


def reduce(fv: FeatureVector, flow: FlowRecord) -> ReducedVector:
    picked = {name: getattr(getattr(fv, fam), name) for fam, name in REDUCED_FEATURES}
    return ReducedVector(
        key=fv.key,
        first_ts=fv.first_ts,
        **picked,
        duration=flow.duration,
        packets_fwd=flow.pkt_count_fwd,
        bytes_fwd=flow.byte_count_fwd,
        packets_rev=flow.pkt_count_rev,
        bytes_rev=flow.byte_count_rev,
    )


# -- schema -------------------------------------------------------------------


def schema_rows() -> list[dict[str, str]]:
    """One entry per output column: name, family, unit, sanitation class, modes."""
    reduced = set(REDUCED_COLUMNS)
    rows = []
    for name in IDENTITY_COLUMNS:
        unit = "s" if name == "first_ts" else "1"
        rows.append(dict(column=name, family="identity", unit=unit, nan_value="", modes="full reduced"))
    for fam in FAMILIES:
        for feat in feature_names(fam.name):
            col = column_name(fam.name, feat)
            rows.append(dict(
                column=col,
                family=fam.name,
                unit=_UNITS[fam.name].get(feat, _DEFAULT_UNIT[fam.name]),
                nan_value=_fmt_real(fam.nan_value),
                modes="full reduced" if col in reduced else "full",
            ))
    for name in DIAGNOSTIC_COLUMNS:
        rows.append(dict(column=name, family="diagnostic", unit="bytes", nan_value="", modes="full"))
    units = dict(flow_duration="s", flow_bytes_fwd="bytes", flow_bytes_rev="bytes")
    for name in CLASSIC_COLUMNS:
        rows.append(dict(column=name, family="classic", unit=units.get(name, "packets"),
                         nan_value="", modes="reduced"))
    return rows


def render_schema() -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=["column", "family", "unit", "nan_value", "modes"],
                            lineterminator="\n")
    writer.writeheader()
    writer.writerows(schema_rows())
    return buf.getvalue()


def shipped_schema() -> str:
    return resources.files(__package__).joinpath(SCHEMA_FILE).read_text()


# -- rows ---------------------------------------------------------------------


def _fmt_real(x: float) -> str:
    return f"{x + 0.0:.9g}"


def _round_real(x: float) -> float:
    return float(_fmt_real(x))


def _identity(key: FlowKey, first_ts: float) -> list:
    return [format_addr(key.addr_a), key.port_a, format_addr(key.addr_b), key.port_b,
            key.protocol, first_ts]


def full_row(fv: FeatureVector) -> list:
    diag = "" if fv.periodic_length is None else fv.periodic_length
    return _identity(fv.key, fv.first_ts) + fv.values() + [diag]


def reduced_row(rv: ReducedVector) -> list:
    values = list(vars(rv).values())[2:]
    return _identity(rv.key, rv.first_ts) + list(values)


def _csv_cells(row: list) -> list[str]:
    cells = []
    for i, v in enumerate(row):
        if isinstance(v, float) and i != 5:
            cells.append(_fmt_real(v))
        else:
            # first_ts (column 5) keeps full precision: it is a join key.
            cells.append(repr(v) if isinstance(v, float) else str(v))
    return cells


def _json_value(i: int, v):
    if isinstance(v, float) and i != 5:
        return _round_real(v)
    if v == "":
        return None
    return v


def write_rows(vectors: Iterable, format: str, mode: str, sink: IO[str]) -> int:
    """Write one row per vector to ``sink`` and return the row count.

    Rows are sorted by (first_ts, flow key) first, so output does not
    depend on the order vectors were produced in. CSV output starts with
    a header row; JSONL has one object per flow keyed by column name.

    Raises:
        ExportError: the sink failed mid-write.
    """
    if format not in FORMATS:
        raise ValueError(f"unknown format {format!r}")
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    expected = FeatureVector if mode == "full" else ReducedVector
    items = sorted(vectors, key=lambda v: v.sort_key())
    for v in items:
        if not isinstance(v, expected):
            raise TypeError(f"{mode} mode expects {expected.__name__}, got {type(v).__name__}")
    columns = FULL_COLUMNS if mode == "full" else REDUCED_COLUMNS
    to_row = full_row if mode == "full" else reduced_row
    try:
        if format == "csv":
            writer = csv.writer(sink, lineterminator="\n")
            writer.writerow(columns)
            for v in items:
                writer.writerow(_csv_cells(to_row(v)))
        else:
            for v in items:
                obj = {c: _json_value(i, x) for i, (c, x) in enumerate(zip(columns, to_row(v)))}
                sink.write(json.dumps(obj, allow_nan=False) + "\n")
        sink.flush()
    except OSError as exc:
        raise ExportError(exc.errno, f"writing rows failed: {exc.strerror or exc}") from exc
    return len(items)
