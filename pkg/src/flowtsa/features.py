"""Per-flow feature extraction: every family for one flow record."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .behavior import PeriodicityParams
from .export import FeatureVector
from .flowtable import FlowRecord
from .spectral import ROLLOFF
from .temporal import StationarityParams

BURSTINESS_SOURCES = ("values", "time_diffs")


@dataclass(frozen=True)
class FeatureConfig:
    """Tunables of the feature families.

    ``burstiness_source`` selects the series burstiness is computed on:
    payload sizes (default) or inter-packet gaps.
    """

    oversample: float = 4.0
    rolloff: float = ROLLOFF
    stationarity: StationarityParams = field(default_factory=StationarityParams)
    periodicity: PeriodicityParams = field(default_factory=PeriodicityParams)
    burstiness_source: str = "values"

    def __post_init__(self):
        if self.oversample < 1:
            raise ValueError("oversample must be >= 1")
        if not 0 < self.rolloff <= 1:
            raise ValueError("rolloff must be in (0, 1]")
        if self.burstiness_source not in BURSTINESS_SOURCES:
            raise ValueError(f"burstiness_source must be one of {BURSTINESS_SOURCES}")


def extract_features(flow: FlowRecord, config: FeatureConfig = FeatureConfig()) -> FeatureVector:
    """Raw (unsanitised) feature vector of one flow."""
    if len(flow) == 0:
        raise ValueError("cannot extract features from an empty flow")
    st, pe = config.stationarity, config.periodicity
    out, length = _kernels.flow_kernel(
        np.ascontiguousarray(flow.times, dtype=np.float64),
        np.ascontiguousarray(flow.lengths, dtype=np.int64),
        np.ascontiguousarray(flow.directions, dtype=np.int8),
        float(config.oversample), float(config.rolloff),
        st.segments, st.max_mean_diff, st.max_var_diff, st.min_points,
        pe.min_occurrences, pe.max_cv, config.burstiness_source == "time_diffs",
    )
    return FeatureVector.from_array(flow.key, flow.first_ts, out.tolist(), None if length < 0 else int(length))
