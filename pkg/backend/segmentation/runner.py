"""
Per-series segmentation entry point.

``segment_series`` is a pure function of (series, params) and imports no
Django state, so it can be shipped to joblib worker processes as is.
"""
from __future__ import annotations

from dataclasses import dataclass

from timeseries.profile import default_exclusion_radius, matrix_profile
from timeseries.series import Series

from .arcs import arc_curve, corrected_arc_curve
from .regimes import DEFAULT_THRESHOLD, RegimeChange, extract_regimes


@dataclass(frozen=True)
class SegmentationParams:
    m: int = 25
    exclusion_radius: int | None = None
    arc_horizon: int | None = None
    threshold: float = DEFAULT_THRESHOLD
    regime_exclusion: int | None = None
    edge_exclusion: int | None = None

    @property
    def resolved_exclusion_radius(self) -> int:
        if self.exclusion_radius is None:
            return default_exclusion_radius(self.m)
        return self.exclusion_radius


def segment_series(series: Series, params: SegmentationParams) -> list[RegimeChange]:
    profile = matrix_profile(
        series, params.m,
        exclusion_radius=params.exclusion_radius,
        max_offset=params.arc_horizon,
    )
    cac = corrected_arc_curve(arc_curve(profile), params.edge_exclusion)
    return extract_regimes(cac, params.threshold, params.regime_exclusion, series=series)
