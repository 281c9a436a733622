"""
The ``Series`` value type: one device metric, uniformly sampled.

Usage
-----
    from timeseries.series import Series

    s = Series("edge-01/if3/rx", [0.2, 0.4, 0.1], sampling_interval=6.0)
    s.values           # read-only float64 array
    s.timestamp_of(2)  # start_timestamp + 2
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidSeries

DEFAULT_SAMPLING_INTERVAL = 6.0  # seconds


@dataclass(frozen=True, eq=False)
class Series:
    """
    Immutable uniformly-sampled series.

    ``start_timestamp`` is an integer index on the fleet timeline (one unit
    per sampling interval).  ``source_id`` names the metric a split series
    was cut from; it defaults to ``series_id``.
    """
    series_id: str
    values: np.ndarray
    sampling_interval: float = DEFAULT_SAMPLING_INTERVAL
    start_timestamp: int = 0
    source_id: str | None = field(default=None)

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise InvalidSeries(f"series {self.series_id}: values must be one-dimensional")
        if not np.all(np.isfinite(values)):
            raise InvalidSeries(f"series {self.series_id}: values contain NaN or infinite entries")
        if not self.sampling_interval > 0:
            raise InvalidSeries(
                f"series {self.series_id}: sampling_interval must be > 0, got {self.sampling_interval}"
            )
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)
        object.__setattr__(self, 'start_timestamp', int(self.start_timestamp))
        if self.source_id is None:
            object.__setattr__(self, 'source_id', self.series_id)

    def __len__(self):
        return int(self.values.size)

    def __repr__(self):
        return (
            f"Series({self.series_id!r}, n={len(self)}, "
            f"interval={self.sampling_interval}, start={self.start_timestamp})"
        )

    @property
    def end_timestamp(self) -> int:
        """Timeline index one past the last sample."""
        return self.start_timestamp + len(self)

    def timestamp_of(self, position: int) -> int:
        return self.start_timestamp + int(position)

    def window(self, start: int, stop: int) -> "Series":
        """Slice on sample positions, keeping timeline alignment."""
        start = max(0, int(start))
        stop = min(len(self), int(stop))
        return Series(
            self.series_id,
            self.values[start:stop],
            sampling_interval=self.sampling_interval,
            start_timestamp=self.start_timestamp + start,
            source_id=self.source_id,
        )

    def with_values(self, values) -> "Series":
        return Series(
            self.series_id,
            values,
            sampling_interval=self.sampling_interval,
            start_timestamp=self.start_timestamp,
            source_id=self.source_id,
        )

    def content_equal(self, other: "Series") -> bool:
        return (
            self.series_id == other.series_id
            and self.start_timestamp == other.start_timestamp
            and self.sampling_interval == other.sampling_interval
            and np.array_equal(self.values, other.values)
        )


def as_values(series) -> np.ndarray:
    """Float64 view of a ``Series`` or any 1-D array-like."""
    if isinstance(series, Series):
        return series.values
    values = np.asarray(series, dtype=np.float64)
    if values.ndim != 1:
        raise InvalidSeries("values must be one-dimensional")
    if not np.all(np.isfinite(values)):
        raise InvalidSeries("values contain NaN or infinite entries")
    return values
