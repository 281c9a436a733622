"""
Histogram of regime changes on the fleet timeline.

Each bin holds the set of series (or device groups) that changed inside
it, so a series counts once per bin however many changes it produced
there.  Partial histograms built by independent workers combine with
``merge``, which is associative and commutative.

Usage
-----
    from fleet.histogram import build_histogram

    hist = build_histogram(changes, bin_width=1, n_bins=300)
    hist.counts          # numpy int array
    hist.to_tsv()        # "bin\\tcount" rows for plotting
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np

from segmentation.regimes import RegimeChange

from .exceptions import MixedTimelines

# relative disagreement tolerated between sampling intervals
INTERVAL_TOLERANCE = 0.01


def _compatible_interval(a: float | None, b: float | None) -> float | None:
    if a is None:
        return b
    if b is None:
        return a
    if abs(a - b) > INTERVAL_TOLERANCE * max(abs(a), abs(b)):
        raise MixedTimelines(f"sampling intervals {a} and {b} differ by more than 1%")
    return a


@dataclass(frozen=True)
class RegimeHistogram:
    bin_width: int = 1
    origin: int = 0
    n_bins: int = 0
    contributors: Mapping[int, frozenset] = field(default_factory=dict)
    sampling_interval: float | None = None

    @property
    def counts(self) -> np.ndarray:
        counts = np.zeros(self.n_bins, dtype=np.int64)
        for b, members in self.contributors.items():
            counts[b] = len(members)
        return counts

    @property
    def total(self) -> int:
        return sum(len(members) for members in self.contributors.values())

    def bin_start(self, b: int) -> int:
        """Timeline index where bin ``b`` begins."""
        return self.origin + b * self.bin_width

    def bin_of(self, timestamp: int) -> int:
        return (int(timestamp) - self.origin) // self.bin_width

    def members(self, b: int) -> frozenset:
        return self.contributors.get(b, frozenset())

    def merge(self, other: "RegimeHistogram") -> "RegimeHistogram":
        if (self.bin_width, self.origin) != (other.bin_width, other.origin):
            raise MixedTimelines(
                f"cannot merge histograms with (bin_width, origin) "
                f"{(self.bin_width, self.origin)} and {(other.bin_width, other.origin)}"
            )
        interval = _compatible_interval(self.sampling_interval, other.sampling_interval)
        merged = dict(self.contributors)
        for b, members in other.contributors.items():
            merged[b] = merged.get(b, frozenset()) | members
        return RegimeHistogram(
            bin_width=self.bin_width,
            origin=self.origin,
            n_bins=max(self.n_bins, other.n_bins),
            contributors=merged,
            sampling_interval=interval,
        )

    def to_tsv(self) -> str:
        rows = ["bin\tcount"]
        rows.extend(f"{self.bin_start(b)}\t{c}" for b, c in enumerate(self.counts.tolist()))
        return "\n".join(rows) + "\n"


def build_histogram(changes: Iterable[RegimeChange], bin_width: int = 1, *,
                    origin: int = 0, n_bins: int | None = None,
                    group_of: Callable[[str], str] | Mapping[str, str] | None = None,
                    ) -> RegimeHistogram:
    """
    Parameters
    ----------
    changes : iterable of RegimeChange on the common fleet timeline
    bin_width : int – timestamps per bin (≥ 1)
    origin : int – timeline index of bin 0
    n_bins : int, optional – histogram length; defaults to the last occupied bin + 1
    group_of : mapping or callable, optional – series_id → dedup key
        (device grouping); defaults to the series_id itself
    """
    bin_width = int(bin_width)
    if bin_width < 1:
        raise MixedTimelines(f"bin_width must be >= 1, got {bin_width}")
    if group_of is None:
        key = str
    elif callable(group_of):
        key = group_of
    else:
        key = lambda sid: group_of.get(sid, sid)  # noqa: E731

    bins: dict[int, set] = {}
    interval = None
    for change in changes:
        interval = _compatible_interval(interval, change.sampling_interval)
        offset = int(change.timestamp) - origin
        if offset < 0:
            raise MixedTimelines(
                f"change on {change.series_id} at {change.timestamp} precedes the histogram origin {origin}"
            )
        bins.setdefault(offset // bin_width, set()).add(key(change.series_id))

    last = max(bins) + 1 if bins else 0
    if n_bins is None:
        n_bins = last
    elif n_bins < last:
        n_bins = last
    return RegimeHistogram(
        bin_width=bin_width,
        origin=origin,
        n_bins=int(n_bins),
        contributors={b: frozenset(s) for b, s in sorted(bins.items())},
        sampling_interval=interval,
    )


def timeline_bins(timeline_length: int, bin_width: int) -> int:
    return int(math.ceil(timeline_length / bin_width)) if timeline_length > 0 else 0
