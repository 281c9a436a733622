"""
Subsymbolic data the symbolic layer points into.

L0 nodes carry a ``PayloadRef``; the store resolves it back to a series
slice, an event record or a histogram bin range.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

from .exceptions import DanglingPayload

SERIES = 'series'
EVENT = 'event'
HISTOGRAM = 'histogram'


@dataclass(frozen=True)
class PayloadRef:
    kind: str
    ref: str
    start: int | None = None
    stop: int | None = None

    def key(self) -> str:
        span = '' if self.start is None else f"[{self.start}:{self.stop}]"
        return f"{self.kind}:{self.ref}{span}"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PayloadRef":
        return cls(kind=data['kind'], ref=str(data['ref']),
                   start=data.get('start'), stop=data.get('stop'))


class SubsymbolicStore:
    def __init__(self):
        self._series = {}
        self._events = {}
        self._histogram = None

    def add_series(self, series):
        self._series[series.series_id] = series

    def add_event(self, event):
        self._events[str(event.event_id)] = event

    def set_histogram(self, histogram):
        self._histogram = histogram

    def has_series(self, series_id) -> bool:
        return series_id in self._series

    def series_ref(self, series_id, start=None, stop=None) -> PayloadRef:
        series = self._series[series_id]
        return PayloadRef(
            SERIES, series_id,
            series.start_timestamp if start is None else start,
            series.end_timestamp if stop is None else stop,
        )

    def resolve(self, ref: PayloadRef):
        if ref.kind == SERIES and ref.ref in self._series:
            series = self._series[ref.ref]
            if ref.start is None:
                return series
            lo, hi = ref.start - series.start_timestamp, ref.stop - series.start_timestamp
            if 0 <= lo < hi <= len(series):
                return series.window(lo, hi)
        elif ref.kind == EVENT and ref.ref in self._events:
            return self._events[ref.ref]
        elif ref.kind == HISTOGRAM and self._histogram is not None:
            lo = 0 if ref.start is None else ref.start
            hi = self._histogram.n_bins if ref.stop is None else ref.stop
            if 0 <= lo < hi <= self._histogram.n_bins:
                return self._histogram.counts[lo:hi]
        raise DanglingPayload(f"payload {ref.key()} does not resolve")
