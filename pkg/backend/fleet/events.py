from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum


class EventKind(str, Enum):
    INTEREST = 'interest'
    NO_INTEREST = 'no_interest'
    RECOVERY = 'recovery'


@dataclass(frozen=True)
class EventOfInterest:
    """
    A fleet-level spike in the regime-change histogram.

    Bins are reported as timeline indices (the start of the histogram bin).
    ``kind`` stays ``None`` until recovery pairing or classification sets it.
    """
    event_id: int
    peak_bin: int
    detection_bin: int
    magnitude: int
    participants: frozenset
    start_bin: int
    end_bin: int
    threshold: float
    kind: EventKind | None = None
    paired_event: int | None = None
    explanation: dict = field(default_factory=dict, compare=False)

    def with_changes(self, **changes) -> "EventOfInterest":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            'event_id': self.event_id,
            'kind': self.kind.value if self.kind else None,
            'peak_bin': self.peak_bin,
            'detection_bin': self.detection_bin,
            'start_bin': self.start_bin,
            'end_bin': self.end_bin,
            'magnitude': self.magnitude,
            'threshold': self.threshold,
            'participants': sorted(self.participants),
            'paired_event': self.paired_event,
            'explanation': self.explanation,
        }


def jaccard(a: frozenset, b: frozenset) -> float:
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)
