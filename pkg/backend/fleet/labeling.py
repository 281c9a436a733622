"""
Sequential labelling of detected events: each event, in detection order,
is first tested as the recovery of an earlier open onset; otherwise it is
classified against the recurrence memory.
"""
from __future__ import annotations

from .events import EventOfInterest
from .memory import PatternMemory, classify_event
from .spikes import (
    DEFAULT_RECOVERY_HORIZON,
    DEFAULT_RECOVERY_JACCARD,
    find_onset,
    mark_recovery,
)


def label_events(events, memory: PatternMemory,
                 prior_event_horizon: int = DEFAULT_RECOVERY_HORIZON,
                 min_jaccard: float = DEFAULT_RECOVERY_JACCARD) -> list[EventOfInterest]:
    ordered = sorted(events, key=lambda ev: (ev.detection_bin, ev.event_id))
    done: dict[int, EventOfInterest] = {}
    for event in ordered:
        onset = find_onset(event, done.values(), prior_event_horizon, min_jaccard)
        if onset is not None:
            event, done[onset.event_id] = mark_recovery(event, onset)
        else:
            event, memory = classify_event(event, memory)
        done[event.event_id] = event
    return [done[ev.event_id] for ev in ordered]
