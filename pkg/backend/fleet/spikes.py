"""
Spike detection on the regime-change histogram and onset/recovery pairing.

Spike rule
----------
The statistic S[b] is the number of distinct series with a regime change
in the trailing ``coincidence_window`` bins (b − w, b]; w = 1 is the plain
per-bin count.  Bin b fires when

    S[b] > max(median + k_mad · MAD, min_fraction · fleet_size)

where median and MAD are taken over S in the ``baseline_window`` bins
before b (no baseline yet: the floor alone applies).  Consecutive firing
bins form one event; firing runs separated by fewer than
``coincidence_window`` quiet bins are bridged into the same event.  The
participants are the series changing in the bins that fed S while the
event fired, (first − w, last].
"""
from __future__ import annotations

import logging

import numpy as np
import pandas as pd
from scipy.stats import median_abs_deviation

from .events import EventKind, EventOfInterest, jaccard
from .exceptions import InvalidFleetSize
from .histogram import RegimeHistogram

logger = logging.getLogger(__name__)

DEFAULT_BASELINE_WINDOW = 100
DEFAULT_K_MAD = 5.0
DEFAULT_MIN_FRACTION = 0.2
DEFAULT_RECOVERY_HORIZON = 200
DEFAULT_RECOVERY_JACCARD = 0.5


def coincidence_counts(hist: RegimeHistogram, window: int = 1) -> np.ndarray:
    """S[b]: distinct contributors with a change in bins (b − window, b]."""
    n = hist.n_bins
    per_member: dict[str, list[int]] = {}
    for b, members in hist.contributors.items():
        for member in members:
            per_member.setdefault(member, []).append(b)

    diff = np.zeros(n + 1, dtype=np.int64)
    for bins in per_member.values():
        bins.sort()
        start = end = None
        for b in bins:
            reach = min(b + window - 1, n - 1)
            if start is None:
                start, end = b, reach
            elif b <= end + 1:
                end = max(end, reach)
            else:
                diff[start] += 1
                diff[end + 1] -= 1
                start, end = b, reach
        if start is not None:
            diff[start] += 1
            diff[end + 1] -= 1
    return np.cumsum(diff[:-1])


def _trailing_baseline(stat: np.ndarray, baseline_window: int):
    past = pd.Series(stat, dtype=np.float64).shift(1).rolling(baseline_window, min_periods=1)
    median = past.median().to_numpy()
    mad = past.apply(
        lambda w: median_abs_deviation(w, scale=1.0, nan_policy='omit'), raw=True
    ).to_numpy()
    return median, mad


def detect_spikes(hist: RegimeHistogram, baseline_window: int = DEFAULT_BASELINE_WINDOW,
                  k_mad: float = DEFAULT_K_MAD, min_fraction: float = DEFAULT_MIN_FRACTION,
                  fleet_size: int = 1, coincidence_window: int = 1,
                  first_event_id: int = 1) -> list[EventOfInterest]:
    """
    Returns
    -------
    list[EventOfInterest] with ``kind`` unset, ordered by detection bin.
    """
    if fleet_size < 1:
        raise InvalidFleetSize(fleet_size)
    if hist.n_bins == 0:
        return []

    counts = hist.counts
    stat = coincidence_counts(hist, coincidence_window)
    median, mad = _trailing_baseline(stat, baseline_window)
    floor = min_fraction * fleet_size
    no_baseline = np.isnan(median)
    threshold = np.where(no_baseline, floor, np.maximum(np.nan_to_num(median) + k_mad * np.nan_to_num(mad), floor))
    firing = np.flatnonzero(stat > threshold)

    events: list[EventOfInterest] = []
    # a gap of g quiet bins between firing bins means a step of g + 1
    groups = np.split(firing, np.flatnonzero(np.diff(firing) > coincidence_window) + 1) if firing.size else []
    for group in groups:
        detect, last = int(group[0]), int(group[-1])
        lo = max(0, detect - coincidence_window + 1)
        peak = lo + int(np.argmax(counts[lo:last + 1]))
        participants = frozenset().union(*(hist.members(b) for b in range(lo, last + 1)))
        event = EventOfInterest(
            event_id=first_event_id + len(events),
            peak_bin=hist.bin_start(peak),
            detection_bin=hist.bin_start(detect),
            magnitude=int(stat[detect:last + 1].max()),
            participants=participants,
            start_bin=hist.bin_start(detect),
            end_bin=hist.bin_start(last),
            threshold=float(threshold[detect]),
            explanation={
                'rule': 'distinct series with a regime change in the trailing '
                        'coincidence window exceeded max(median + k_mad*MAD, min_fraction*fleet_size)',
                'statistic_at_detection': int(stat[detect]),
                'threshold': float(threshold[detect]),
                'baseline_median': None if no_baseline[detect] else float(median[detect]),
                'baseline_mad': None if no_baseline[detect] else float(mad[detect]),
                'floor': float(floor),
                'k_mad': float(k_mad),
                'min_fraction': float(min_fraction),
                'fleet_size': int(fleet_size),
                'coincidence_window': int(coincidence_window),
                'baseline_window': int(baseline_window),
            },
        )
        events.append(event)
    logger.info("Spike detection: %d event(s) over %d bins (floor %.1f)", len(events), hist.n_bins, floor)
    return events


# ── Recovery pairing ──────────────────────────────────────────────

def find_onset(event: EventOfInterest, earlier, horizon: int = DEFAULT_RECOVERY_HORIZON,
               min_jaccard: float = DEFAULT_RECOVERY_JACCARD) -> EventOfInterest | None:
    """Best open onset for ``event``: highest participant Jaccard, earliest on ties."""
    best, best_score = None, -1.0
    for onset in earlier:
        if onset.kind not in (None, EventKind.INTEREST) or onset.paired_event is not None:
            continue
        gap = event.detection_bin - onset.detection_bin
        if gap <= 0 or gap > horizon:
            continue
        score = jaccard(event.participants, onset.participants)
        if score >= min_jaccard and score > best_score:
            best, best_score = onset, score
    return best


def mark_recovery(event: EventOfInterest, onset: EventOfInterest):
    """Returns (recovery, closed onset)."""
    score = jaccard(event.participants, onset.participants)
    recovery = event.with_changes(
        kind=EventKind.RECOVERY,
        paired_event=onset.event_id,
        explanation={
            **event.explanation,
            'recovery_of': onset.event_id,
            'participant_jaccard': round(score, 6),
        },
    )
    return recovery, onset.with_changes(paired_event=event.event_id)


def pair_recovery(events, prior_event_horizon: int = DEFAULT_RECOVERY_HORIZON,
                  min_jaccard: float = DEFAULT_RECOVERY_JACCARD) -> list[EventOfInterest]:
    ordered = sorted(events, key=lambda ev: (ev.detection_bin, ev.event_id))
    done: dict[int, EventOfInterest] = {}
    for event in ordered:
        onset = find_onset(event, done.values(), prior_event_horizon, min_jaccard)
        if onset is not None:
            event, done[onset.event_id] = mark_recovery(event, onset)
        done[event.event_id] = event
    return [done[ev.event_id] for ev in ordered]
