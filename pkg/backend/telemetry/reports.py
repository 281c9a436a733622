"""
Line-oriented JSON reports.

EventReport layout (``schema_version`` 1):

    {"record": "run", "config": {...}, "config_hash": "...", "input_digest": "...", ...}
    {"record": "event", "event_id": 1, "kind": "interest", "suggested_action": "investigate", ...}
    ...
    {"record": "summary", "events": 2, "interest": 1, ...}

``generated_at`` and ``elapsed_seconds`` on the run record are the only
fields that differ between two runs over the same input and config.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from fleet.events import EventKind, EventOfInterest
from segmentation.arcs import arc_curve, corrected_arc_curve
from segmentation.regimes import extract_regimes
from timeseries.profile import matrix_profile, top_discords
from timeseries.series import Series

SCHEMA_VERSION = 1
VOLATILE_FIELDS = ('generated_at', 'elapsed_seconds')

SUGGESTED_ACTIONS = {
    EventKind.INTEREST: 'investigate',
    EventKind.RECOVERY: 'confirm_recovery',
    EventKind.NO_INTEREST: 'none',
}


def dumps(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(',', ':'), default=str)


def suggested_action(event: EventOfInterest) -> str:
    return SUGGESTED_ACTIONS.get(event.kind, 'investigate')


def event_record(event: EventOfInterest, graph_node: str | None = None) -> dict:
    return {
        'record': 'event',
        **event.to_dict(),
        'suggested_action': suggested_action(event),
        'graph_node': graph_node,
    }


@dataclass
class EventReport:
    run: dict
    events: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def records(self):
        yield {'record': 'run', 'schema_version': SCHEMA_VERSION, **self.run}
        yield from self.events
        yield {'record': 'summary', 'schema_version': SCHEMA_VERSION, **self.summary}

    def lines(self) -> list[str]:
        return [dumps(r) for r in self.records()]

    def stable_lines(self) -> list[str]:
        """Lines with the run-time fields removed, for comparing two runs."""
        out = []
        for record in self.records():
            out.append(dumps({k: v for k, v in record.items() if k not in VOLATILE_FIELDS}))
        return out

    def to_jsonl(self) -> str:
        return "\n".join(self.lines()) + "\n"

    def write(self, path) -> int:
        lines = self.lines()
        with open(path, 'w', encoding='utf-8') as handle:
            handle.write("\n".join(lines) + "\n")
        return len(lines)


def summarize_events(events) -> dict:
    kinds = [e.kind.value if e.kind else 'unlabelled' for e in events]
    return {
        'events': len(events),
        'interest': kinds.count(EventKind.INTEREST.value),
        'no_interest': kinds.count(EventKind.NO_INTEREST.value),
        'recovery': kinds.count(EventKind.RECOVERY.value),
    }


def _finite(values) -> list:
    return [round(float(v), 6) if np.isfinite(v) else None for v in values]


def profile_record(series: Series, config, discords: int = 3) -> dict:
    """Matrix profile, corrected arc curve and discords of one series, for the ``profile`` command."""
    params = config.segmentation_params()
    profile = matrix_profile(series, params.m, exclusion_radius=params.exclusion_radius,
                             max_offset=params.arc_horizon)
    cac = corrected_arc_curve(arc_curve(profile), params.edge_exclusion)
    changes = extract_regimes(cac, params.threshold, params.regime_exclusion, series=series)
    return {
        'record': 'profile',
        'schema_version': SCHEMA_VERSION,
        'series_id': series.series_id,
        'm': profile.m,
        'exclusion_radius': profile.exclusion_radius,
        'max_offset': profile.max_offset,
        'distances': _finite(profile.distances),
        'indices': profile.indices.tolist(),
        'cac': _finite(cac.values),
        'discords': [asdict(d) for d in top_discords(profile, discords)],
        'regime_changes': [c.to_dict() for c in changes],
    }
