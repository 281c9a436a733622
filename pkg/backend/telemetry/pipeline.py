"""
End-to-end detection pipeline.

    fleet ─▶ segment_series (per series, worker pool)
          ─▶ build_histogram ─▶ detect_spikes ─▶ label_events
          ─▶ knowledge graph (regions, bottom-up refresh, episodes)
          ─▶ EventReport

Per-series segmentation is the only parallel stage; its results come back
to this process and enter the histogram and the graph through one merge
point.

Usage
-----
    from telemetry.config import PipelineConfig
    from telemetry.pipeline import run_pipeline

    result = run_pipeline(PipelineConfig().validate(), fleet, seed=7)
    print(result.report.to_jsonl())
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np
from joblib import Parallel, delayed

from fleet.events import EventKind
from fleet.histogram import RegimeHistogram, build_histogram, timeline_bins
from fleet.labeling import label_events
from fleet.memory import PatternMemory
from fleet.spikes import detect_spikes
from metamodel.exchange import import_graph
from metamodel.graph import ABSTRACTION_OF, KnowledgeGraph
from metamodel.store import SubsymbolicStore
from segmentation.runner import SegmentationParams, segment_series
from sentinel.exceptions import SentinelError

from .config import PipelineConfig
from .exceptions import EmptyInput, PipelineStageError
from .ingest import fleet_digest
from .reports import EventReport, event_record, summarize_events

logger = logging.getLogger(__name__)

GOAL = 'network-health'
# below this many series the worker pool costs more than it saves
PARALLEL_MIN_SERIES = 64


@dataclass
class PipelineResult:
    config: PipelineConfig
    analyzed: list
    skipped: list
    changes: dict
    histogram: RegimeHistogram
    events: list
    graph: KnowledgeGraph
    memory: PatternMemory
    report: EventReport
    timings: dict = field(default_factory=dict)


def _segment_chunk(chunk, params: SegmentationParams):
    """Worker entry point; a failing series comes back as ``None`` and is redone in the parent."""
    out = []
    for series in chunk:
        try:
            out.append((series.series_id, segment_series(series, params)))
        except Exception:  # noqa: BLE001
            out.append((series.series_id, None))
    return out


def _segment_here(series, params):
    try:
        return segment_series(series, params)
    except Exception as exc:
        raise PipelineStageError('segmentation', series.series_id) from exc


def segment_fleet(fleet, config: PipelineConfig) -> dict:
    """series_id → list[RegimeChange], in fleet order."""
    params = config.segmentation_params()
    workers = config.resolved_workers
    if workers <= 1 or len(fleet) < PARALLEL_MIN_SERIES:
        return {s.series_id: _segment_here(s, params) for s in fleet}

    chunks = [list(c) for c in np.array_split(np.arange(len(fleet)), workers * 4) if c.size]
    parts = Parallel(n_jobs=workers)(
        delayed(_segment_chunk)([fleet[i] for i in chunk], params) for chunk in chunks
    )
    by_id = {s.series_id: s for s in fleet}
    changes = {}
    for part in parts:
        for sid, found in part:
            changes[sid] = found if found is not None else _segment_here(by_id[sid], params)
    return changes


def _group_key(config: PipelineConfig, series):
    return config.device_groups.get(series.series_id) or config.device_groups.get(series.source_id or '')


def device_keys(config: PipelineConfig, analyzed) -> dict[str, str]:
    """series_id -> key a series counts under in the histogram and in the fleet size."""
    return {s.series_id: _group_key(config, s) or s.series_id for s in analyzed}


def build_graph(config: PipelineConfig, analyzed, changes, histogram, events,
                expert_lines=None) -> KnowledgeGraph:
    store = SubsymbolicStore()
    for series in analyzed:
        store.add_series(series)
    store.set_histogram(histogram)
    graph = KnowledgeGraph(store)
    for series in analyzed:
        group = _group_key(config, series)
        label = f"{group or series.source_id or series.series_id}-behavior"
        graph.register_region(store.series_ref(series.series_id), label, aliases=(group,) if group else ())
    goal = graph.ensure_goal(GOAL)
    if expert_lines:
        import_graph(expert_lines, graph, expert=True)

    evidence = [c for sid in sorted(changes) for c in changes[sid]]
    graph.refresh_bottom_up(evidence + list(events), goal=goal)

    for event in events:
        if event.kind == EventKind.RECOVERY and event.paired_event is not None:
            onset, recovery = graph.event_node(event.paired_event), graph.event_node(event.event_id)
            if onset and recovery:
                episode = graph.abstract_over([onset, recovery], f"episode-{event.paired_event}",
                                              attributes={'onset': event.paired_event,
                                                          'recovery': event.event_id})
                graph.add_relation(episode, goal, ABSTRACTION_OF)
    return graph


def run_pipeline(config: PipelineConfig, fleet, *, seed=None, memory: PatternMemory | None = None,
                 expert_lines=None, histogram_path=None, graph_path=None) -> PipelineResult:
    """
    Parameters
    ----------
    config : validated PipelineConfig
    fleet : list[Series] on a common timeline
    seed : recorded in the report when the fleet was generated
    memory : recurrence memory carried over from earlier runs; a fresh one otherwise
    expert_lines : graph lines imported as expert knowledge before the refresh
    histogram_path, graph_path : where the caller writes those artifacts; recorded in the report

    Returns
    -------
    PipelineResult
    """
    config.validate()
    fleet = list(fleet)
    if not fleet:
        raise EmptyInput("fleet holds no series")
    started = time.perf_counter()
    timings = {}

    required = 2 * config.m
    analyzed = [s for s in fleet if len(s) >= required]
    skipped = sorted(s.series_id for s in fleet if len(s) < required)
    for sid in skipped:
        logger.warning("Series %s shorter than %d samples, skipped", sid, required)
    if not analyzed:
        raise EmptyInput(f"no series reaches the minimum length of {required} samples")

    tick = time.perf_counter()
    changes = segment_fleet(analyzed, config)
    timings['segmentation'] = time.perf_counter() - tick
    n_changes = sum(len(c) for c in changes.values())
    logger.info("Segmentation: %d change(s) over %d series in %.2fs",
                n_changes, len(analyzed), timings['segmentation'])

    tick = time.perf_counter()
    try:
        origin = min(s.start_timestamp for s in analyzed)
        horizon = max(s.end_timestamp for s in analyzed)
        device_of = device_keys(config, analyzed)
        histogram = build_histogram(
            (c for sid in sorted(changes) for c in changes[sid]),
            config.bin_width, origin=origin,
            n_bins=timeline_bins(horizon - origin, config.bin_width),
            group_of=device_of if config.device_groups else None,
        )
        fleet_size = len(set(device_of.values()))
        events = detect_spikes(
            histogram,
            baseline_window=config.baseline_window,
            k_mad=config.k_mad,
            min_fraction=config.min_fraction,
            fleet_size=fleet_size,
            coincidence_window=config.coincidence_window,
        )
        memory = memory if memory is not None else PatternMemory(
            config.no_interest_threshold, config.signature_jaccard)
        events = label_events(events, memory, config.recovery_horizon, config.recovery_jaccard)
    except SentinelError:
        raise
    except Exception as exc:
        raise PipelineStageError('aggregation') from exc
    timings['aggregation'] = time.perf_counter() - tick

    tick = time.perf_counter()
    try:
        graph = build_graph(config, analyzed, changes, histogram, events, expert_lines)
    except SentinelError:
        raise
    except Exception as exc:
        raise PipelineStageError('symbolization') from exc
    timings['symbolization'] = time.perf_counter() - tick
    logger.info("Aggregation %.2fs, symbolization %.2fs: %d event(s), graph %s",
                timings['aggregation'], timings['symbolization'], len(events), graph.counts_by_level())

    elapsed = time.perf_counter() - started
    run = {
        'config': config.as_block(),
        'config_hash': config.config_hash(),
        'seed': seed,
        'input_digest': fleet_digest(fleet),
        'series': {'analyzed': len(analyzed), 'skipped': skipped},
        'histogram': {
            'path': str(histogram_path) if histogram_path else None,
            'origin': histogram.origin,
            'bin_width': histogram.bin_width,
            'bins': histogram.n_bins,
            'total_changes': histogram.total,
        },
        'graph': {
            'path': str(graph_path) if graph_path else None,
            'levels': graph.counts_by_level(),
            'edges': sum(1 for _ in graph.edges()),
        },
        'generated_at': datetime.now(timezone.utc).isoformat(timespec='seconds'),
        'elapsed_seconds': round(elapsed, 3),
    }
    report = EventReport(
        run=run,
        events=[event_record(e, graph.event_node(e.event_id)) for e in events],
        summary={**summarize_events(events), 'series': len(analyzed), 'regime_changes': n_changes},
    )
    timings['total'] = elapsed
    return PipelineResult(
        config=config, analyzed=analyzed, skipped=skipped, changes=changes,
        histogram=histogram, events=events, graph=graph, memory=memory,
        report=report, timings=timings,
    )
