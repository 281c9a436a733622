"""
Scenario harness: generate, inject, run the full pipeline, score.

An onset counts as detected when an event's detection bin lies in
[start_ts, start_ts + 10] and at least half of its participants are
affected series.  A recovery counts when such an event lies in
[end_ts, end_ts + 10].  At 6 s sampling, 10 timestamps is one minute.

Usage
-----
    from simulator.catalog import build_catalog
    from simulator.harness import run_scenarios

    report = run_scenarios(build_catalog(), FleetSpec(seed=7), null_runs=20)
    report.summary_line    # "30/30 detected"
"""

import logging
from dataclasses import asdict, dataclass, field, replace

from joblib import Parallel, delayed

from fleet.events import EventKind
from telemetry.config import PipelineConfig
from telemetry.pipeline import run_pipeline
from telemetry.reports import SCHEMA_VERSION, dumps

from .generator import FleetSpec, generate_fleet
from .scenarios import InjectionScenario, inject, plan_injection

logger = logging.getLogger(__name__)

DETECTION_BOUND = 10
MIN_AFFECTED_SHARE = 0.5


@dataclass(frozen=True)
class ScenarioOutcome:
    scenario_id: str
    event_kind: str
    start_ts: int
    end_ts: int
    affected: int
    detected: bool
    detection_bin: int | None
    detection_delay: int | None
    recovery_detected: bool
    recovery_bin: int | None
    recovery_delay: int | None
    recovery_paired: bool
    events: int
    unmatched_events: int

    def to_dict(self) -> dict:
        return {'record': 'scenario', **asdict(self)}


@dataclass(frozen=True)
class NullOutcome:
    seed: int
    events: int
    interest_events: int

    def to_dict(self) -> dict:
        return {'record': 'null_run', **asdict(self)}


@dataclass
class DetectionReport:
    seed: int
    config_hash: str
    outcomes: list = field(default_factory=list)
    null_runs: list = field(default_factory=list)

    @property
    def detected(self) -> int:
        return sum(1 for o in self.outcomes if o.detected)

    @property
    def recovered(self) -> int:
        return sum(1 for o in self.outcomes if o.recovery_detected)

    @property
    def false_positives(self) -> int:
        return sum(n.interest_events for n in self.null_runs)

    @property
    def summary_line(self) -> str:
        return f"{self.detected}/{len(self.outcomes)} detected"

    def summary(self) -> dict:
        delays = [o.detection_delay for o in self.outcomes if o.detection_delay is not None]
        return {
            'record': 'summary',
            'schema_version': SCHEMA_VERSION,
            'seed': self.seed,
            'config_hash': self.config_hash,
            'summary': self.summary_line,
            'recoveries': f"{self.recovered}/{len(self.outcomes)} recovered",
            'max_detection_delay': max(delays) if delays else None,
            'null_runs': len(self.null_runs),
            'false_positive_events': self.false_positives,
        }

    def lines(self) -> list[str]:
        records = [o.to_dict() for o in self.outcomes] + [n.to_dict() for n in self.null_runs]
        return [dumps(r) for r in records] + [dumps(self.summary())]

    def write(self, path) -> int:
        lines = self.lines()
        with open(path, 'w', encoding='utf-8') as handle:
            handle.write("\n".join(lines) + "\n")
        return len(lines)


def _affected_share(event, affected: set) -> float:
    if not event.participants:
        return 0.0
    return len(event.participants & affected) / len(event.participants)


def score_events(scenario: InjectionScenario, affected, events) -> dict:
    affected = set(affected)
    relevant = [e for e in events if _affected_share(e, affected) >= MIN_AFFECTED_SHARE]
    onset = next((e for e in relevant
                  if scenario.start_ts <= e.detection_bin <= scenario.start_ts + DETECTION_BOUND), None)
    recovery = next((e for e in relevant
                     if scenario.end_ts <= e.detection_bin <= scenario.end_ts + DETECTION_BOUND), None)
    matched = {e.event_id for e in (onset, recovery) if e is not None}
    return {
        'detected': onset is not None,
        'detection_bin': onset.detection_bin if onset else None,
        'detection_delay': onset.detection_bin - scenario.start_ts if onset else None,
        'recovery_detected': recovery is not None,
        'recovery_bin': recovery.detection_bin if recovery else None,
        'recovery_delay': recovery.detection_bin - scenario.end_ts if recovery else None,
        'recovery_paired': bool(recovery and onset and recovery.kind == EventKind.RECOVERY
                                and recovery.paired_event == onset.event_id),
        'events': len(events),
        'unmatched_events': sum(1 for e in events if e.event_id not in matched),
    }


def run_scenario(scenario: InjectionScenario, spec: FleetSpec, config: PipelineConfig) -> ScenarioOutcome:
    fleet = generate_fleet(spec)
    plan = plan_injection(fleet, scenario, seed=spec.seed)
    injected = inject(fleet, scenario, seed=spec.seed, plan=plan)
    result = run_pipeline(config, injected, seed=spec.seed)
    scored = score_events(scenario, plan.affected, result.events)
    logger.info("%s: detected=%s delay=%s recovery=%s",
                scenario.scenario_id, scored['detected'], scored['detection_delay'], scored['recovery_detected'])
    return ScenarioOutcome(
        scenario_id=scenario.scenario_id,
        event_kind=scenario.event_kind,
        start_ts=scenario.start_ts,
        end_ts=scenario.end_ts,
        affected=len(plan.affected),
        **scored,
    )


def run_null(spec: FleetSpec, config: PipelineConfig) -> NullOutcome:
    result = run_pipeline(config, generate_fleet(spec), seed=spec.seed)
    interest = sum(1 for e in result.events if e.kind == EventKind.INTEREST)
    return NullOutcome(seed=spec.seed, events=len(result.events), interest_events=interest)


def run_scenarios(catalog, spec: FleetSpec, config: PipelineConfig | None = None,
                  null_runs: int = 0, workers: int = 1) -> DetectionReport:
    """
    Each scenario runs on its own copy of the fleet, so scenarios may run in
    parallel; the pipeline inside each one then stays single-process.
    """
    config = (config or PipelineConfig()).validate()
    spec.validate()
    inner = replace(config, workers=1) if workers > 1 else config
    null_specs = [replace(spec, seed=spec.seed + 1 + r) for r in range(null_runs)]

    if workers > 1:
        outcomes = Parallel(n_jobs=workers)(delayed(run_scenario)(s, spec, inner) for s in catalog)
        nulls = Parallel(n_jobs=workers)(delayed(run_null)(s, inner) for s in null_specs)
    else:
        outcomes = [run_scenario(s, spec, inner) for s in catalog]
        nulls = [run_null(s, inner) for s in null_specs]

    report = DetectionReport(seed=spec.seed, config_hash=config.config_hash(),
                             outcomes=list(outcomes), null_runs=list(nulls))
    logger.info("Scenario run: %s, %d false positive(s) over %d null run(s)",
                report.summary_line, report.false_positives, null_runs)
    return report
