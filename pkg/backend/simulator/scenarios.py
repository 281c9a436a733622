"""
Injection scenarios and the ``inject`` operation.

A scenario names an event kind, a timeline window [start_ts, end_ts) and
one or more effects.  Affected series are either listed or drawn as a
fraction of the fleet.  Every affected series gets its own onset offset,
uniform in [0, jitter] samples, applied to both ends of its window: a
single incident reaches devices one after another.

Usage
-----
    from simulator.scenarios import EffectSpec, InjectionScenario, inject

    scenario = InjectionScenario("s-01", "port_shut_down", 50, 100,
                                 effects=(EffectSpec("drop_to_floor", 1.0),))
    injected = inject(fleet, scenario, seed=7)
"""

import logging
import zlib
from dataclasses import dataclass, field

import numpy as np

from timeseries.series import Series

from .effects import EFFECTS, PARAMETERS
from .exceptions import InvalidCatalog, ScenarioOutOfRange

logger = logging.getLogger(__name__)

DEFAULT_JITTER = 8


@dataclass(frozen=True)
class EffectSpec:
    effect: str
    magnitude: float = 1.0
    params: dict = field(default_factory=dict)

    def validate(self):
        if self.effect not in EFFECTS:
            raise InvalidCatalog(f"unknown effect {self.effect!r}")
        if not np.isfinite(self.magnitude) or self.magnitude < 0:
            raise InvalidCatalog(f"{self.effect}: magnitude must be a finite number >= 0")
        extra = sorted(set(self.params) - set(PARAMETERS[self.effect]))
        if extra:
            raise InvalidCatalog(f"{self.effect}: unknown parameter(s) {', '.join(extra)}")
        return self

    def to_dict(self) -> dict:
        return {'effect': self.effect, 'magnitude': self.magnitude, **self.params}


@dataclass(frozen=True)
class InjectionScenario:
    scenario_id: str
    event_kind: str
    start_ts: int
    end_ts: int
    effects: tuple = ()
    affected_fraction: float | None = 0.8
    affected_series: tuple | None = None
    jitter: int = DEFAULT_JITTER

    def to_dict(self) -> dict:
        data = {
            'scenario_id': self.scenario_id,
            'event_kind': self.event_kind,
            'start_ts': self.start_ts,
            'end_ts': self.end_ts,
            'effects': [e.to_dict() for e in self.effects],
        }
        if self.affected_series is not None:
            data['affected_series'] = list(self.affected_series)
        else:
            data['affected_fraction'] = self.affected_fraction
        if self.jitter != DEFAULT_JITTER:
            data['jitter'] = self.jitter
        return data


@dataclass(frozen=True)
class InjectionPlan:
    """Ground truth of one injection: which series, and each one's onset offset."""
    scenario_id: str
    affected: tuple
    offsets: dict

    def onset_of(self, series_id: str, start_ts: int) -> int:
        return start_ts + self.offsets[series_id]


def _scenario_rng(scenario: InjectionScenario, seed: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), zlib.crc32(scenario.scenario_id.encode())])


def plan_injection(fleet, scenario: InjectionScenario, seed: int = 0) -> InjectionPlan:
    ids = [s.series_id for s in fleet]
    length = min((s.end_timestamp for s in fleet), default=0)
    if not 0 <= scenario.start_ts < scenario.end_ts <= length:
        raise ScenarioOutOfRange(
            f"{scenario.scenario_id}: window [{scenario.start_ts}, {scenario.end_ts}) "
            f"does not fit a fleet of length {length}"
        )
    if scenario.jitter < 0:
        raise ScenarioOutOfRange(f"{scenario.scenario_id}: jitter must be >= 0")
    for effect in scenario.effects:
        effect.validate()

    rng = _scenario_rng(scenario, seed)
    if scenario.affected_series is not None:
        affected = tuple(sorted(set(scenario.affected_series)))
        unknown = sorted(set(affected) - set(ids))
        if unknown:
            raise ScenarioOutOfRange(f"{scenario.scenario_id}: series not in fleet: {', '.join(unknown[:5])}")
    else:
        fraction = scenario.affected_fraction
        if fraction is None or not 0 < fraction <= 1:
            raise ScenarioOutOfRange(f"{scenario.scenario_id}: affected_fraction must be in (0, 1]")
        count = max(1, int(round(fraction * len(ids))))
        affected = tuple(sorted(rng.choice(sorted(ids), size=count, replace=False).tolist()))
    if not affected:
        raise ScenarioOutOfRange(f"{scenario.scenario_id}: no affected series")
    offsets = {sid: int(rng.integers(0, scenario.jitter + 1)) for sid in affected}
    return InjectionPlan(scenario.scenario_id, affected, offsets)


def inject(fleet, scenario: InjectionScenario, seed: int = 0,
           plan: InjectionPlan | None = None) -> list[Series]:
    """
    Returns
    -------
    list[Series]: the fleet with the scenario applied.  Series outside the
    affected set are returned as the very same objects.
    """
    plan = plan if plan is not None else plan_injection(fleet, scenario, seed)
    rng = _scenario_rng(scenario, seed)
    affected = set(plan.affected)
    out = []
    for series in fleet:
        if series.series_id not in affected:
            out.append(series)
            continue
        values = np.array(series.values, dtype=np.float64)
        scale = max(float(values.std()), 1e-6)
        onset = min(len(series), max(0, plan.onset_of(series.series_id, scenario.start_ts) - series.start_timestamp))
        stop = min(len(series), scenario.end_ts + plan.offsets[series.series_id] - series.start_timestamp)
        series_rng = np.random.default_rng([int(rng.integers(2**32)), zlib.crc32(series.series_id.encode())])
        for effect in scenario.effects:
            if effect.magnitude == 0 or stop <= onset:
                continue
            EFFECTS[effect.effect](values, onset, stop, effect.magnitude, scale, series_rng, **effect.params)
        out.append(series.with_values(values))
    logger.debug("Injected %s (%s) into %d series", scenario.scenario_id, scenario.event_kind, len(affected))
    return out
