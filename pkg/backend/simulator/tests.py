"""
Tests for the fleet generator, fault injection and the scenario harness.
Run with: python manage.py test simulator
"""
import json
import os
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase, tag

from segmentation.runner import segment_series
from telemetry.config import PipelineConfig
from telemetry.pipeline import run_pipeline
from timeseries.series import Series

from .catalog import NAMED_EVENTS, build_catalog, dump_catalog, load_catalog, parse_catalog, write_catalog
from .effects import EFFECTS, MIN_DETECTABLE_MAGNITUDE
from .exceptions import InvalidCatalog, InvalidSpec, ScenarioOutOfRange
from .generator import FleetSpec, generate_fleet
from .harness import DetectionReport, run_scenarios, score_events
from .scenarios import EffectSpec, InjectionScenario, inject, plan_injection

FIXTURE = Path(__file__).resolve().parent / 'fixtures' / 'thirty.json'


def port_shut_down(jitter=8, fraction=0.8, magnitude=1.0):
    return InjectionScenario("shutdown", "port_shut_down", 50, 100,
                             effects=(EffectSpec("drop_to_floor", magnitude),),
                             affected_fraction=fraction, jitter=jitter)


class FleetSpecTest(SimpleTestCase):
    def test_same_seed_same_fleet(self):
        a, b = generate_fleet(FleetSpec(seed=7)), generate_fleet(FleetSpec(seed=7))
        self.assertTrue(all(x.content_equal(y) for x, y in zip(a, b)))

    def test_different_seed_different_fleet(self):
        a, b = generate_fleet(FleetSpec(seed=7)), generate_fleet(FleetSpec(seed=8))
        self.assertFalse(all(x.content_equal(y) for x, y in zip(a, b)))

    def test_shape(self):
        fleet = generate_fleet(FleetSpec(n_series=50, length=300))
        self.assertEqual(len(fleet), 50)
        self.assertTrue(all(len(s) == 300 and s.sampling_interval == 6.0 for s in fleet))
        self.assertEqual(len({s.series_id for s in fleet}), 50)

    def test_baselines_stay_above_floor(self):
        fleet = generate_fleet(FleetSpec(n_series=30, seed=3))
        self.assertTrue(all(s.values.min() > 1.0 for s in fleet))

    def test_invalid_specs(self):
        with self.assertRaises(InvalidSpec):
            generate_fleet(FleetSpec(length=99))
        with self.assertRaises(InvalidSpec):
            generate_fleet(FleetSpec(n_series=0))
        with self.assertRaises(InvalidSpec):
            generate_fleet(FleetSpec(profile_weights=(('sawtooth', 1.0),)))
        with self.assertRaises(InvalidSpec):
            generate_fleet(FleetSpec(profile_weights=(('periodic', 0.0),)))


class InjectTest(SimpleTestCase):
    def setUp(self):
        self.fleet = generate_fleet(FleetSpec(seed=11))

    def test_port_shut_down_pins_floor(self):
        scenario = port_shut_down(jitter=0)
        plan = plan_injection(self.fleet, scenario, seed=11)
        self.assertEqual(len(plan.affected), 40)
        injected = {s.series_id: s for s in inject(self.fleet, scenario, seed=11, plan=plan)}
        for sid in plan.affected:
            np.testing.assert_array_equal(injected[sid].values[50:100], 0.0)
            self.assertTrue(np.all(injected[sid].values[100:] > 0.0))

    def test_untouched_series_identical(self):
        scenario = port_shut_down()
        plan = plan_injection(self.fleet, scenario, seed=11)
        for before, after in zip(self.fleet, inject(self.fleet, scenario, seed=11, plan=plan)):
            if before.series_id not in plan.affected:
                self.assertIs(before, after)

    def test_jitter_offsets_each_series(self):
        plan = plan_injection(self.fleet, port_shut_down(), seed=11)
        offsets = set(plan.offsets.values())
        self.assertTrue(offsets <= set(range(9)))
        self.assertGreater(len(offsets), 1)
        injected = {s.series_id: s for s in inject(self.fleet, port_shut_down(), seed=11, plan=plan)}
        for sid in plan.affected:
            onset = 50 + plan.offsets[sid]
            np.testing.assert_array_equal(injected[sid].values[onset:100 + plan.offsets[sid]], 0.0)
            self.assertGreater(injected[sid].values[onset - 1], 0.0)

    def test_zero_magnitude_is_identity(self):
        for name in EFFECTS:
            scenario = InjectionScenario("zero", "noop", 50, 120, effects=(EffectSpec(name, 0.0),))
            for before, after in zip(self.fleet, inject(self.fleet, scenario, seed=2)):
                self.assertTrue(before.content_equal(after))

    def test_memory_leak_slope(self):
        scenario = InjectionScenario("leak", "memory_leak", 70, 140,
                                     effects=(EffectSpec("ramp_drift", 0.1),), jitter=0)
        plan = plan_injection(self.fleet, scenario, seed=5)
        injected = {s.series_id: s for s in inject(self.fleet, scenario, seed=5, plan=plan)}
        for before in self.fleet:
            if before.series_id not in plan.affected:
                continue
            added = injected[before.series_id].values[70:140] - before.values[70:140]
            slope = 0.1 * before.values.std()
            self.assertTrue(np.all(np.diff(added) > 0))
            np.testing.assert_allclose(np.diff(added), slope, rtol=1e-9)
            np.testing.assert_array_equal(injected[before.series_id].values[140:], before.values[140:])

    def test_out_of_range(self):
        with self.assertRaises(ScenarioOutOfRange):
            inject(self.fleet, InjectionScenario("late", "port_flap", 250, 301,
                                                 effects=(EffectSpec("oscillate"),)))
        with self.assertRaises(ScenarioOutOfRange):
            inject(self.fleet, InjectionScenario("backwards", "port_flap", 100, 100,
                                                 effects=(EffectSpec("oscillate"),)))
        with self.assertRaises(ScenarioOutOfRange):
            inject(self.fleet, InjectionScenario("ghost", "port_flap", 50, 100,
                                                 effects=(EffectSpec("oscillate"),),
                                                 affected_series=("nope",)))

    def test_listed_series(self):
        scenario = InjectionScenario("two", "port_shut_down", 50, 100, effects=(EffectSpec("drop_to_floor"),),
                                     affected_series=("s01", "s02"), jitter=0)
        injected = inject(self.fleet, scenario)
        self.assertEqual(injected[0].values[60], 0.0)
        self.assertEqual(injected[1].values[60], 0.0)
        self.assertIs(injected[2], self.fleet[2])


class EffectDetectabilityTest(SimpleTestCase):
    """Each archetype at its minimum magnitude leaves a boundary near the onset of a lone series."""

    def _series(self, seed):
        rng = np.random.default_rng(seed)
        t = np.arange(300)
        return Series(f"lone-{seed}", 6.0 + np.sin(2 * np.pi * t / 40 + rng.uniform(0, 6.28))
                      + rng.normal(0, 0.2, 300))

    def test_minimum_magnitudes(self):
        params = PipelineConfig().segmentation_params()
        for name, magnitude in MIN_DETECTABLE_MAGNITUDE.items():
            for seed in range(3):
                with self.subTest(effect=name, seed=seed):
                    series = self._series(seed)
                    scenario = InjectionScenario("lone", name, 100, 170,
                                                 effects=(EffectSpec(name, magnitude),),
                                                 affected_series=(series.series_id,), jitter=0)
                    injected = inject([series], scenario, seed=seed)[0]
                    changes = segment_series(injected, params)
                    self.assertTrue(any(97 <= c.timestamp <= 110 for c in changes),
                                    [c.timestamp for c in changes])


class CatalogTest(SimpleTestCase):
    def test_thirty_scenarios(self):
        catalog = build_catalog()
        self.assertEqual(len(catalog), 30)
        self.assertEqual(len({s.event_kind for s in catalog}), 30)
        self.assertTrue(set(NAMED_EVENTS) <= {s.event_kind for s in catalog})
        for scenario in catalog:
            self.assertLess(scenario.start_ts, scenario.end_ts)
            self.assertGreaterEqual(scenario.end_ts - scenario.start_ts, 50)
            self.assertLessEqual(scenario.end_ts + scenario.jitter, 275)

    def test_named_event_archetypes(self):
        effects = {s.event_kind: [e.effect for e in s.effects] for s in build_catalog()}
        self.assertEqual(effects['port_shut_down'], ['drop_to_floor'])
        self.assertEqual(effects['port_flap'], ['oscillate'])
        self.assertEqual(effects['memory_leak'], ['ramp_drift'])
        self.assertEqual(effects['transceiver_pull'], ['level_shift', 'variance_burst'])

    def test_fixture_matches_built_in(self):
        self.assertEqual(load_catalog(FIXTURE), build_catalog())

    def test_write_then_load(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'catalog.json')
            write_catalog(build_catalog(), path)
            self.assertEqual(load_catalog(path), build_catalog())

    def test_invalid_catalogs(self):
        good = dump_catalog(build_catalog()[:1])
        broken = [
            {},
            {'schema_version': 2, 'scenarios': good['scenarios']},
            {'schema_version': 1, 'scenarios': []},
            {'schema_version': 1, 'scenarios': [{**good['scenarios'][0], 'effects': [{'effect': 'melt'}]}]},
            {'schema_version': 1, 'scenarios': [{**good['scenarios'][0], 'start_ts': 120, 'end_ts': 100}]},
            {'schema_version': 1, 'scenarios': [{**good['scenarios'][0], 'affected_series': ['s01']}]},
            {'schema_version': 1, 'scenarios': good['scenarios'] * 2},
        ]
        for data in broken:
            with self.subTest(data=json.dumps(data)[:80]):
                with self.assertRaises(InvalidCatalog):
                    parse_catalog(data)


class HarnessTest(SimpleTestCase):
    def test_shutdown_histogram_peaks(self):
        spec = FleetSpec(seed=7)
        fleet = generate_fleet(spec)
        injected = inject(fleet, port_shut_down(), seed=7)
        result = run_pipeline(PipelineConfig(workers=1), injected, seed=7)
        largest = sorted(result.events, key=lambda e: e.magnitude, reverse=True)[:2]
        peaks = sorted(e.peak_bin for e in largest)
        self.assertEqual(len(peaks), 2)
        self.assertTrue(50 <= peaks[0] <= 60, peaks)
        self.assertTrue(100 <= peaks[1] <= 110, peaks)

    def test_shutdown_scenario_scored(self):
        report = run_scenarios([port_shut_down()], FleetSpec(seed=7), PipelineConfig(workers=1))
        outcome = report.outcomes[0]
        self.assertTrue(outcome.detected)
        self.assertLessEqual(outcome.detection_delay, 10)
        self.assertTrue(outcome.recovery_detected)
        self.assertTrue(outcome.recovery_paired)
        self.assertEqual(report.summary_line, "1/1 detected")

    def test_stationary_fleet_has_no_events(self):
        spec = FleetSpec(seed=4, profile_weights=(('stationary', 1.0),))
        result = run_pipeline(PipelineConfig(workers=1), generate_fleet(spec), seed=4)
        self.assertEqual(result.events, [])

    def test_empty_catalog_no_detections(self):
        report = run_scenarios([], FleetSpec(seed=3), PipelineConfig(workers=1), null_runs=1)
        self.assertEqual(report.summary_line, "0/0 detected")
        self.assertEqual(report.false_positives, 0)

    def test_deterministic_report(self):
        catalog = build_catalog()[:2]
        first = run_scenarios(catalog, FleetSpec(seed=9), PipelineConfig(workers=1))
        second = run_scenarios(catalog, FleetSpec(seed=9), PipelineConfig(workers=1))
        self.assertEqual(first.lines(), second.lines())

    def test_scoring_rules(self):
        from fleet.events import EventOfInterest

        def ev(event_id, b, participants):
            return EventOfInterest(event_id, b, b, len(participants), frozenset(participants), b, b + 5, 10.0)

        scenario = port_shut_down()
        affected = {"s01", "s02", "s03"}
        scored = score_events(scenario, affected, [ev(1, 49, affected), ev(2, 55, {"s01", "s09"}),
                                                   ev(3, 104, {"s01", "s02", "x"})])
        self.assertTrue(scored['detected'])
        self.assertEqual(scored['detection_delay'], 5)
        self.assertEqual(scored['recovery_delay'], 4)
        self.assertEqual(scored['unmatched_events'], 1)
        late = score_events(scenario, affected, [ev(1, 61, affected)])
        self.assertFalse(late['detected'])

    def test_report_lines(self):
        report = DetectionReport(seed=1, config_hash="abc")
        last = json.loads(report.lines()[-1])
        self.assertEqual(last['record'], 'summary')
        self.assertEqual(last['summary'], "0/0 detected")


class AcceptanceTest(SimpleTestCase):
    @tag('slow')
    def test_thirty_of_thirty(self):
        report = run_scenarios(build_catalog(), FleetSpec(seed=7), PipelineConfig(workers=1))
        missed = [o.scenario_id for o in report.outcomes if not o.detected]
        self.assertEqual(report.summary_line, "30/30 detected", missed)
        self.assertTrue(all(o.detection_delay <= 10 for o in report.outcomes))
        late = [o.scenario_id for o in report.outcomes if not o.recovery_detected]
        self.assertEqual(late, [])

    @tag('slow')
    def test_null_fleets_stay_quiet(self):
        report = run_scenarios([], FleetSpec(seed=100), PipelineConfig(workers=1), null_runs=20)
        self.assertEqual(len(report.null_runs), 20)
        self.assertEqual(report.false_positives, 0)
