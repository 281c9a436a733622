"""
Tests for ingestion, configuration, the pipeline and the sentinel command.
Run with: python manage.py test telemetry
"""
import json
import os
import tempfile
import time
from pathlib import Path
from unittest import mock

import numpy as np
from django.test import SimpleTestCase, TestCase, override_settings, tag

from fleet.events import EventKind
from fleet.models import EventSignature
from simulator.catalog import build_catalog, dump_catalog, load_catalog
from simulator.generator import FleetSpec, generate_fleet
from simulator.scenarios import EffectSpec, InjectionScenario, inject
from timeseries.series import Series

from .cli import captured
from .config import PipelineConfig, hash_block, load_config_file
from .exceptions import (
    EmptyInput, InvalidConfig, MalformedRow, NonUniformSampling, PipelineStageError, UnreadableInput,
)
from .ingest import fleet_digest, parse_telemetry, write_telemetry
from .models import PipelineRun
from .pipeline import device_keys, run_pipeline

SERIAL = PipelineConfig(workers=1)


def port_shutdown_fleet(seed=7):
    scenario = InjectionScenario("shutdown", "port_shut_down", 50, 100,
                                 effects=(EffectSpec("drop_to_floor", 1.0),))
    return inject(generate_fleet(FleetSpec(seed=seed)), scenario, seed=seed)


class TempDirMixin:
    def setUp(self):
        super().setUp()
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()
        super().tearDown()

    def write(self, name, text):
        path = self.tmp / name
        path.write_text(text, encoding='utf-8')
        return str(path)


# ── Configuration ────────────────────────────────────────────────

class PipelineConfigTest(TempDirMixin, SimpleTestCase):
    def test_defaults_resolve(self):
        config = PipelineConfig().validate()
        self.assertEqual(config.resolved_exclusion_radius, 13)
        self.assertEqual(config.resolved_arc_horizon, 50)
        self.assertEqual(config.resolved_regime_exclusion, 50)
        self.assertIsNone(PipelineConfig(global_arcs=True).resolved_arc_horizon)

    def test_out_of_range_values(self):
        cases = [
            {'m': 3}, {'m': 25.0}, {'exclusion_radius': 25}, {'exclusion_radius': 0},
            {'cac_threshold': 1.0}, {'cac_threshold': 0.0}, {'bin_width': 0},
            {'k_mad': -1}, {'min_fraction': 1.5}, {'baseline_window': 0},
            {'coincidence_window': 0}, {'no_interest_threshold': 0}, {'sampling_interval': 0},
            {'workers': -1}, {'arc_horizon': 10}, {'recovery_jaccard': 0},
            {'signature_jaccard': 1.1}, {'recovery_horizon': 0}, {'gap_limit': -1},
        ]
        for overrides in cases:
            with self.subTest(**overrides):
                with self.assertRaises(InvalidConfig):
                    PipelineConfig().merged(overrides).validate()

    def test_error_names_the_field(self):
        with self.assertRaisesMessage(InvalidConfig, "cac_threshold"):
            PipelineConfig(cac_threshold=2.0).validate()

    def test_merged(self):
        config = PipelineConfig().merged({'m': 30, 'k_mad': None})
        self.assertEqual(config.m, 30)
        self.assertEqual(config.k_mad, PipelineConfig().k_mad)
        with self.assertRaisesMessage(InvalidConfig, "bogus"):
            PipelineConfig().merged({'bogus': 1})

    def test_hash_stability(self):
        self.assertEqual(PipelineConfig().config_hash(), PipelineConfig().config_hash())
        self.assertEqual(PipelineConfig().config_hash(), PipelineConfig(exclusion_radius=13).config_hash())
        self.assertEqual(PipelineConfig().config_hash(), PipelineConfig(workers=4).config_hash())
        self.assertNotEqual(PipelineConfig().config_hash(), PipelineConfig(m=30).config_hash())

    def test_hash_recomputable_from_block(self):
        config = PipelineConfig(k_mad=4.0, device_groups={'s01': 'rack-a'})
        block = json.loads(json.dumps(config.as_block()))
        self.assertEqual(hash_block(block), config.config_hash())

    @override_settings(SENTINEL_M=30, SENTINEL_DEVICE_GROUPS={'a': 'g'})
    def test_from_settings(self):
        config = PipelineConfig.from_settings()
        self.assertEqual(config.m, 30)
        self.assertEqual(config.device_groups, {'a': 'g'})

    def test_config_file(self):
        path = self.write('c.json', json.dumps({'m': 20, 'k_mad': 4}))
        self.assertEqual(load_config_file(path), {'m': 20, 'k_mad': 4})
        for text in ('{not json', '[1, 2]'):
            with self.subTest(text=text):
                with self.assertRaises(InvalidConfig):
                    load_config_file(self.write('bad.json', text))
        with self.assertRaises(InvalidConfig):
            load_config_file(str(self.tmp / 'missing.json'))


# ── Ingestion ────────────────────────────────────────────────────

class ParseTelemetryTest(TempDirMixin, SimpleTestCase):
    def test_empty_file(self):
        with self.assertRaises(EmptyInput):
            parse_telemetry(self.write('empty.csv', ''))
        with self.assertRaises(EmptyInput):
            parse_telemetry(self.write('header.csv', 'series_id,timestamp,value\n'))
        with self.assertRaises(EmptyInput):
            parse_telemetry(self.write('empty.jsonl', '\n'), 'jsonl')

    def test_three_rows(self):
        path = self.write('three.csv', 'series_id,timestamp,value\na,0,1.0\na,6,2.0\na,12,3.0\n')
        [series] = parse_telemetry(path)
        self.assertEqual(series.series_id, 'a')
        self.assertEqual(len(series), 3)
        self.assertEqual(series.sampling_interval, 6.0)
        np.testing.assert_array_equal(series.values, [1.0, 2.0, 3.0])

    def test_unsorted_rows(self):
        path = self.write('shuffled.csv', 'series_id,timestamp,value\na,12,3.0\na,0,1.0\na,6,2.0\n')
        np.testing.assert_array_equal(parse_telemetry(path)[0].values, [1.0, 2.0, 3.0])

    def test_short_gap_interpolated(self):
        rows = [(0, 1.0), (6, 2.0), (12, 3.0), (30, 6.0), (36, 7.0)]
        text = 'series_id,timestamp,value\n' + ''.join(f"a,{t},{v}\n" for t, v in rows)
        [series] = parse_telemetry(self.write('gap.csv', text))
        np.testing.assert_allclose(series.values, [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0])

    def test_long_gap_splits(self):
        rows = [(0, 1.0), (6, 2.0), (12, 3.0), (60, 4.0), (66, 5.0)]
        text = 'series_id,timestamp,value\n' + ''.join(f"a,{t},{v}\n" for t, v in rows)
        first, second = parse_telemetry(self.write('split.csv', text), gap_limit=3)
        self.assertEqual((first.series_id, second.series_id), ('a#1', 'a#2'))
        self.assertEqual((first.source_id, second.source_id), ('a', 'a'))
        self.assertEqual((len(first), first.start_timestamp), (3, 0))
        self.assertEqual((len(second), second.start_timestamp), (2, 10))

    def test_common_timeline(self):
        text = 'series_id,timestamp,value\na,0,1\na,6,1\nb,12,2\nb,18,2\n'
        a, b = parse_telemetry(self.write('two.csv', text))
        self.assertEqual((a.start_timestamp, b.start_timestamp), (0, 2))

    def test_malformed_row_line(self):
        path = self.write('bad.csv', 'series_id,timestamp,value\na,0,1.0\na,6,abc\n')
        with self.assertRaises(MalformedRow) as ctx:
            parse_telemetry(path)
        self.assertEqual(ctx.exception.line, 3)

    def test_missing_column(self):
        with self.assertRaises(MalformedRow) as ctx:
            parse_telemetry(self.write('cols.csv', 'series_id,value\na,1\n'))
        self.assertEqual(ctx.exception.line, 1)

    def test_jsonl_errors(self):
        good = json.dumps({'series_id': 'a', 'timestamp': 0, 'value': 1})
        with self.assertRaises(MalformedRow) as ctx:
            parse_telemetry(self.write('bad.jsonl', f"{good}\n{{oops\n"), 'jsonl')
        self.assertEqual(ctx.exception.line, 2)
        with self.assertRaises(MalformedRow):
            parse_telemetry(self.write('keys.jsonl', '{"series_id": "a", "value": 1}\n'), 'jsonl')

    def test_duplicate_timestamp(self):
        with self.assertRaises(MalformedRow):
            parse_telemetry(self.write('dup.csv', 'series_id,timestamp,value\na,0,1\na,0,2\na,6,3\n'))

    def test_non_uniform_sampling(self):
        path = self.write('jitter.csv', 'series_id,timestamp,value\na,0,1\na,6,1\na,12,1\na,19,1\n')
        with self.assertRaises(NonUniformSampling):
            parse_telemetry(path)

    def test_within_tolerance(self):
        path = self.write('ok.csv', 'series_id,timestamp,value\na,0,1\na,6,1\na,12.05,1\na,18,1\n')
        self.assertEqual(len(parse_telemetry(path)[0]), 4)

    def test_phase_offset_series(self):
        [series] = parse_telemetry(self.write('phase.csv', 'series_id,timestamp,value\nb,3,1\nb,9,2\nb,15,3\n'),
                                   sampling_interval=6.0)
        np.testing.assert_array_equal(series.values, [1.0, 2.0, 3.0])
        text = 'series_id,timestamp,value\na,0,1\na,6,1\na,12,1\na,18,1\nb,8,2\nb,14,2\nb,20,2\nb,26,2\n'
        a, b = parse_telemetry(self.write('offset.csv', text))
        self.assertEqual((a.start_timestamp, b.start_timestamp), (0, 1))
        self.assertEqual(len(b), 4)

    def test_missing_file(self):
        with self.assertRaises(UnreadableInput):
            parse_telemetry(str(self.tmp / 'absent.csv'))
        with self.assertRaises(UnreadableInput):
            parse_telemetry(str(self.tmp / 'absent.jsonl'), 'jsonl')

    def test_not_utf8(self):
        path = self.tmp / 'binary.csv'
        path.write_bytes(b'series_id,timestamp,value\n\xff,0,1\n')
        for fmt in ('csv', 'jsonl'):
            with self.subTest(format=fmt), self.assertRaises(UnreadableInput):
                parse_telemetry(str(path), fmt)

    def test_unknown_format(self):
        with self.assertRaises(ValueError):
            parse_telemetry(self.write('x.txt', 'x'), 'parquet')

    def test_written_fleet_reads_back(self):
        fleet = generate_fleet(FleetSpec(n_series=5, length=120, seed=2, m=25))
        for fmt in ('csv', 'jsonl'):
            with self.subTest(format=fmt):
                path = str(self.tmp / f"fleet.{fmt}")
                write_telemetry(fleet, path, fmt)
                parsed = parse_telemetry(path, fmt)
                self.assertEqual(fleet_digest(parsed), fleet_digest(fleet))


# ── Pipeline ─────────────────────────────────────────────────────

class RunPipelineTest(TempDirMixin, SimpleTestCase):
    def test_null_fleet_reports_no_events(self):
        spec = FleetSpec(seed=5, profile_weights=(('stationary', 1.0),))
        result = run_pipeline(SERIAL, generate_fleet(spec), seed=5)
        records = [json.loads(line) for line in result.report.lines()]
        self.assertEqual(records[0]['record'], 'run')
        self.assertEqual(records[-1]['record'], 'summary')
        self.assertEqual(records[-1]['events'], 0)
        self.assertEqual(len(records), 2)

    def test_port_shutdown_episode(self):
        result = run_pipeline(SERIAL, port_shutdown_fleet(), seed=7)
        interest = [e for e in result.events if e.kind == EventKind.INTEREST]
        recovery = [e for e in result.events if e.kind == EventKind.RECOVERY]
        self.assertEqual(len(interest), 1)
        self.assertEqual(len(recovery), 1)
        self.assertTrue(50 <= interest[0].detection_bin <= 60)
        self.assertTrue(100 <= recovery[0].detection_bin <= 110)
        self.assertEqual(recovery[0].paired_event, interest[0].event_id)

        events = [r for r in result.report.events]
        self.assertEqual([r['suggested_action'] for r in events], ['investigate', 'confirm_recovery'])
        self.assertTrue(all(r['graph_node'].startswith('L2.0:event-') for r in events))
        self.assertEqual(result.graph.check_invariants(), [])
        self.assertIn('L2.1', result.graph.counts_by_level())

    def test_deterministic(self):
        fleet = port_shutdown_fleet(3)
        first = run_pipeline(SERIAL, fleet, seed=3).report.stable_lines()
        second = run_pipeline(SERIAL, fleet, seed=3).report.stable_lines()
        self.assertEqual(first, second)

    def test_file_and_memory_paths_agree(self):
        fleet = port_shutdown_fleet(11)
        expected = run_pipeline(SERIAL, fleet, seed=11).report.stable_lines()
        for fmt in ('csv', 'jsonl'):
            with self.subTest(format=fmt):
                path = str(self.tmp / f"fleet.{fmt}")
                write_telemetry(fleet, path, fmt)
                parsed = parse_telemetry(path, fmt)
                self.assertEqual(run_pipeline(SERIAL, parsed, seed=11).report.stable_lines(), expected)

    def test_config_block_hashes_back(self):
        result = run_pipeline(SERIAL, port_shutdown_fleet(), seed=7)
        run = json.loads(result.report.lines()[0])
        self.assertEqual(hash_block(run['config']), run['config_hash'])
        self.assertEqual(run['input_digest'], fleet_digest(result.analyzed))

    def test_short_series_skipped(self):
        fleet = generate_fleet(FleetSpec(n_series=4, length=120, seed=1))
        fleet.append(Series("stub", np.arange(30.0)))
        with self.assertLogs('telemetry.pipeline', level='WARNING') as logs:
            result = run_pipeline(SERIAL, fleet)
        self.assertEqual(result.skipped, ["stub"])
        self.assertTrue(any("stub" in line for line in logs.output))

    def test_empty_inputs(self):
        with self.assertRaises(EmptyInput):
            run_pipeline(SERIAL, [])
        with self.assertRaises(EmptyInput):
            run_pipeline(SERIAL, [Series("stub", np.arange(30.0))])

    def test_stage_failure_keeps_cause(self):
        fleet = generate_fleet(FleetSpec(n_series=3, length=120, seed=1))
        with mock.patch('telemetry.pipeline.segment_series', side_effect=RuntimeError("boom")):
            with self.assertRaises(PipelineStageError) as ctx:
                run_pipeline(SERIAL, fleet)
        self.assertEqual(ctx.exception.stage, 'segmentation')
        self.assertEqual(ctx.exception.series_id, fleet[0].series_id)
        self.assertIsInstance(ctx.exception.__cause__, RuntimeError)

    def test_device_groups(self):
        fleet = port_shutdown_fleet()
        groups = {s.series_id: f"rack-{i % 5}" for i, s in enumerate(fleet)}
        result = run_pipeline(PipelineConfig(workers=1, device_groups=groups), fleet)
        self.assertEqual(result.graph.l1_for_series('rack-0'), result.graph.l1_for_series(fleet[0].series_id))
        self.assertTrue(result.events)
        self.assertTrue(all(e.explanation['fleet_size'] == 5 for e in result.events))

    def test_device_keys_follow_source_id(self):
        analyzed = [Series('a#1', np.zeros(4), source_id='a'), Series('a#2', np.zeros(4), source_id='a'),
                    Series('b', np.zeros(4), source_id='b'), Series('c', np.zeros(4))]
        config = PipelineConfig(device_groups={'a': 'rack-a', 'b': 'rack-a'})
        keys = device_keys(config, analyzed)
        self.assertEqual(keys, {'a#1': 'rack-a', 'a#2': 'rack-a', 'b': 'rack-a', 'c': 'c'})
        self.assertEqual(len(set(keys.values())), 2)
        self.assertEqual(device_keys(PipelineConfig(), analyzed)['a#1'], 'a#1')

    @tag('slow')
    def test_desk_scale_throughput(self):
        fleet = generate_fleet(FleetSpec(n_series=10_000, length=150, seed=1))
        started = time.perf_counter()
        result = run_pipeline(PipelineConfig(), fleet, seed=1)
        elapsed = time.perf_counter() - started
        self.assertEqual(len(result.analyzed), 10_000)
        self.assertLess(elapsed, 60.0)
        self.assertLessEqual(result.report.run['elapsed_seconds'], elapsed)


# ── Command line ─────────────────────────────────────────────────

class SentinelCommandTest(TempDirMixin, TestCase):
    def setUp(self):
        super().setUp()
        self.fleet_csv = str(self.tmp / 'fleet.csv')
        write_telemetry(port_shutdown_fleet(), self.fleet_csv, 'csv')

    def test_run_prints_report(self):
        code, out, err = captured(['run', '--input', self.fleet_csv, '--format', 'csv', '--workers', '1'])
        self.assertEqual(code, 0, err)
        records = [json.loads(line) for line in out.splitlines()]
        self.assertEqual(records[0]['record'], 'run')
        self.assertEqual(records[-1]['interest'], 1)
        row = PipelineRun.objects.get()
        self.assertEqual((row.run_type, row.status), ('run', 'completed'))
        self.assertEqual(row.config_hash, records[0]['config_hash'])

    def test_run_writes_artifacts(self):
        histogram, graph, report = (str(self.tmp / name) for name in ('h.tsv', 'g.jsonl', 'r.jsonl'))
        code, out, _ = captured(['run', '--input', self.fleet_csv, '--workers', '1',
                                 '--histogram', histogram, '--graph', graph, '--report', report])
        self.assertEqual(code, 0)
        self.assertEqual(out, '')
        self.assertTrue(Path(histogram).read_text().startswith("bin\tcount\n"))
        run = json.loads(Path(report).read_text().splitlines()[0])
        self.assertEqual(run['histogram']['path'], histogram)
        self.assertEqual(run['graph']['path'], graph)
        self.assertTrue(all(json.loads(line)['type'] in ('node', 'edge')
                            for line in Path(graph).read_text().splitlines()))

    def test_unknown_flag(self):
        code, _, err = captured(['run', '--input', self.fleet_csv, '--bogus'])
        self.assertEqual(code, 1)
        self.assertIn("usage: sentinel run", err)

    def test_missing_subcommand(self):
        code, _, err = captured([])
        self.assertEqual(code, 1)
        self.assertIn("usage: sentinel", err)

    def test_rejected_config(self):
        code, _, err = captured(['run', '--input', self.fleet_csv, '--cac-threshold', '1.5'])
        self.assertEqual(code, 1)
        self.assertIn("cac_threshold", err)

    def test_config_file_then_flags(self):
        config = self.write('c.json', json.dumps({'m': 20, 'k_mad': 4.0}))
        code, out, _ = captured(['run', '--input', self.fleet_csv, '--workers', '1',
                                 '--config', config, '--m', '22'])
        self.assertEqual(code, 0)
        block = json.loads(out.splitlines()[0])['config']
        self.assertEqual((block['m'], block['k_mad']), (22, 4.0))

    def test_malformed_input(self):
        path = self.write('bad.csv', 'series_id,timestamp,value\na,0,x\n')
        code, _, err = captured(['run', '--input', path])
        self.assertEqual(code, 1)
        self.assertIn("line 2", err)
        self.assertEqual(PipelineRun.objects.get().status, 'failed')

    def test_missing_input_file(self):
        missing = str(self.tmp / 'absent.csv')
        for args in (['run'], ['profile', '--series', 's01'], ['graph', 'export']):
            with self.subTest(subcommand=args[0]):
                code, _, err = captured([*args, '--input', missing])
                self.assertEqual(code, 1)
                self.assertIn("absent.csv", err)

    def test_input_not_utf8(self):
        path = self.tmp / 'binary.jsonl'
        path.write_bytes(b'\xff')
        code, _, err = captured(['run', '--input', str(path), '--format', 'jsonl'])
        self.assertEqual(code, 1)
        self.assertIn("UTF-8", err)

    def test_internal_failure(self):
        with mock.patch('telemetry.pipeline.segment_series', side_effect=RuntimeError("boom")):
            with self.assertLogs('telemetry', level='ERROR'):
                code, _, _ = captured(['run', '--input', self.fleet_csv, '--workers', '1'])
        self.assertEqual(code, 2)

    def test_remember_persists_signatures(self):
        for _ in range(2):
            code, _, _ = captured(['run', '--input', self.fleet_csv, '--workers', '1', '--remember'])
            self.assertEqual(code, 0)
        self.assertTrue(EventSignature.objects.filter(occurrences__gte=2).exists())
        code, _, _ = captured(['run', '--input', self.fleet_csv, '--workers', '1', '--reset-memory'])
        self.assertEqual(code, 0)
        self.assertFalse(EventSignature.objects.exists())

    def test_profile(self):
        code, out, _ = captured(['profile', '--input', self.fleet_csv, '--series', 's01'])
        self.assertEqual(code, 0)
        [record] = [json.loads(line) for line in out.splitlines()]
        self.assertEqual(record['series_id'], 's01')
        self.assertEqual(len(record['distances']), 300 - 25 + 1)
        self.assertEqual(len(record['cac']), 300 - 25 + 1)
        self.assertEqual(len(record['discords']), 3)
        code, _, _ = captured(['profile', '--input', self.fleet_csv, '--series', 'nope'])
        self.assertEqual(code, 1)

    def test_graph_export_with_expert(self):
        expert = self.write('rules.jsonl', "\n".join([
            json.dumps({'type': 'node', 'id': 'L2.0:uplink-a', 'level': 'L2.0', 'label': 'uplink a'}),
            json.dumps({'type': 'edge', 'from': 'L1:s01-behavior', 'to': 'L2.0:uplink-a',
                        'relation': 'abstraction_of'}),
        ]))
        code, out, _ = captured(['graph', 'export', '--input', self.fleet_csv, '--expert', expert,
                                 '--workers', '1'])
        self.assertEqual(code, 0)
        records = {r['id']: r for r in map(json.loads, out.splitlines())}
        self.assertEqual(records['L2.0:uplink-a']['provenance'], 'injected_expert')
        self.assertEqual(PipelineRun.objects.get().run_type, 'graph_export')

    def test_expert_below_l2_rejected(self):
        expert = self.write('low.jsonl', json.dumps({'type': 'node', 'id': 'L1:x', 'level': 'L1', 'label': 'x'}))
        code, _, _ = captured(['graph', 'export', '--expert', expert])
        self.assertEqual(code, 1)

    def test_write_catalog(self):
        path = str(self.tmp / 'catalog.json')
        code, _, _ = captured(['simulate', '--write-catalog', path])
        self.assertEqual(code, 0)
        self.assertEqual(load_catalog(path), build_catalog())

    def test_simulate_small_catalog(self):
        path = self.write('one.json', json.dumps(dump_catalog(build_catalog()[:1])))
        code, out, _ = captured(['simulate', '--catalog', path, '--seed', '7'])
        self.assertEqual(code, 0)
        summary = json.loads(out.splitlines()[-1])
        self.assertEqual(summary['summary'], "1/1 detected")

    def test_invalid_catalog(self):
        code, _, _ = captured(['simulate', '--catalog', self.write('bad.json', '{"schema_version": 1}')])
        self.assertEqual(code, 1)

    @tag('slow')
    def test_full_catalog(self):
        catalog = os.path.join(os.path.dirname(os.path.dirname(__file__)), 'simulator', 'fixtures', 'thirty.json')
        code, out, _ = captured(['simulate', '--catalog', catalog, '--seed', '7'])
        self.assertEqual(code, 0)
        self.assertEqual(json.loads(out.splitlines()[-1])['summary'], "30/30 detected")
