"""
Management command driving the detection pipeline.

Usage
-----
    python manage.py sentinel run --input fleet.csv --format csv
    python manage.py sentinel run --input fleet.jsonl --format jsonl --remember --graph graph.jsonl
    python manage.py sentinel simulate --catalog simulator/fixtures/thirty.json --seed 7
    python manage.py sentinel profile --input fleet.csv --series s01
    python manage.py sentinel graph export --input fleet.csv --expert rules.jsonl

Exit status: 0 on success, 1 when input or configuration is rejected,
2 on an internal failure.
"""
import logging
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError, CommandParser
from django.db import DatabaseError
from django.utils import timezone

from metamodel.exchange import export_graph, import_graph, write_graph
from metamodel.graph import KnowledgeGraph
from sentinel.exceptions import ValidationFailure
from simulator.catalog import build_catalog, load_catalog, write_catalog
from simulator.generator import FleetSpec
from simulator.harness import run_scenarios
from telemetry.config import PipelineConfig, load_config_file
from telemetry.exceptions import EmptyInput, InvalidConfig, PipelineStageError
from telemetry.ingest import FORMATS, fleet_digest, parse_telemetry
from telemetry.models import PipelineRun
from telemetry.pipeline import GOAL, run_pipeline
from telemetry.reports import dumps, profile_record

logger = logging.getLogger('telemetry')

SYNOPSIS = """\
usage: sentinel run --input FILE [--format {csv,jsonl}] [--expert FILE] [--remember]
                    [--reset-memory] [--histogram FILE] [--graph FILE] [--report FILE]
                    [--seed N] [PIPELINE FLAGS]
       sentinel simulate [--catalog FILE] [--seed N] [--null-runs N] [--n-series N]
                    [--length N] [--write-catalog FILE] [--report FILE] [PIPELINE FLAGS]
       sentinel profile --input FILE [--format {csv,jsonl}] [--series ID] [--discords K]
                    [--report FILE] [PIPELINE FLAGS]
       sentinel graph export [--input FILE] [--format {csv,jsonl}] [--expert FILE]
                    [--graph FILE] [PIPELINE FLAGS]
PIPELINE FLAGS: [--config FILE] [--m N] [--exclusion-radius N] [--arc-horizon N]
                [--global-arcs] [--cac-threshold X] [--regime-exclusion N] [--bin-width N]
                [--k-mad X] [--min-fraction X] [--baseline-window N]
                [--coincidence-window N] [--no-interest-threshold N]
                [--sampling-interval SECONDS] [--recovery-horizon N] [--gap-limit N]
                [--workers N]
"""

# flag dest → PipelineConfig field, all of them default to "not given"
CONFIG_FLAGS = (
    ('m', int), ('exclusion_radius', int), ('arc_horizon', int), ('cac_threshold', float),
    ('regime_exclusion', int), ('bin_width', int), ('k_mad', float), ('min_fraction', float),
    ('baseline_window', int), ('coincidence_window', int), ('no_interest_threshold', int),
    ('sampling_interval', float), ('recovery_horizon', int), ('gap_limit', int), ('workers', int),
)

LOG_LEVELS = {2: logging.INFO, 3: logging.DEBUG}


class UsageError(CommandError):
    """The command line itself could not be parsed."""


class SentinelParser(CommandParser):
    def error(self, message):
        raise UsageError(message, returncode=1)


def _usage_error(message):
    raise UsageError(message, returncode=1)


def _pipeline_flags(parser):
    parser.add_argument('--config', help='JSON file of pipeline settings (applied before flags)')
    for name, kind in CONFIG_FLAGS:
        parser.add_argument(f"--{name.replace('_', '-')}", dest=name, type=kind, default=None)
    parser.add_argument('--global-arcs', action='store_true',
                        help='Let arcs span the whole series instead of 2·m samples')


def _input_flags(parser, required=True):
    parser.add_argument('--input', required=required, help='Telemetry file')
    parser.add_argument('--format', choices=FORMATS, default='csv')


def build_config(options) -> PipelineConfig:
    config = PipelineConfig.from_settings()
    if options.get('config'):
        config = config.merged(load_config_file(options['config']))
    config = config.merged({name: options.get(name) for name, _ in CONFIG_FLAGS})
    if options.get('global_arcs'):
        config = config.merged({'global_arcs': True})
    return config.validate()


class Command(BaseCommand):
    help = 'Detect fleet-wide events in network telemetry (run / simulate / profile / graph export)'

    def create_parser(self, prog_name, subcommand, **kwargs):
        parser = super().create_parser(prog_name, subcommand, **kwargs)
        parser.error = _usage_error
        return parser

    def add_arguments(self, parser):
        actions = parser.add_subparsers(dest='action', required=True, parser_class=SentinelParser)

        run = actions.add_parser('run', help='Ingest telemetry and report events')
        _input_flags(run)
        run.add_argument('--expert', help='Graph lines injected as expert knowledge')
        run.add_argument('--remember', action='store_true',
                         help='Load and save recurrence memory in the database')
        run.add_argument('--reset-memory', action='store_true',
                         help='Forget stored recurrence memory before the run')
        run.add_argument('--histogram', help='Write the regime-change histogram as TSV')
        run.add_argument('--graph', help='Write the knowledge graph as JSON lines')
        run.add_argument('--report', help='Write the event report here instead of standard output')
        run.add_argument('--seed', type=int, default=None, help='Recorded in the report')
        _pipeline_flags(run)

        simulate = actions.add_parser('simulate', help='Run the scenario catalog on synthetic fleets')
        simulate.add_argument('--catalog', help='Scenario catalog JSON (built-in catalog when omitted)')
        simulate.add_argument('--seed', type=int, default=0)
        simulate.add_argument('--null-runs', type=int, default=0,
                              help='Extra uninjected fleets for the false-positive count')
        simulate.add_argument('--n-series', type=int, default=50)
        simulate.add_argument('--length', type=int, default=300)
        simulate.add_argument('--write-catalog', help='Write the catalog to this file and stop')
        simulate.add_argument('--report', help='Write the detection report here instead of standard output')
        _pipeline_flags(simulate)

        profile = actions.add_parser('profile', help='Dump matrix profile and arc curve per series')
        _input_flags(profile)
        profile.add_argument('--series', action='append', default=None, help='Series id (repeatable)')
        profile.add_argument('--discords', type=int, default=3)
        profile.add_argument('--report', help='Write the dump here instead of standard output')
        _pipeline_flags(profile)

        graph = actions.add_parser('graph', help='Knowledge graph operations')
        graph_actions = graph.add_subparsers(dest='graph_action', required=True)
        export = graph_actions.add_parser('export', help='Export the knowledge graph as JSON lines')
        _input_flags(export, required=False)
        export.add_argument('--expert', help='Graph lines injected as expert knowledge')
        export.add_argument('--graph', help='Write here instead of standard output')
        _pipeline_flags(export)

    def run_from_argv(self, argv):
        try:
            super().run_from_argv(argv)
        except UsageError as exc:
            self.stderr.write(f"error: {exc}\n{SYNOPSIS}", ending='')
            raise SystemExit(exc.returncode)

    # ── Dispatch ──────────────────────────────────────────────────

    def handle(self, *args, **options):
        level = LOG_LEVELS.get(options.get('verbosity', 1))
        if level is not None:
            for name in settings.LOGGING.get('loggers', {}):
                logging.getLogger(name).setLevel(level)

        action = options['action']
        if action == 'graph':
            action = 'graph_export'
        record = self._open_run(action, options.get('seed'))
        try:
            summary = getattr(self, f"handle_{action}")(options)
        except CommandError:
            self._close_run(record, 'failed', {'error': 'command error'})
            raise
        except ValidationFailure as exc:
            self._close_run(record, 'failed', {'error': str(exc)})
            raise CommandError(str(exc), returncode=1) from exc
        except PipelineStageError as exc:
            cause = exc.__cause__
            self._close_run(record, 'failed', {'error': f"{exc}: {cause}"})
            if isinstance(cause, ValidationFailure):
                raise CommandError(f"{exc}: {cause}", returncode=1) from exc
            logger.exception("Internal failure")
            raise CommandError(f"{exc}: {cause}", returncode=2) from exc
        except Exception as exc:
            self._close_run(record, 'failed', {'error': repr(exc)})
            logger.exception("Internal failure")
            raise CommandError(f"internal error: {exc}", returncode=2) from exc
        self._close_run(record, 'completed', summary)

    # ── Subcommands ───────────────────────────────────────────────

    def handle_run(self, options):
        config = build_config(options)
        fleet = parse_telemetry(options['input'], options['format'],
                                sampling_interval=options.get('sampling_interval'),
                                gap_limit=config.gap_limit)
        memory = self._load_memory(config, options)
        expert = _read_lines(options.get('expert'))
        result = run_pipeline(config, fleet, seed=options.get('seed'), memory=memory,
                              expert_lines=expert, histogram_path=options.get('histogram'),
                              graph_path=options.get('graph'))
        if options.get('histogram'):
            Path(options['histogram']).write_text(result.histogram.to_tsv(), encoding='utf-8')
        if options.get('graph'):
            write_graph(result.graph, options['graph'])
        if options['remember']:
            from fleet.memory_store import save_memory
            save_memory(result.memory)
        self._emit(result.report.to_jsonl(), options.get('report'))
        return {
            'config_hash': result.report.run['config_hash'],
            'input_digest': result.report.run['input_digest'],
            **result.report.summary,
        }

    def handle_simulate(self, options):
        config = build_config(options)
        catalog = load_catalog(options['catalog']) if options.get('catalog') else build_catalog()
        if options.get('write_catalog'):
            count = write_catalog(catalog, options['write_catalog'])
            self.stdout.write(self.style.SUCCESS(f"Wrote {count} scenario(s) to {options['write_catalog']}"))
            return {'scenarios': count}
        if options['null_runs'] < 0:
            raise InvalidConfig(f"null_runs={options['null_runs']}: must be >= 0")
        spec = FleetSpec(n_series=options['n_series'], length=options['length'],
                         sampling_interval=config.sampling_interval, seed=options['seed'], m=config.m)
        workers = config.resolved_workers if options.get('workers') is not None else 1
        report = run_scenarios(catalog, spec, config, null_runs=options['null_runs'], workers=workers)
        self._emit("\n".join(report.lines()) + "\n", options.get('report'))
        if report.false_positives:
            logger.warning("%d interest event(s) on uninjected fleets", report.false_positives)
        return {'config_hash': report.config_hash, **report.summary()}

    def handle_profile(self, options):
        config = build_config(options)
        fleet = parse_telemetry(options['input'], options['format'],
                                sampling_interval=options.get('sampling_interval'),
                                gap_limit=config.gap_limit)
        wanted = options.get('series')
        if wanted:
            known = {s.series_id for s in fleet}
            missing = sorted(set(wanted) - known)
            if missing:
                raise EmptyInput(f"no series named {', '.join(missing)} in {options['input']}")
            fleet = [s for s in fleet if s.series_id in set(wanted)]
        lines = []
        for series in fleet:
            if len(series) < 2 * config.m:
                logger.warning("Series %s shorter than %d samples, skipped", series.series_id, 2 * config.m)
                continue
            lines.append(dumps(profile_record(series, config, options['discords'])))
        self._emit("\n".join(lines) + ("\n" if lines else ""), options.get('report'))
        return {'config_hash': config.config_hash(), 'input_digest': fleet_digest(fleet),
                'profiles': len(lines)}

    def handle_graph_export(self, options):
        config = build_config(options)
        expert = _read_lines(options.get('expert'))
        if options.get('input'):
            fleet = parse_telemetry(options['input'], options['format'],
                                    sampling_interval=options.get('sampling_interval'),
                                    gap_limit=config.gap_limit)
            graph = run_pipeline(config, fleet, expert_lines=expert).graph
        else:
            graph = KnowledgeGraph()
            graph.ensure_goal(GOAL)
            if expert:
                import_graph(expert, graph, expert=True)
        if options.get('graph'):
            count = write_graph(graph, options['graph'])
        else:
            lines = export_graph(graph)
            self.stdout.write("\n".join(lines) + "\n", ending='')
            count = len(lines)
        return {'config_hash': config.config_hash(), 'records': count, 'levels': graph.counts_by_level()}

    # ── Helpers ───────────────────────────────────────────────────

    def _emit(self, text, path):
        if path:
            Path(path).write_text(text, encoding='utf-8')
        else:
            self.stdout.write(text, ending='')

    def _load_memory(self, config, options):
        if not (options['remember'] or options['reset_memory']):
            return None
        from fleet.memory_store import load_memory, reset_memory

        if options['reset_memory']:
            logger.info("Forgot %d stored signature row(s)", reset_memory())
        if not options['remember']:
            return None
        return load_memory(config.no_interest_threshold, config.signature_jaccard)

    def _open_run(self, run_type, seed):
        try:
            return PipelineRun.objects.create(run_type=run_type, seed=seed)
        except DatabaseError as exc:
            logger.warning("Run not recorded: %s", exc)
            return None

    def _close_run(self, record, status, summary):
        if record is None:
            return
        summary = summary or {}
        record.status = status
        record.config_hash = summary.get('config_hash', '') or ''
        record.input_digest = summary.get('input_digest', '') or ''
        record.summary = summary
        record.completed_at = timezone.now()
        try:
            record.save()
        except DatabaseError as exc:
            logger.warning("Run %s not updated: %s", record.pk, exc)


def _read_lines(path):
    if not path:
        return None
    try:
        return Path(path).read_text(encoding='utf-8').splitlines()
    except OSError as exc:
        raise InvalidConfig(f"cannot read {path}: {exc.strerror}") from None
