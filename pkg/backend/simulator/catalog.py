"""
The 30-scenario catalog and its JSON file format.

Four events are modelled directly (port_shut_down, port_flap, memory_leak,
transceiver_pull); the other 26 are variants of the five effect
archetypes with their own windows, reach and shape parameters.  Windows
sit inside [40, 230] so a 300-sample fleet shows both the onset and the
recovery away from the series edges.

File layout (``schema_version`` 1):

    {"schema_version": 1,
     "scenarios": [{"scenario_id": "c01", "event_kind": "port_shut_down",
                    "start_ts": 50, "end_ts": 100, "affected_fraction": 0.8,
                    "effects": [{"effect": "drop_to_floor", "magnitude": 1.0}]}]}
"""

import json
import logging

from .effects import PARAMETERS
from .exceptions import InvalidCatalog
from .scenarios import DEFAULT_JITTER, EffectSpec, InjectionScenario

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

NAMED_EVENTS = ('port_shut_down', 'port_flap', 'memory_leak', 'transceiver_pull')

# event_kind, start, end, affected fraction, effects
_TABLE = [
    ('port_shut_down', 50, 100, 0.8, [('drop_to_floor', 1.0, {})]),
    ('port_flap', 60, 120, 0.7, [('oscillate', 1.0, {'half_period': 3})]),
    ('memory_leak', 70, 140, 0.7, [('ramp_drift', 0.1, {})]),
    ('transceiver_pull', 80, 140, 0.7, [('level_shift', 1.0, {}), ('variance_burst', 1.0, {'cadence': 6})]),

    ('link_down', 40, 100, 0.8, [('drop_to_floor', 1.0, {})]),
    ('lacp_member_down', 90, 150, 0.6, [('drop_to_floor', 1.0, {})]),
    ('bgp_session_reset', 110, 170, 0.7, [('drop_to_floor', 1.0, {})]),
    ('vlan_removed', 130, 200, 0.75, [('drop_to_floor', 1.0, {})]),
    ('power_supply_loss', 150, 230, 0.8, [('drop_to_floor', 1.0, {})]),
    ('interface_err_disable', 100, 160, 0.65, [('drop_to_floor', 1.0, {})]),

    ('bgp_flap', 45, 110, 0.7, [('oscillate', 1.0, {'half_period': 4})]),
    ('ospf_adjacency_flap', 75, 135, 0.65, [('oscillate', 0.9, {'half_period': 5})]),
    ('stp_topology_churn', 95, 160, 0.75, [('oscillate', 1.0, {'half_period': 2})]),
    ('route_oscillation', 120, 190, 0.6, [('oscillate', 0.8, {'half_period': 3})]),
    ('lacp_flap', 140, 210, 0.7, [('oscillate', 1.0, {'half_period': 4})]),

    ('cpu_runaway', 55, 120, 0.7, [('ramp_drift', 0.12, {})]),
    ('buffer_exhaustion', 85, 150, 0.65, [('ramp_drift', 0.1, {})]),
    ('arp_table_growth', 105, 175, 0.7, [('ramp_drift', 0.08, {})]),
    ('mac_table_growth', 125, 195, 0.6, [('ramp_drift', 0.1, {})]),
    ('tcam_exhaustion', 145, 220, 0.75, [('ramp_drift', 0.12, {})]),

    ('qos_policy_change', 65, 130, 0.7, [('level_shift', 1.0, {})]),
    ('link_speed_renegotiation', 95, 155, 0.65, [('level_shift', 1.2, {})]),
    ('traffic_reroute', 115, 180, 0.75, [('level_shift', 1.0, {})]),
    ('acl_misconfiguration', 135, 205, 0.6, [('level_shift', 0.9, {})]),

    ('microburst_congestion', 50, 110, 0.7, [('variance_burst', 1.0, {'cadence': 5})]),
    ('crc_error_storm', 70, 130, 0.65, [('variance_burst', 1.0, {'cadence': 7})]),
    ('broadcast_storm', 90, 155, 0.8, [('variance_burst', 1.1, {'cadence': 4})]),
    ('optical_power_fluctuation', 110, 170, 0.6, [('variance_burst', 0.9, {'cadence': 8})]),
    ('duplex_mismatch', 130, 190, 0.7, [('variance_burst', 1.0, {'cadence': 6})]),
    ('ddos_ingress_spike', 150, 220, 0.8, [('variance_burst', 1.2, {'cadence': 5})]),
]


def build_catalog() -> tuple:
    return tuple(
        InjectionScenario(
            scenario_id=f"c{i:02d}-{kind}",
            event_kind=kind,
            start_ts=start,
            end_ts=end,
            effects=tuple(EffectSpec(name, magnitude, dict(params)) for name, magnitude, params in effects),
            affected_fraction=fraction,
        )
        for i, (kind, start, end, fraction, effects) in enumerate(_TABLE, start=1)
    )


def dump_catalog(catalog) -> dict:
    return {'schema_version': SCHEMA_VERSION, 'scenarios': [s.to_dict() for s in catalog]}


def write_catalog(catalog, path) -> int:
    with open(path, 'w', encoding='utf-8') as handle:
        json.dump(dump_catalog(catalog), handle, indent=2)
        handle.write('\n')
    return len(catalog)


def _effect(where: str, data) -> EffectSpec:
    if not isinstance(data, dict) or 'effect' not in data:
        raise InvalidCatalog(f"{where}: each effect needs an 'effect' name")
    name = data['effect']
    if name not in PARAMETERS:
        raise InvalidCatalog(f"{where}: unknown effect {name!r}")
    magnitude = data.get('magnitude', 1.0)
    if isinstance(magnitude, bool) or not isinstance(magnitude, (int, float)):
        raise InvalidCatalog(f"{where}: magnitude must be a number")
    params = {k: v for k, v in data.items() if k not in ('effect', 'magnitude')}
    return EffectSpec(name, float(magnitude), params).validate()


def parse_catalog(data) -> tuple:
    if not isinstance(data, dict) or data.get('schema_version') != SCHEMA_VERSION:
        raise InvalidCatalog(f"catalog must be an object with schema_version {SCHEMA_VERSION}")
    entries = data.get('scenarios')
    if not isinstance(entries, list) or not entries:
        raise InvalidCatalog("catalog has no scenarios")

    scenarios, seen = [], set()
    for i, entry in enumerate(entries):
        where = f"scenario {i}"
        if not isinstance(entry, dict):
            raise InvalidCatalog(f"{where}: not an object")
        missing = [k for k in ('scenario_id', 'event_kind', 'start_ts', 'end_ts', 'effects') if k not in entry]
        if missing:
            raise InvalidCatalog(f"{where}: missing {', '.join(missing)}")
        where = f"scenario {entry['scenario_id']}"
        if entry['scenario_id'] in seen:
            raise InvalidCatalog(f"{where}: duplicate scenario_id")
        seen.add(entry['scenario_id'])
        if not all(isinstance(entry[k], int) and not isinstance(entry[k], bool) for k in ('start_ts', 'end_ts')):
            raise InvalidCatalog(f"{where}: start_ts and end_ts must be integers")
        if not 0 <= entry['start_ts'] < entry['end_ts']:
            raise InvalidCatalog(f"{where}: need 0 <= start_ts < end_ts")
        if not isinstance(entry['effects'], list) or not entry['effects']:
            raise InvalidCatalog(f"{where}: effects must be a non-empty list")
        if ('affected_series' in entry) == ('affected_fraction' in entry):
            raise InvalidCatalog(f"{where}: give exactly one of affected_series, affected_fraction")
        affected = entry.get('affected_series')
        if affected is not None and (not isinstance(affected, list) or not affected):
            raise InvalidCatalog(f"{where}: affected_series must be a non-empty list")
        fraction = entry.get('affected_fraction')
        if fraction is not None and not (isinstance(fraction, (int, float)) and 0 < fraction <= 1):
            raise InvalidCatalog(f"{where}: affected_fraction must be in (0, 1]")
        scenarios.append(InjectionScenario(
            scenario_id=str(entry['scenario_id']),
            event_kind=str(entry['event_kind']),
            start_ts=entry['start_ts'],
            end_ts=entry['end_ts'],
            effects=tuple(_effect(where, e) for e in entry['effects']),
            affected_fraction=None if fraction is None else float(fraction),
            affected_series=None if affected is None else tuple(str(s) for s in affected),
            jitter=int(entry.get('jitter', DEFAULT_JITTER)),
        ))
    return tuple(scenarios)


def load_catalog(path) -> tuple:
    try:
        with open(path, encoding='utf-8') as handle:
            data = json.load(handle)
    except OSError as exc:
        raise InvalidCatalog(f"cannot read catalog {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InvalidCatalog(f"{path}: not JSON ({exc.msg}, line {exc.lineno})") from None
    catalog = parse_catalog(data)
    logger.info("Loaded %d scenario(s) from %s", len(catalog), path)
    return catalog
