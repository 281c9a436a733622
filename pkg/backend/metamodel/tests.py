"""
Tests for the knowledge graph, focus of attention and graph exchange.
Run with: python manage.py test metamodel
"""
import json
import os
import random
import tempfile

import numpy as np
from django.test import SimpleTestCase, tag
from hypothesis import HealthCheck, given, settings, strategies as st

from fleet.events import EventKind, EventOfInterest
from segmentation.regimes import RegimeChange
from sentinel.exceptions import ValidationFailure
from timeseries.series import Series

from .attention import (
    RequestStatus,
    SubsymbolicNeed,
    SymbolicQuery,
    answer_sfoa,
    partition_foa,
    reachable_below,
    spawn_sfoa,
    survey_foas,
)
from .exceptions import (
    AntiSymmetryViolation,
    DanglingPayload,
    GoalTooLow,
    InvalidGraphRecord,
    LevelViolation,
    OutOfScopeNeed,
    RelationKindConflict,
    UnknownNode,
    UnregisteredEvidence,
)
from .exchange import export_graph, import_graph, read_graph, write_graph
from .graph import (
    ABSTRACTION_OF,
    CORRELATES_WITH,
    PARTICIPATES_IN,
    PRECEDES,
    KnowledgeGraph,
    KnowledgeNode,
    Provenance,
    RelationKind,
)
from .levels import L0, L1, LSTAR, Level, l2
from .store import PayloadRef, SubsymbolicStore

PROPERTY_SETTINGS = settings(
    max_examples=30,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)


def fleet_graph(n=5, length=200, seed=0):
    rng = np.random.default_rng(seed)
    store = SubsymbolicStore()
    graph = KnowledgeGraph(store)
    for i in range(n):
        sid = f"s{i + 1}"
        store.add_series(Series(sid, rng.normal(size=length)))
        graph.register_region(store.series_ref(sid), f"{sid}-behavior")
    return graph


def event(event_id, detection_bin, participants, kind=EventKind.INTEREST, paired=None):
    participants = frozenset(participants)
    return EventOfInterest(
        event_id=event_id, peak_bin=detection_bin, detection_bin=detection_bin,
        magnitude=len(participants), participants=participants,
        start_bin=detection_bin, end_bin=detection_bin + 3, threshold=5.0,
        kind=kind, paired_event=paired, explanation={'rule': 'test'},
    )


def change(series_id, timestamp):
    return RegimeChange(series_id=series_id, position=timestamp, timestamp=timestamp,
                        salience=0.7, boundary=timestamp, sampling_interval=6.0)


class LevelTest(SimpleTestCase):
    def test_total_order(self):
        self.assertTrue(L0 < L1 < l2(0) < l2(1) < l2(57) < LSTAR)

    def test_parse_and_render(self):
        for text in ("L0", "L1", "L2.0", "L2.12", "Lstar"):
            self.assertEqual(str(Level.parse(text)), text)
        self.assertEqual(Level.parse("L2"), l2(0))
        self.assertEqual(Level.parse("L*"), LSTAR)

    def test_unknown_level(self):
        with self.assertRaises(ValueError):
            Level.parse("L3")


class RegisterRegionTest(SimpleTestCase):
    def test_creates_l0_l1_and_edge(self):
        graph = fleet_graph(1)
        l0, l1 = "L0:series:s1[0:200]", "L1:s1-behavior"
        self.assertEqual(graph.node(l0).level, L0)
        self.assertEqual(graph.node(l0).payload, PayloadRef('series', 's1', 0, 200))
        self.assertEqual(graph.node(l1).label, "s1-behavior")
        self.assertTrue(graph.has_relation(l0, l1, ABSTRACTION_OF))

    def test_idempotent(self):
        graph = fleet_graph(1)
        before = export_graph(graph)
        graph.register_region(graph.store.series_ref("s1"), "s1-behavior")
        self.assertEqual(export_graph(graph), before)

    def test_fifty_series(self):
        graph = fleet_graph(50, length=60)
        self.assertEqual(graph.counts_by_level(), {"L0": 50, "L1": 50})
        self.assertEqual(len(list(graph.edges())), 50)

    def test_dangling_payload(self):
        graph = fleet_graph(1)
        with self.assertRaises(DanglingPayload):
            graph.register_region(PayloadRef('series', 'missing'), "missing-behavior")
        with self.assertRaises(DanglingPayload):
            graph.register_region(PayloadRef('series', 's1', 150, 400), "s1-late")


class RelationTest(SimpleTestCase):
    def setUp(self):
        self.graph = fleet_graph(2)
        self.s1, self.s2 = "L1:s1-behavior", "L1:s2-behavior"

    def test_symmetric_closure(self):
        self.graph.add_relation(self.s1, self.s2, CORRELATES_WITH)
        self.assertTrue(self.graph.has_relation(self.s2, self.s1, CORRELATES_WITH))
        edges = [e for e in self.graph.edges() if e.relation == CORRELATES_WITH]
        self.assertEqual(len(edges), 1)

    def test_abstraction_must_go_up(self):
        with self.assertRaises(LevelViolation):
            self.graph.add_relation(self.s1, "L0:series:s1[0:200]", ABSTRACTION_OF)
        with self.assertRaises(LevelViolation):
            self.graph.add_relation(self.s1, self.s2, ABSTRACTION_OF)

    def test_anti_symmetry(self):
        self.graph.add_relation(self.s1, self.s2, PRECEDES)
        with self.assertRaises(AntiSymmetryViolation):
            self.graph.add_relation(self.s2, self.s1, PRECEDES)
        self.assertFalse(self.graph.has_relation(self.s2, self.s1, PRECEDES))

    def test_kind_conflict(self):
        with self.assertRaises(RelationKindConflict):
            self.graph.add_relation(self.s1, self.s2, PRECEDES, RelationKind.SYMMETRIC)
        self.graph.add_relation(self.s1, self.s2, 'shares_uplink', RelationKind.SYMMETRIC)
        with self.assertRaises(RelationKindConflict):
            self.graph.add_relation(self.s1, self.s2, 'shares_uplink', RelationKind.ANTI_SYMMETRIC)

    def test_unknown_node(self):
        with self.assertRaises(UnknownNode):
            self.graph.add_relation(self.s1, "L1:nope", CORRELATES_WITH)

    def test_placement_guards(self):
        with self.assertRaises(LevelViolation):
            self.graph.add_node(KnowledgeNode("L0:bare", L0, "bare"))
        with self.assertRaises(LevelViolation):
            self.graph.add_node(KnowledgeNode("Lstar:g", LSTAR, "g", payload=PayloadRef('event', '1')))
        with self.assertRaises(LevelViolation):
            self.graph.add_node(KnowledgeNode("L1:x", L1, "x", provenance=Provenance.INJECTED_EXPERT))

    def test_abstract_over_allocates_next_sub_level(self):
        graph = self.graph
        first = graph.abstract_over([self.s1, self.s2], "pair")
        self.assertEqual(graph.node(first).level, l2(0))
        second = graph.abstract_over([first, self.s1], "pair-of-pair")
        self.assertEqual(graph.node(second).level, l2(1))
        self.assertEqual(graph.check_invariants(), [])


class RefreshBottomUpTest(SimpleTestCase):
    def test_empty_evidence(self):
        graph = fleet_graph(2)
        self.assertEqual(graph.refresh_bottom_up([]), [])

    def test_l1_before_l2(self):
        graph = fleet_graph(3)
        goal = graph.ensure_goal("network-health")
        graph.refresh_bottom_up([event(1, 50, ["s1", "s2"])], goal=goal)
        log = graph.refresh_bottom_up([change("s1", 80)])
        self.assertEqual(log[0].node_id, "L1:s1-behavior")
        self.assertEqual(log[0].level, L1)
        self.assertIn("L2.0:event-1", [rec.node_id for rec in log])
        levels = [rec.level for rec in log]
        self.assertEqual(levels, sorted(levels))
        self.assertEqual(graph.node("L1:s1-behavior").summary['regime_changes'], 1)

    def test_forty_participants(self):
        graph = fleet_graph(50, length=60)
        ids = [f"s{i}" for i in range(1, 41)]
        log = graph.refresh_bottom_up([event(7, 120, ids)])
        l2_nodes = list(graph.nodes(l2(0)))
        self.assertEqual(len(l2_nodes), 1)
        linked = [src for src, _, rel in graph.g.in_edges("L2.0:event-7", keys=True) if rel == PARTICIPATES_IN]
        self.assertEqual(len(linked), 40)
        self.assertEqual([rec.node_id for rec in log], ["L2.0:event-7"])

    def test_unregistered_evidence_changes_nothing(self):
        graph = fleet_graph(2)
        before = export_graph(graph)
        with self.assertRaises(UnregisteredEvidence):
            graph.refresh_bottom_up([change("s1", 10), change("s9", 11)])
        self.assertEqual(export_graph(graph), before)

    def test_series_slice_summary(self):
        graph = fleet_graph(1)
        window = graph.store.resolve(graph.store.series_ref("s1", 20, 40))
        graph.refresh_bottom_up([window])
        stats = graph.node("L1:s1-behavior").summary['descriptive']
        self.assertAlmostEqual(stats['mean'], float(np.mean(window.values)))
        self.assertEqual(graph.node("L1:s1-behavior").freshness, 40)

    def test_l0_payload_never_written(self):
        graph = fleet_graph(3)
        payloads = {n.node_id: n.payload for n in graph.nodes(L0)}
        graph.refresh_bottom_up([change("s1", 5), event(1, 9, ["s1", "s2", "s3"])],
                                goal=graph.ensure_goal("network-health"))
        self.assertEqual({n.node_id: n.payload for n in graph.nodes(L0)}, payloads)


class SymbolizeEventTest(SimpleTestCase):
    def test_no_interest_keeps_structure(self):
        graph = fleet_graph(4)
        result = graph.symbolize_event(event(3, 70, ["s1", "s2", "s3"], kind=EventKind.NO_INTEREST))
        node = graph.node(result.node_id)
        self.assertTrue(node.label.startswith("no_interest"))
        self.assertEqual(node.attributes['detection_bin'], 70)
        self.assertEqual(len(result.edges), 3)

    def test_onset_recovery_precedes(self):
        graph = fleet_graph(4)
        onset = graph.symbolize_event(event(1, 50, ["s1", "s2"], paired=2))
        recovery = graph.symbolize_event(event(2, 100, ["s1", "s2"], kind=EventKind.RECOVERY, paired=1))
        self.assertTrue(graph.has_relation(onset.node_id, recovery.node_id, PRECEDES))
        self.assertFalse(graph.has_relation(recovery.node_id, onset.node_id, PRECEDES))

    def test_payload_resolves_to_event(self):
        graph = fleet_graph(2)
        ev = event(5, 10, ["s1"])
        result = graph.symbolize_event(ev)
        self.assertEqual(graph.store.resolve(graph.node(result.node_id).payload), ev)


class PartitionTest(SimpleTestCase):
    def test_goal_too_low(self):
        graph = fleet_graph(2)
        with self.assertRaises(GoalTooLow):
            partition_foa(graph, "L1:s1-behavior")

    def test_single_cluster(self):
        graph = fleet_graph(4)
        goal = graph.ensure_goal("network-health")
        graph.refresh_bottom_up([event(1, 50, ["s1", "s2"])], goal=goal)
        foas = partition_foa(graph, goal)
        self.assertEqual(len(foas), 1)
        self.assertEqual(foas[0].member_nodes, frozenset(reachable_below(graph, goal)))
        self.assertEqual(len(foas[0].member_nodes), 5)

    def test_disjoint_events_split(self):
        graph = fleet_graph(4)
        goal = graph.ensure_goal("network-health")
        graph.refresh_bottom_up([event(1, 50, ["s1", "s2"]), event(2, 90, ["s3", "s4"])], goal=goal)
        foas = partition_foa(graph, goal)
        self.assertEqual(len(foas), 2)
        self.assertFalse(foas[0].member_nodes & foas[1].member_nodes)
        self.assertEqual([f.foa_id for f in foas], [f"{goal}#0", f"{goal}#1"])

    def test_l2_goal(self):
        graph = fleet_graph(3)
        graph.symbolize_event(event(1, 20, ["s1", "s2"]))
        foas = partition_foa(graph, "L2.0:event-1")
        self.assertEqual(len(foas), 2)

    def test_survey_on_threads(self):
        graph = fleet_graph(4)
        goal = graph.ensure_goal("network-health")
        graph.refresh_bottom_up([event(1, 50, ["s1", "s2"]), event(2, 90, ["s3", "s4"])], goal=goal)
        foas = partition_foa(graph, goal)
        sizes = survey_foas(foas, lambda foa: len(foa.member_nodes), workers=2)
        self.assertEqual(sizes, [5, 5])


class SubFocusTest(SimpleTestCase):
    def setUp(self):
        self.graph = fleet_graph(4)
        goal = self.graph.ensure_goal("network-health")
        self.graph.refresh_bottom_up([event(1, 50, ["s1", "s2"]), event(2, 90, ["s3", "s4"])], goal=goal)
        self.foas = partition_foa(self.graph, goal)

    def test_subsymbolic_request(self):
        request = spawn_sfoa(self.foas[0], SubsymbolicNeed(("L1:s1-behavior",), 100, 150))
        self.assertEqual(request.status, RequestStatus.PENDING)
        self.assertIn(request, self.foas[0].sub_foci)
        answer_sfoa(self.graph, request)
        self.assertEqual(request.status, RequestStatus.ANSWERED)
        self.assertEqual(len(request.result), 1)
        self.assertEqual(len(request.result[0]), 50)
        self.assertEqual(request.change_log[0].node_id, "L1:s1-behavior")

    def test_symbolic_request(self):
        request = spawn_sfoa(self.foas[0], SymbolicQuery(("L2.0:event-1",), level=L1))
        answer_sfoa(self.graph, request)
        self.assertEqual(request.result, ["L1:s1-behavior", "L1:s2-behavior"])

    def test_out_of_scope(self):
        with self.assertRaises(OutOfScopeNeed):
            spawn_sfoa(self.foas[0], SubsymbolicNeed(("L1:s3-behavior",), 0, 10))


class ExchangeTest(SimpleTestCase):
    def test_export_sorted_and_symmetric_once(self):
        graph = fleet_graph(2)
        graph.add_relation("L1:s1-behavior", "L1:s2-behavior", CORRELATES_WITH)
        lines = export_graph(graph)
        records = [json.loads(line) for line in lines]
        nodes = [r['id'] for r in records if r['type'] == 'node']
        self.assertEqual(nodes, sorted(nodes))
        self.assertEqual(sum(1 for r in records if r.get('relation') == CORRELATES_WITH), 1)

    def test_restore_reproduces_export(self):
        graph = fleet_graph(3)
        graph.refresh_bottom_up([event(1, 50, ["s1", "s2"])], goal=graph.ensure_goal("network-health"))
        lines = export_graph(graph)
        restored = import_graph(lines, KnowledgeGraph(graph.store), expert=False)
        self.assertEqual(export_graph(restored), lines)

    def test_file_round_trip(self):
        graph = fleet_graph(2)
        graph.refresh_bottom_up([event(1, 50, ["s1", "s2"])], goal=graph.ensure_goal("network-health"))
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "graph.jsonl")
            count = write_graph(graph, path)
            restored = read_graph(path, KnowledgeGraph(graph.store), expert=False)
        self.assertEqual(count, len(export_graph(graph)))
        self.assertEqual(export_graph(restored), export_graph(graph))

    def test_expert_import(self):
        graph = fleet_graph(2)
        lines = [
            json.dumps({'type': 'node', 'id': 'L2.0:uplink-a', 'level': 'L2.0', 'label': 'uplink a'}),
            json.dumps({'type': 'edge', 'from': 'L1:s1-behavior', 'to': 'L2.0:uplink-a',
                        'relation': 'abstraction_of'}),
        ]
        import_graph(lines, graph)
        self.assertEqual(graph.node('L2.0:uplink-a').provenance, Provenance.INJECTED_EXPERT)
        self.assertTrue(graph.has_relation('L1:s1-behavior', 'L2.0:uplink-a', ABSTRACTION_OF))

    def test_expert_below_l2_rejected(self):
        graph = fleet_graph(1)
        with self.assertRaises(LevelViolation):
            import_graph([json.dumps({'type': 'node', 'id': 'L1:x', 'level': 'L1', 'label': 'x'})], graph)

    def test_failed_import_leaves_graph_alone(self):
        graph = fleet_graph(2)
        before = export_graph(graph)
        lines = [
            json.dumps({'type': 'node', 'id': 'L2.0:a', 'level': 'L2.0', 'label': 'a'}),
            json.dumps({'type': 'edge', 'from': 'L2.0:a', 'to': 'L1:s1-behavior', 'relation': 'abstraction_of'}),
        ]
        with self.assertRaises(LevelViolation):
            import_graph(lines, graph)
        self.assertEqual(export_graph(graph), before)

    def test_malformed_line(self):
        with self.assertRaises(InvalidGraphRecord) as ctx:
            import_graph(['', '{"type": "node"', ''])
        self.assertEqual(ctx.exception.line, 2)


# ── Randomized operation suite ────────────────────────────────────

def oracle_partition(graph, goal):
    """Reachability by plain search, components by union-find."""
    incoming = {}
    for src, dst, rel in graph.g.edges(keys=True):
        if rel in (ABSTRACTION_OF, PARTICIPATES_IN):
            incoming.setdefault(dst, []).append(src)
    reach, stack = set(), [goal]
    while stack:
        for src in incoming.get(stack.pop(), ()):
            if src not in reach and src != goal:
                reach.add(src)
                stack.append(src)
    parent = {n: n for n in reach}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for src, dst in graph.g.edges():
        if src in reach and dst in reach:
            parent[find(src)] = find(dst)
    groups = {}
    for n in reach:
        groups.setdefault(find(n), set()).add(n)
    return reach, sorted((frozenset(g) for g in groups.values()), key=min)


def random_operations(test, seed, n_ops):
    rng = random.Random(seed)
    store = SubsymbolicStore()
    graph = KnowledgeGraph(store)
    goal = graph.ensure_goal("network-health")
    series_ids = []
    next_event = 1
    relations = [ABSTRACTION_OF, PARTICIPATES_IN, PRECEDES, CORRELATES_WITH, 'same_rack']

    for _ in range(n_ops):
        payloads = {n.node_id: n.payload for n in graph.nodes(L0)}
        op = rng.random()
        try:
            if op < 0.15 or not series_ids:
                sid = f"s{len(series_ids) + 1}"
                store.add_series(Series(sid, np.arange(40, dtype=float) + rng.random()))
                graph.register_region(store.series_ref(sid), f"{sid}-behavior")
                series_ids.append(sid)
            elif op < 0.45:
                ids = list(graph.g.nodes)
                a, b = rng.choice(ids), rng.choice(ids)
                graph.add_relation(a, b, rng.choice(relations))
            elif op < 0.6:
                graph.refresh_bottom_up([change(rng.choice(series_ids), rng.randrange(400))])
            elif op < 0.75:
                members = rng.sample(series_ids, k=rng.randint(1, min(6, len(series_ids))))
                kind = rng.choice([EventKind.INTEREST, EventKind.NO_INTEREST])
                log = graph.refresh_bottom_up([event(next_event, rng.randrange(400), members, kind=kind)],
                                              goal=goal if rng.random() < 0.7 else None)
                next_event += 1
                levels = [rec.level for rec in log]
                test.assertEqual(levels, sorted(levels))
            elif op < 0.85:
                candidates = [n.node_id for n in graph.nodes() if n.level != LSTAR]
                graph.abstract_over(rng.sample(candidates, k=min(2, len(candidates))), f"abs-{rng.randrange(10**6)}")
            elif op < 0.92:
                level = rng.choice(["L1", "L2.0", "L2.3"])
                line = json.dumps({'type': 'node', 'id': f"{level}:expert-{rng.randrange(10**6)}",
                                   'level': level, 'label': 'expert'})
                import_graph([line], graph)
            else:
                reach, expected = oracle_partition(graph, goal)
                foas = partition_foa(graph, goal)
                got = [f.member_nodes for f in foas]
                test.assertEqual(got, expected)
                union = frozenset().union(*got) if got else frozenset()
                test.assertEqual(union, reach)
                test.assertEqual(sum(len(g) for g in got), len(reach))
        except ValidationFailure:
            pass
        test.assertEqual(graph.check_invariants(), [])
        for node in graph.nodes():
            if node.provenance == Provenance.INJECTED_EXPERT:
                test.assertGreaterEqual(node.level, l2(0))
        for node_id, payload in payloads.items():
            test.assertEqual(graph.node(node_id).payload, payload)
    return graph


class RandomizedOperationTest(SimpleTestCase):
    @tag('slow')
    def test_twenty_seeds_thousand_operations(self):
        for seed in range(20):
            with self.subTest(seed=seed):
                random_operations(self, seed, 1000)

    @PROPERTY_SETTINGS
    @given(st.integers(min_value=0, max_value=2**32 - 1))
    def test_short_runs(self, seed):
        random_operations(self, seed, 60)
