"""
Leveled knowledge graph
=======================
The symbolic side of the engine.  Nodes sit on levels L0 (raw data regions)
< L1 (links from raw data to symbols) < L2.k (learned abstractions, any
number of sub-levels) < Lstar (goals).  Relations are either symmetric
(stored in both directions) or anti-symmetric (one direction; the reverse
is rejected).  ``abstraction_of`` is anti-symmetric and must point strictly
upward.

All mutations go through one writer lock; reads take no lock.

Usage
-----
    from metamodel.graph import KnowledgeGraph
    from metamodel.store import SubsymbolicStore

    store = SubsymbolicStore()
    store.add_series(series)
    graph = KnowledgeGraph(store)
    l0, l1 = graph.register_region(store.series_ref(series.series_id), f"{series.series_id}-behavior")
    log = graph.refresh_bottom_up(regime_changes + events, goal=graph.ensure_goal("network-health"))
"""
from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field
from enum import Enum
from itertools import count

import networkx as nx
import numpy as np

from fleet.events import EventKind, EventOfInterest
from segmentation.regimes import RegimeChange
from timeseries.series import Series

from .exceptions import (
    AntiSymmetryViolation,
    LevelViolation,
    RelationKindConflict,
    UnknownNode,
    UnregisteredEvidence,
)
from .levels import L0, L1, LSTAR, Level, l2
from .store import EVENT, PayloadRef, SubsymbolicStore

logger = logging.getLogger(__name__)


class Provenance(str, Enum):
    BOTTOM_UP = 'bottom_up'
    INJECTED_EXPERT = 'injected_expert'


class RelationKind(str, Enum):
    SYMMETRIC = 'symmetric'
    ANTI_SYMMETRIC = 'anti_symmetric'


ABSTRACTION_OF = 'abstraction_of'
PARTICIPATES_IN = 'participates_in'
PRECEDES = 'precedes'
CORRELATES_WITH = 'correlates_with'

DEFAULT_KINDS = {
    ABSTRACTION_OF: RelationKind.ANTI_SYMMETRIC,
    PARTICIPATES_IN: RelationKind.ANTI_SYMMETRIC,
    PRECEDES: RelationKind.ANTI_SYMMETRIC,
    CORRELATES_WITH: RelationKind.SYMMETRIC,
}


@dataclass
class KnowledgeNode:
    node_id: str
    level: Level
    label: str
    payload: PayloadRef | None = None
    provenance: Provenance = Provenance.BOTTOM_UP
    freshness: int | None = None
    summary: dict = field(default_factory=dict)
    attributes: dict = field(default_factory=dict)


@dataclass(frozen=True)
class KnowledgeEdge:
    edge_id: str
    source: str
    target: str
    relation: str
    kind: RelationKind


@dataclass(frozen=True)
class ChangeRecord:
    node_id: str
    level: Level
    action: str


@dataclass(frozen=True)
class SymbolizedEvent:
    node_id: str
    edges: tuple


class KnowledgeGraph:
    """Single-writer, multi-reader leveled graph backed by ``networkx.MultiDiGraph``."""

    def __init__(self, store: SubsymbolicStore | None = None):
        self.store = store if store is not None else SubsymbolicStore()
        self.g = nx.MultiDiGraph()
        self._writer = threading.RLock()
        self._relation_kinds: dict[str, RelationKind] = dict(DEFAULT_KINDS)
        self._l1_by_series: dict[str, str] = {}
        self._event_nodes: dict[int, str] = {}
        self._order = count()

    # ── Reads ─────────────────────────────────────────────────────

    def __contains__(self, node_id):
        return node_id in self.g

    def __len__(self):
        return self.g.number_of_nodes()

    def node(self, node_id: str) -> KnowledgeNode:
        try:
            return self.g.nodes[node_id]['node']
        except KeyError:
            raise UnknownNode(f"no node {node_id!r}") from None

    def nodes(self, level: Level | None = None):
        for _, data in self.g.nodes(data='node'):
            if level is None or data.level == level:
                yield data

    def edges(self):
        seen = set()
        for _, _, data in self.g.edges(data='edge'):
            if data.edge_id not in seen:
                seen.add(data.edge_id)
                yield data

    def has_relation(self, a: str, b: str, relation: str) -> bool:
        return self.g.has_edge(a, b, key=relation)

    def relation_kind(self, relation: str) -> RelationKind | None:
        return self._relation_kinds.get(relation)

    def l1_for_series(self, series_id: str) -> str | None:
        return self._l1_by_series.get(series_id)

    def event_node(self, event_id: int) -> str | None:
        return self._event_nodes.get(event_id)

    def query(self, level: Level | None = None, label_contains: str | None = None,
              within=None) -> list[str]:
        """Node ids matching a level and/or label fragment, sorted."""
        found = []
        for n in self.nodes(level):
            if label_contains is not None and label_contains not in n.label:
                continue
            if within is not None and n.node_id not in within:
                continue
            found.append(n.node_id)
        return sorted(found)

    def counts_by_level(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for n in self.nodes():
            out[str(n.level)] = out.get(str(n.level), 0) + 1
        return dict(sorted(out.items()))

    # ── Node creation ─────────────────────────────────────────────

    def add_node(self, node: KnowledgeNode) -> KnowledgeNode:
        """Insert a node after checking the level-placement rules."""
        if node.level == L0 and node.payload is None:
            raise LevelViolation(f"L0 node {node.node_id} must carry a payload")
        if node.level == LSTAR and node.payload is not None:
            raise LevelViolation(f"Lstar node {node.node_id} cannot carry a payload")
        if node.provenance == Provenance.INJECTED_EXPERT and node.level < l2(0):
            raise LevelViolation(f"expert knowledge enters at L2 or above, not {node.level}")
        with self._writer:
            if node.node_id in self.g:
                return self.g.nodes[node.node_id]['node']
            self.g.add_node(node.node_id, node=node, order=next(self._order))
            return node

    def ensure_goal(self, name: str, provenance: Provenance = Provenance.BOTTOM_UP) -> str:
        node_id = f"Lstar:{name}"
        self.add_node(KnowledgeNode(node_id=node_id, level=LSTAR, label=name, provenance=provenance))
        return node_id

    def register_region(self, payload_ref: PayloadRef, label: str, aliases=()):
        """
        Map a subsymbolic region to an L0 node and link it to an L1 node.
        ``aliases`` are extra evidence keys (device groups) resolving to the
        same L1 node.

        Returns
        -------
        (L0 node id, L1 node id); idempotent for identical (payload_ref, label).
        """
        self.store.resolve(payload_ref)
        l0_id = f"L0:{payload_ref.key()}"
        l1_id = f"L1:{label}"
        with self._writer:
            self.add_node(KnowledgeNode(node_id=l0_id, level=L0, label=payload_ref.key(),
                                        payload=payload_ref))
            self.add_node(KnowledgeNode(node_id=l1_id, level=L1, label=label))
            if not self.has_relation(l0_id, l1_id, ABSTRACTION_OF):
                self.add_relation(l0_id, l1_id, ABSTRACTION_OF)
            if payload_ref.kind == 'series':
                self._l1_by_series.setdefault(payload_ref.ref, l1_id)
            for key in aliases:
                self._l1_by_series.setdefault(key, l1_id)
        return l0_id, l1_id

    def abstract_over(self, node_ids, label: str, attributes: dict | None = None,
                      provenance: Provenance = Provenance.BOTTOM_UP) -> str:
        """
        New L2 node one sub-level above the highest L2 node it abstracts.
        Non-L2 inputs count as sub-level −1, so the new node lands on L2.0.
        """
        node_ids = sorted(node_ids)
        with self._writer:
            levels = [self.node(n).level for n in node_ids]
            if any(lv == LSTAR for lv in levels):
                raise LevelViolation("cannot abstract over goal nodes")
            top = max((lv.sub for lv in levels if lv.is_l2), default=-1)
            node_id = f"L2.{top + 1}:{label}"
            self.add_node(KnowledgeNode(node_id=node_id, level=l2(top + 1), label=label,
                                        provenance=provenance, attributes=dict(attributes or {})))
            for n in node_ids:
                if not self.has_relation(n, node_id, ABSTRACTION_OF):
                    self.add_relation(n, node_id, ABSTRACTION_OF)
        return node_id

    # ── Relations ─────────────────────────────────────────────────

    def add_relation(self, a: str, b: str, relation: str,
                     kind: RelationKind | str | None = None) -> list[KnowledgeEdge]:
        kind = RelationKind(kind) if kind is not None else self._relation_kinds.get(
            relation, RelationKind.ANTI_SYMMETRIC)
        with self._writer:
            for n in (a, b):
                if n not in self.g:
                    raise UnknownNode(f"no node {n!r}")
            declared = self._relation_kinds.get(relation)
            if declared is not None and declared != kind:
                raise RelationKindConflict(f"{relation} is {declared.value}, not {kind.value}")
            if relation == ABSTRACTION_OF:
                la, lb = self.node(a).level, self.node(b).level
                if not la < lb:
                    raise LevelViolation(f"abstraction_of must go upward: {a} ({la}) -> {b} ({lb})")

            if kind == RelationKind.SYMMETRIC:
                first, second = sorted((a, b))
                edge = KnowledgeEdge(f"{relation}:{first}~{second}", first, second, relation, kind)
                if not self.g.has_edge(a, b, key=relation):
                    self.g.add_edge(first, second, key=relation, edge=edge)
                    if first != second:
                        self.g.add_edge(second, first, key=relation, edge=edge)
            else:
                if a != b and self.g.has_edge(b, a, key=relation):
                    raise AntiSymmetryViolation(f"{relation}({b}, {a}) already present")
                edge = KnowledgeEdge(f"{relation}:{a}>{b}", a, b, relation, kind)
                if not self.g.has_edge(a, b, key=relation):
                    self.g.add_edge(a, b, key=relation, edge=edge)
            self._relation_kinds.setdefault(relation, kind)
            return [edge]

    # ── Bottom-up refresh ─────────────────────────────────────────

    def _l1_for(self, series_id: str) -> str:
        l1_id = self._l1_by_series.get(series_id)
        if l1_id is None:
            raise UnregisteredEvidence(f"series {series_id!r} has no registered region")
        return l1_id

    def _validate_evidence(self, evidence):
        for item in evidence:
            if isinstance(item, RegimeChange):
                self._l1_for(item.series_id)
            elif isinstance(item, Series):
                self._l1_for(item.series_id)
            elif isinstance(item, EventOfInterest):
                for sid in item.participants:
                    self._l1_for(sid)
                if item.kind is None:
                    raise UnregisteredEvidence(f"event {item.event_id} is not classified")
            else:
                raise UnregisteredEvidence(f"unsupported evidence {type(item).__name__}")

    def refresh_bottom_up(self, evidence, goal: str | None = None) -> list[ChangeRecord]:
        """
        Push new evidence upward: L1 summaries first, then L2 event nodes,
        then every L2 node that depends on a touched node, in level order.

        Returns
        -------
        list[ChangeRecord] whose levels never decrease.
        """
        evidence = list(evidence)
        if goal is not None:
            self.node(goal)
        self._validate_evidence(evidence)
        log: list[ChangeRecord] = []
        touched: set[str] = set()

        with self._writer:
            l1_touched: list[str] = []
            for item in evidence:
                if isinstance(item, RegimeChange):
                    l1_touched.append(self._absorb_change(item))
                elif isinstance(item, Series):
                    l1_touched.append(self._absorb_slice(item))
            for node_id in sorted(set(l1_touched), key=self._insertion):
                log.append(ChangeRecord(node_id, L1, 'summary'))
                touched.add(node_id)

            created = []
            events = sorted((e for e in evidence if isinstance(e, EventOfInterest)),
                            key=lambda e: (e.detection_bin, e.event_id))
            for event in events:
                created.append(self.symbolize_event(event, goal=goal).node_id)
            for node_id in created:
                log.append(ChangeRecord(node_id, self.node(node_id).level, 'symbolized'))
                touched.add(node_id)

            for node_id in self._dependents(touched):
                self._recompute(node_id)
                log.append(ChangeRecord(node_id, self.node(node_id).level, 'recomputed'))

        log.sort(key=lambda rec: rec.level)  # stable: keeps processing order within a level
        return log

    def _insertion(self, node_id):
        return self.g.nodes[node_id]['order']

    def _absorb_change(self, change: RegimeChange) -> str:
        l1_id = self._l1_for(change.series_id)
        node = self.node(l1_id)
        summary = node.summary
        summary['regime_changes'] = summary.get('regime_changes', 0) + 1
        summary['last_change'] = max(summary.get('last_change', change.timestamp), change.timestamp)
        summary['max_salience'] = max(summary.get('max_salience', 0.0), round(change.salience, 6))
        node.freshness = max(node.freshness or change.timestamp, change.timestamp)
        return l1_id

    def _absorb_slice(self, series: Series) -> str:
        l1_id = self._l1_for(series.series_id)
        node = self.node(l1_id)
        values = series.values
        node.summary['window'] = [series.start_timestamp, series.end_timestamp]
        node.summary['descriptive'] = {
            'mean': float(np.mean(values)) if values.size else None,
            'std': float(np.std(values)) if values.size else None,
            'min': float(np.min(values)) if values.size else None,
            'max': float(np.max(values)) if values.size else None,
        }
        node.freshness = max(node.freshness or series.end_timestamp, series.end_timestamp)
        return l1_id

    def _dependents(self, touched: set[str]) -> list[str]:
        """L2 nodes above the touched set (excluding the touched ones), in level order."""
        found: set[str] = set()
        frontier = list(touched)
        while frontier:
            current = frontier.pop()
            for _, target, relation in self.g.out_edges(current, keys=True):
                if relation not in (ABSTRACTION_OF, PARTICIPATES_IN):
                    continue
                level = self.node(target).level
                if level.is_l2 and target not in found and target not in touched:
                    found.add(target)
                    frontier.append(target)
        return sorted(found, key=lambda n: (self.node(n).level, self._insertion(n)))

    def _recompute(self, node_id: str):
        """An L2 node's summary is derived from the nodes directly below it."""
        node = self.node(node_id)
        below = [self.node(src) for src, _, rel in self.g.in_edges(node_id, keys=True)
                 if rel in (ABSTRACTION_OF, PARTICIPATES_IN)]
        fresh = [b.freshness for b in below if b.freshness is not None]
        node.summary['supporting_nodes'] = len(below)
        node.summary['supporting_changes'] = sum(b.summary.get('regime_changes', 0) for b in below)
        if fresh:
            node.freshness = max(fresh)

    # ── Events ────────────────────────────────────────────────────

    def symbolize_event(self, event: EventOfInterest, goal: str | None = None) -> SymbolizedEvent:
        """
        L2 event node linked from every participant's L1 node; a recovery is
        preceded by its onset node.  Labelling never removes structure.
        """
        kind = event.kind.value if event.kind else 'candidate'
        rule = event.explanation.get('rule', '')
        label = f"{kind}: {len(event.participants)} series changed together at bin {event.detection_bin}"
        node_id = f"L2.0:event-{event.event_id}"
        self.store.add_event(event)
        edges = []
        with self._writer:
            node = self.add_node(KnowledgeNode(
                node_id=node_id, level=l2(0), label=label,
                payload=PayloadRef(EVENT, str(event.event_id)),
                freshness=event.end_bin,
            ))
            node.label = label
            node.attributes.update({
                'kind': kind,
                'detection_bin': event.detection_bin,
                'peak_bin': event.peak_bin,
                'magnitude': event.magnitude,
                'rule': rule,
            })
            self._event_nodes[event.event_id] = node_id
            for sid in sorted(event.participants):
                edges += self.add_relation(self._l1_for(sid), node_id, PARTICIPATES_IN)
            if event.kind == EventKind.RECOVERY and event.paired_event in self._event_nodes:
                edges += self.add_relation(self._event_nodes[event.paired_event], node_id, PRECEDES)
            if goal is not None:
                edges += self.add_relation(node_id, goal, ABSTRACTION_OF)
        return SymbolizedEvent(node_id=node_id, edges=tuple(edges))

    # ── Invariants ────────────────────────────────────────────────

    def check_invariants(self) -> list[str]:
        problems = []
        for n in self.nodes():
            if n.level == L0 and n.payload is None:
                problems.append(f"L0 node {n.node_id} has no payload")
            if n.level == LSTAR and n.payload is not None:
                problems.append(f"Lstar node {n.node_id} carries a payload")
            if n.provenance == Provenance.INJECTED_EXPERT and n.level < l2(0):
                problems.append(f"expert node {n.node_id} below L2")
        for a, b, relation, edge in self.g.edges(keys=True, data='edge'):
            if relation == ABSTRACTION_OF and not self.node(a).level < self.node(b).level:
                problems.append(f"abstraction_of {a} -> {b} is not upward")
            if edge.kind == RelationKind.SYMMETRIC and not self.g.has_edge(b, a, key=relation):
                problems.append(f"symmetric {relation}({a}, {b}) lacks its reverse")
            if edge.kind == RelationKind.ANTI_SYMMETRIC and a != b and self.g.has_edge(b, a, key=relation):
                problems.append(f"anti-symmetric {relation}({a}, {b}) has a reverse")
            if self._relation_kinds.get(relation) != edge.kind:
                problems.append(f"{relation} stored with mixed kinds")
        return problems
