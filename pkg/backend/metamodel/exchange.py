"""
Line-oriented JSON export and import of the knowledge graph.

One node or edge per line, nodes first, each group sorted by id:

    {"type": "node", "id": "L1:s1-behavior", "level": "L1", "label": "s1-behavior", ...}
    {"type": "edge", "id": "participates_in:L1:s1-behavior>L2.0:event-1", "from": ..., "to": ..., ...}

Symmetric relations are written once.  Import of expert knowledge accepts
only nodes at L2 or above and stamps them ``injected_expert``.
"""
from __future__ import annotations

import json
import logging

from .exceptions import InvalidGraphRecord, LevelViolation, UnknownNode
from .graph import KnowledgeEdge, KnowledgeGraph, KnowledgeNode, Provenance, RelationKind
from .levels import Level, l2
from .store import PayloadRef

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


def _dumps(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(',', ':'), default=str)


def node_record(node: KnowledgeNode) -> dict:
    return {
        'type': 'node',
        'id': node.node_id,
        'level': str(node.level),
        'label': node.label,
        'provenance': node.provenance.value,
        'freshness': node.freshness,
        'payload': node.payload.to_dict() if node.payload else None,
        'summary': node.summary,
        'attributes': node.attributes,
    }


def edge_record(edge: KnowledgeEdge) -> dict:
    return {
        'type': 'edge',
        'id': edge.edge_id,
        'from': edge.source,
        'to': edge.target,
        'relation': edge.relation,
        'kind': edge.kind.value,
    }


def export_graph(graph: KnowledgeGraph) -> list[str]:
    problems = graph.check_invariants()
    for problem in problems:
        logger.error("Graph invariant broken before export: %s", problem)
    nodes = sorted(graph.nodes(), key=lambda n: n.node_id)
    edges = sorted(graph.edges(), key=lambda e: e.edge_id)
    return [_dumps(node_record(n)) for n in nodes] + [_dumps(edge_record(e)) for e in edges]


def write_graph(graph: KnowledgeGraph, path) -> int:
    lines = export_graph(graph)
    with open(path, 'w', encoding='utf-8') as handle:
        for line in lines:
            handle.write(line + '\n')
    return len(lines)


# ── Import ────────────────────────────────────────────────────────

def _parse(lineno: int, text: str) -> dict:
    try:
        record = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidGraphRecord(lineno, f"not JSON ({exc.msg})") from None
    if not isinstance(record, dict) or record.get('type') not in ('node', 'edge'):
        raise InvalidGraphRecord(lineno, "expected an object with type 'node' or 'edge'")
    required = ('id', 'level', 'label') if record['type'] == 'node' else ('from', 'to', 'relation')
    missing = [key for key in required if key not in record]
    if missing:
        raise InvalidGraphRecord(lineno, f"missing {', '.join(missing)}")
    return record


def _node_from(lineno: int, record: dict, expert: bool) -> KnowledgeNode:
    try:
        level = Level.parse(record['level'])
    except ValueError as exc:
        raise InvalidGraphRecord(lineno, str(exc)) from None
    if expert and level < l2(0):
        raise LevelViolation(f"line {lineno}: expert node {record['id']} at {level}, must be L2 or above")
    payload = record.get('payload')
    try:
        provenance = Provenance.INJECTED_EXPERT if expert else Provenance(
            record.get('provenance', Provenance.BOTTOM_UP.value))
        payload = PayloadRef.from_dict(payload) if payload else None
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidGraphRecord(lineno, f"bad node field: {exc}") from None
    return KnowledgeNode(
        node_id=str(record['id']),
        level=level,
        label=str(record['label']),
        payload=payload,
        provenance=provenance,
        freshness=record.get('freshness'),
        summary=dict(record.get('summary') or {}),
        attributes=dict(record.get('attributes') or {}),
    )


def import_graph(lines, graph: KnowledgeGraph | None = None, expert: bool = True) -> KnowledgeGraph:
    """
    Load node and edge lines into ``graph`` (a new one when omitted).

    The whole batch lands or none of it does.  With ``expert`` set every
    node must sit at L2 or above; relation rules apply to every edge.
    """
    graph = graph if graph is not None else KnowledgeGraph()
    nodes, edges = [], []
    for lineno, text in enumerate(lines, start=1):
        text = text.strip()
        if not text:
            continue
        record = _parse(lineno, text)
        if record['type'] == 'node':
            node = _node_from(lineno, record, expert)
            if expert and node.payload is not None:
                graph.store.resolve(node.payload)
            nodes.append(node)
        else:
            try:
                kind = RelationKind(record['kind']) if record.get('kind') else None
            except ValueError:
                raise InvalidGraphRecord(lineno, f"unknown kind {record['kind']!r}") from None
            edges.append((lineno, record, kind))

    with graph._writer:
        staging = KnowledgeGraph(graph.store)
        staging.g = graph.g.copy()
        staging._relation_kinds = dict(graph._relation_kinds)
        staging._l1_by_series = dict(graph._l1_by_series)
        staging._event_nodes = dict(graph._event_nodes)
        staging._order = graph._order
        for node in nodes:
            staging.add_node(node)
        for lineno, record, kind in edges:
            for end in (record['from'], record['to']):
                if end not in staging:
                    raise UnknownNode(f"line {lineno}: no node {end!r}")
            staging.add_relation(record['from'], record['to'], record['relation'], kind)
        graph.g = staging.g
        graph._relation_kinds = staging._relation_kinds
    logger.info("Imported %d node(s) and %d edge(s)%s", len(nodes), len(edges),
                " as expert knowledge" if expert else "")
    return graph


def read_graph(path, graph: KnowledgeGraph | None = None, expert: bool = True) -> KnowledgeGraph:
    with open(path, encoding='utf-8') as handle:
        return import_graph(handle, graph=graph, expert=expert)
