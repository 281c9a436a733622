"""
Focus of attention over the knowledge graph.

A goal node pulls in everything below it through ``abstraction_of`` and
``participates_in``; that reachable set is split into connected pieces,
one ``FocusOfAttention`` each.  A focus can ask for more data through a
sub-focus request: raw series windows from the subsymbolic store, or a
node query against the graph.

Usage
-----
    from metamodel.attention import SubsymbolicNeed, answer_sfoa, partition_foa, spawn_sfoa

    foas = partition_foa(graph, goal)
    request = spawn_sfoa(foas[0], SubsymbolicNeed(node_ids=("L1:s1-behavior",), start=100, stop=200))
    answer_sfoa(graph, request)
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from itertools import count

import networkx as nx
from joblib import Parallel, delayed

from .exceptions import GoalTooLow, OutOfScopeNeed, UnknownNode
from .graph import ABSTRACTION_OF, PARTICIPATES_IN, KnowledgeGraph
from .levels import L0, Level, l2
from .store import SERIES

logger = logging.getLogger(__name__)

_DOWNWARD = (ABSTRACTION_OF, PARTICIPATES_IN)
_request_ids = count(1)


class RequestStatus(str, Enum):
    PENDING = 'pending'
    ANSWERED = 'answered'


@dataclass(frozen=True)
class SubsymbolicNeed:
    """Raw data for the series behind ``node_ids`` over timeline range [start, stop)."""
    node_ids: tuple
    start: int | None = None
    stop: int | None = None


@dataclass(frozen=True)
class SymbolicQuery:
    node_ids: tuple
    level: Level | None = None
    label_contains: str | None = None


@dataclass
class SubFocusRequest:
    request_id: int
    foa_id: str
    target: SubsymbolicNeed | SymbolicQuery
    status: RequestStatus = RequestStatus.PENDING
    result: object = None
    change_log: list = field(default_factory=list)


@dataclass
class FocusOfAttention:
    foa_id: str
    goal_node: str
    member_nodes: frozenset
    sub_foci: list = field(default_factory=list)


def reachable_below(graph: KnowledgeGraph, goal: str) -> set[str]:
    seen = {goal}
    frontier = [goal]
    while frontier:
        current = frontier.pop()
        for source, _, relation in graph.g.in_edges(current, keys=True):
            if relation in _DOWNWARD and source not in seen:
                seen.add(source)
                frontier.append(source)
    seen.discard(goal)
    return seen


def partition_foa(graph: KnowledgeGraph, goal: str) -> list[FocusOfAttention]:
    """
    Disjoint foci covering every node reachable below ``goal``.

    Components are taken over all relations among the reachable nodes with
    the goal itself left out, so two evidence clusters that only meet at
    the goal stay apart.  Ordered by their smallest node id.
    """
    goal_level = graph.node(goal).level
    if goal_level < l2(0):
        raise GoalTooLow(f"goal {goal} sits at {goal_level}")
    members = reachable_below(graph, goal)
    view = nx.Graph(graph.g.subgraph(members))
    components = sorted((frozenset(c) for c in nx.connected_components(view)), key=min)
    foas = [
        FocusOfAttention(foa_id=f"{goal}#{i}", goal_node=goal, member_nodes=component)
        for i, component in enumerate(components)
    ]
    logger.debug("Goal %s: %d node(s) in %d focus partition(s)", goal, len(members), len(foas))
    return foas


def spawn_sfoa(foa: FocusOfAttention, need) -> SubFocusRequest:
    outside = sorted(set(need.node_ids) - foa.member_nodes)
    if outside:
        raise OutOfScopeNeed(f"{', '.join(outside)} not in focus {foa.foa_id}")
    request = SubFocusRequest(request_id=next(_request_ids), foa_id=foa.foa_id, target=need)
    foa.sub_foci.append(request)
    return request


def _series_behind(graph: KnowledgeGraph, node_id: str) -> list[str]:
    node = graph.node(node_id)
    if node.level == L0:
        return [node.payload.ref] if node.payload and node.payload.kind == SERIES else []
    found = []
    for source, _, relation in graph.g.in_edges(node_id, keys=True):
        if relation == ABSTRACTION_OF:
            found += _series_behind(graph, source)
    return found


def answer_sfoa(graph: KnowledgeGraph, request: SubFocusRequest, result=None) -> SubFocusRequest:
    """
    Complete a pending request.

    Subsymbolic needs fetch the series windows from the store and refresh
    the graph with them; symbolic queries run against the graph.  A caller
    may pass ``result`` to deliver data it fetched itself.
    """
    if request.status == RequestStatus.ANSWERED:
        return request
    target = request.target
    if isinstance(target, SubsymbolicNeed):
        if result is None:
            result = []
            for node_id in target.node_ids:
                for sid in sorted(set(_series_behind(graph, node_id))):
                    ref = graph.store.series_ref(sid, target.start, target.stop)
                    result.append(graph.store.resolve(ref))
        request.change_log = graph.refresh_bottom_up(result)
    else:
        for node_id in target.node_ids:
            if node_id not in graph:
                raise UnknownNode(f"no node {node_id!r}")
        if result is None:
            result = graph.query(level=target.level, label_contains=target.label_contains,
                                 within=_closure(graph, target.node_ids))
    request.result = result
    request.status = RequestStatus.ANSWERED
    return request


def _closure(graph: KnowledgeGraph, node_ids) -> set[str]:
    found = set(node_ids)
    for node_id in node_ids:
        found |= reachable_below(graph, node_id)
    return found


def survey_foas(foas, work, workers: int = 1) -> list:
    """
    Run ``work(foa)`` for each focus.  Partitions share no members, so they
    may run on threads; anything they write goes back through the graph's
    writer lock.
    """
    if workers <= 1 or len(foas) <= 1:
        return [work(foa) for foa in foas]
    return Parallel(n_jobs=workers, prefer='threads')(delayed(work)(foa) for foa in foas)
