"""K-partite non-uniform hypergraph data model and sequential decision sets.

A board is a 4-partite hypergraph: one partition per surface, knot faces as
nodes. A matching is a set of pairwise-disjoint edges of cardinality 1-3.
Matchings are built by visiting nodes one at a time; the visited node picks a
decision (an uncovered node, an existing 2-edge to extend, or the empty set)
from its decision set. Two decision-set rules are implemented:

* ``knot``: all nodes are visited; candidates are uncovered nodes on other
  partitions plus existing 2-edges avoiding the visitor's partition; covered
  nodes take a forced empty decision; a node with no candidates becomes a
  singleton edge.
* ``bipartite``: only partition-0 nodes are visited; candidates are uncovered
  opposite-partition nodes; with none left the node stays unmatched.

States are immutable; ``apply_decision`` returns a new state.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import ContractError

Edge = frozenset
EMPTY_DECISION: Edge = frozenset()

MAX_EDGE_SIZE = 3
ENUMERATION_NODE_LIMIT = 12


class MatchGraph:
    """Node universe of a K-partite hypergraph: a partition index per node.

    Nodes are dense integer indices ``0..n-1``. Partitions 0..3 map to board
    surfaces (0, 2 wide; 1, 3 narrow) in the knot application, but the graph
    itself is agnostic.
    """

    __slots__ = ("partition", "n_partitions")

    def __init__(self, partition: Sequence[int], n_partitions: int = 4):
        arr = np.asarray(partition, dtype=np.int8)
        if arr.ndim != 1:
            raise ContractError("partition must be a 1-D sequence")
        if arr.size and (arr.min() < 0 or arr.max() >= n_partitions):
            raise ContractError(f"partition indices must lie in [0, {n_partitions})")
        self.partition = arr
        self.partition.setflags(write=False)
        self.n_partitions = int(n_partitions)

    @property
    def n_nodes(self) -> int:
        return int(self.partition.size)

    def nodes_in(self, k: int) -> list:
        return [int(v) for v in np.flatnonzero(self.partition == k)]

    def __len__(self) -> int:
        return self.n_nodes

    def __repr__(self) -> str:
        sizes = [int(np.sum(self.partition == k)) for k in range(self.n_partitions)]
        return f"MatchGraph(sizes={sizes})"


@dataclass(frozen=True)
class DecisionState:
    """Partial matching plus the visit/decision history that produced it.

    Invariants: ``len(visit_order) == len(decisions)``; no repeated visits;
    replaying the history from the empty state reproduces ``matching``.
    ``covered`` caches the nodes contained in some edge.
    """

    graph: MatchGraph
    matching: frozenset
    visit_order: tuple
    decisions: tuple
    covered: frozenset

    @staticmethod
    def initial(graph: MatchGraph) -> "DecisionState":
        return DecisionState(graph, frozenset(), (), (), frozenset())

    @property
    def n_visited(self) -> int:
        return len(self.visit_order)

    def is_complete(self) -> bool:
        return self.n_visited == self.graph.n_nodes

    def is_visited(self, v: int) -> bool:
        return v in self.visit_order

    def edge_of(self, v: int):
        """Edge containing node v, or None if v is uncovered."""
        if v not in self.covered:
            return None
        for e in self.matching:
            if v in e:
                return e
        raise AssertionError("covered flag inconsistent with matching")


def validate_matching(graph: MatchGraph, matching: Iterable) -> None:
    """Raise ContractError unless edges are disjoint, cross-partition, size <= 3."""
    seen = set()
    part = graph.partition
    for e in matching:
        if not 1 <= len(e) <= MAX_EDGE_SIZE:
            raise ContractError(f"edge {sorted(e)} has cardinality {len(e)}")
        parts = [int(part[v]) for v in e]
        if len(set(parts)) != len(parts):
            raise ContractError(f"edge {sorted(e)} repeats a partition")
        for v in e:
            if v in seen:
                raise ContractError(f"node {v} appears in two edges")
            seen.add(v)


def _eligible_two_edges(state: DecisionState, v: int) -> list:
    part = state.graph.partition
    pv = part[v]
    out = [e for e in state.matching
           if len(e) == 2 and all(part[u] != pv for u in e)]
    out.sort(key=lambda e: tuple(sorted(e)))
    return out


def _uncovered_other_partition(state: DecisionState, v: int) -> list:
    part = state.graph.partition
    pv = part[v]
    return [u for u in range(state.graph.n_nodes)
            if u != v and u not in state.covered and part[u] != pv]


def decision_set_knot(state: DecisionState, v: int) -> list:
    """Candidate decisions for node v under the knot rule.

    Covered nodes get the forced empty decision. Otherwise: every uncovered
    node on a different partition (as a singleton candidate) plus every
    existing 2-edge not touching v's partition; the empty decision alone when
    no candidate exists (v becomes a singleton edge).

    Ordering is deterministic: singletons ascending by node index, then
    2-edges by sorted members, the empty set only ever alone.
    """
    if state.is_visited(v):
        raise ContractError(f"node {v} was already visited")
    if v in state.covered:
        return [EMPTY_DECISION]
    cands = [frozenset((u,)) for u in _uncovered_other_partition(state, v)]
    cands.extend(_eligible_two_edges(state, v))
    if not cands:
        return [EMPTY_DECISION]
    return cands


def decision_set_bipartite(state: DecisionState, v: int) -> list:
    """Candidate decisions for node v under the bipartite rule (K=2).

    Returns all uncovered opposite-partition nodes as singleton candidates;
    an empty list means v must remain unmatched (forced empty decision).
    """
    if state.graph.n_partitions != 2 and set(state.graph.partition.tolist()) - {0, 1}:
        raise ContractError("bipartite decision sets need a 2-partition graph")
    if state.is_visited(v):
        raise ContractError(f"node {v} was already visited")
    return [frozenset((u,)) for u in _uncovered_other_partition(state, v)]


def decision_set(state: DecisionState, v: int, model: str = "knot") -> list:
    if model == "knot":
        return decision_set_knot(state, v)
    if model == "bipartite":
        return decision_set_bipartite(state, v)
    raise ContractError(f"unknown decision model {model!r}")


def apply_decision(state: DecisionState, v: int, d: Edge,
                   model: str = "knot", validate: bool = True) -> DecisionState:
    """Apply decision d for node v: the new edge is ``d | {v}``.

    For the empty decision: covered nodes keep the matching unchanged; an
    uncovered node becomes a singleton edge under the knot rule and stays
    unmatched under the bipartite rule.
    """
    if validate:
        ds = decision_set(state, v, model)
        if d not in ds and not (d == EMPTY_DECISION and not ds):
            raise ContractError(
                f"decision {sorted(d)} not in the decision set of node {v}")
    matching = set(state.matching)
    covered = state.covered
    if d == EMPTY_DECISION:
        if v not in covered and model == "knot":
            matching.add(frozenset((v,)))
            covered = covered | {v}
    else:
        new_edge = d | {v}
        matching.discard(d)
        matching.add(new_edge)
        covered = covered | new_edge
    new_state = DecisionState(
        graph=state.graph,
        matching=frozenset(matching),
        visit_order=state.visit_order + (v,),
        decisions=state.decisions + (d,),
        covered=covered,
    )
    if validate:
        validate_matching(state.graph, new_state.matching)
    return new_state


def replay(graph: MatchGraph, visit_order: Sequence[int], decisions: Sequence,
           model: str = "knot") -> DecisionState:
    """Rebuild a state from scratch by replaying (visit_order, decisions)."""
    state = DecisionState.initial(graph)
    for v, d in zip(visit_order, decisions):
        state = apply_decision(state, int(v), frozenset(d), model=model)
    return state


def _visitable(graph: MatchGraph, model: str) -> list:
    if model == "bipartite":
        return graph.nodes_in(0)
    return list(range(graph.n_nodes))


def coarse_successors(graph: MatchGraph, matching: frozenset, visited: frozenset,
                      model: str = "knot") -> Iterator:
    """One-step successors of a (matching, visited-set) state.

    Yields ``(v, d, new_matching, new_visited)`` for every legal move. This is
    the covering relation of the poset the SMC sampler walks; enumeration
    utilities and test oracles are built on it.
    """
    state = _coarse_state(graph, matching, visited)
    for v in _visitable(graph, model):
        if v in visited:
            continue
        ds = decision_set(state, v, model)
        if not ds:
            ds = [EMPTY_DECISION]
        for d in ds:
            nxt = apply_decision(state, v, d, model=model, validate=False)
            yield v, d, nxt.matching, frozenset(nxt.visit_order)


def _coarse_state(graph: MatchGraph, matching: frozenset, visited: frozenset) -> DecisionState:
    # visit_order carries the visited set; order is irrelevant for decision sets
    covered = frozenset(u for e in matching for u in e)
    return DecisionState(graph, matching, tuple(sorted(visited)), (), covered)


def state_from_matching_visited(graph: MatchGraph, matching: Iterable,
                                visited: Iterable) -> DecisionState:
    """State with the given partial matching and visited set (order-agnostic)."""
    m = frozenset(frozenset(e) for e in matching)
    return _coarse_state(graph, m, frozenset(visited))


def reachable_states(graph: MatchGraph, model: str = "knot"):
    """All (matching, visited) states reachable from the empty state.

    Returns ``(states, predecessors)`` where predecessors maps each state to
    the set of reachable states one proposal step before it.
    """
    if graph.n_nodes > ENUMERATION_NODE_LIMIT:
        raise ContractError(
            f"refusing exhaustive enumeration beyond {ENUMERATION_NODE_LIMIT} nodes")
    init = (frozenset(), frozenset())
    states = {init}
    preds: dict = {init: set()}
    frontier = [init]
    while frontier:
        m, vis = frontier.pop()
        for _v, _d, m2, vis2 in coarse_successors(graph, m, vis, model):
            key = (m2, vis2)
            preds.setdefault(key, set()).add((m, vis))
            if key not in states:
                states.add(key)
                frontier.append(key)
    return states, preds


def enumerate_matchings(graph: MatchGraph, model: str = "knot") -> list:
    """All end matchings reachable by the decision model from the empty state.

    Exhaustive oracle for small graphs; refuses more than
    ``ENUMERATION_NODE_LIMIT`` nodes.
    """
    states, _ = reachable_states(graph, model)
    n_final = len(_visitable(graph, model))
    final = sorted({m for m, vis in states if len(vis) == n_final},
                   key=lambda m: sorted(tuple(sorted(e)) for e in m))
    return final


def canonical_matching(matching: Iterable) -> tuple:
    """Hashable canonical form: lexicographically sorted tuple of sorted edges."""
    return tuple(sorted(tuple(sorted(e)) for e in matching))


def is_reachable_matching(graph: MatchGraph, matching) -> bool:
    """Whether a complete matching is producible by the knot decision model.

    A singleton can only form once every cross-partition node is covered and
    no eligible 2-edge exists, which forces: all singleton edges on one
    partition P*, and every 2-edge containing a node of P*. The condition is
    also sufficient (complete the 3-edges and the 2-edges first, then visit
    the singleton nodes); tests verify both directions against exhaustive
    enumeration.
    """
    singles = [e for e in matching if len(e) == 1]
    if not singles:
        return True
    parts = {int(graph.partition[next(iter(e))]) for e in singles}
    if len(parts) > 1:
        return False
    pstar = parts.pop()
    return all(any(int(graph.partition[v]) == pstar for v in e)
               for e in matching if len(e) == 2)
