"""Poset SMC sampler over matchings.

The proposal is the sequential decision model itself: each iteration every
particle visits one more node and samples a decision. States are partially
ordered by extension; several proposal paths can reach the same (matching,
visited-set) state, which biases plain SMC. The overcounting correction
multiplies each particle's weight by 1/parentCount(new state), the uniform
backward kernel over the state's reachable predecessors.

Parent counts come from a per-edge case split keyed on edge size, number of
visited member nodes, and whether the state holds a singleton edge:

=========  =====  ================  =======
singleton  size   visited members   parents
=========  =====  ================  =======
absent     2      1 / 2             1 / 2
absent     3      2 / 3             2 / 6
present    1      1                 1
present    2      1 / 2             0 / 2
present    3      2 / 3             0 / 3
=========  =====  ================  =======

The zero rows cannot be completed by a last move (their would-be predecessor
states are unreachable), so they contribute no parents; a zero total is a
contract violation.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from ._kernels.state import ParticleState
from .errors import ContractError, NumericalError
from .geometry import (FaceArrays, pair_linear_predictors,
                       triplet_linear_predictors)
from .graph import DecisionState, MatchGraph, canonical_matching
from .model import ModelParams, VisitPolicy, decision_distribution

DEFAULT_ESS_THRESHOLD = 0.5
DEFAULT_SEGMENT_THRESHOLD = 500.0


# ---------------------------------------------------------------------------
# parent counting (object layer)
# ---------------------------------------------------------------------------

_NO_SINGLETON = {(2, 1): 1, (2, 2): 2, (3, 2): 2, (3, 3): 6}
_WITH_SINGLETON = {(1, 1): 1, (2, 1): 0, (2, 2): 2, (3, 2): 0, (3, 3): 3}


def parent_count(state: DecisionState) -> int:
    """Number of reachable predecessor states of a (matching, visited) state."""
    if state.n_visited == 0:
        raise ContractError("the initial state has no parents")
    visited = set(state.visit_order)
    table = (_WITH_SINGLETON if any(len(e) == 1 for e in state.matching)
             else _NO_SINGLETON)
    total = 0
    for e in state.matching:
        nv = sum(1 for u in e if u in visited)
        key = (len(e), nv)
        if key not in table:
            raise ContractError(f"impossible edge configuration {key}")
        total += table[key]
    if total == 0:
        raise ContractError("zero-parent state: not reachable by the proposal")
    return total


# ---------------------------------------------------------------------------
# particles and configuration
# ---------------------------------------------------------------------------

@dataclass
class Particle:
    state: DecisionState
    log_weight: float = 0.0


@dataclass
class SmcConfig:
    n_particles: int = 1000
    ess_threshold: float = DEFAULT_ESS_THRESHOLD
    seed: Optional[int] = None
    resampling: str = "systematic"
    correction: bool = True
    track_unique: bool = False

    def __post_init__(self):
        if self.n_particles < 1:
            raise ContractError("need at least one particle")
        if not 0 < self.ess_threshold <= 1:
            raise ContractError("ess_threshold must be in (0, 1]")


@dataclass
class SmcDiagnostics:
    ess: list = field(default_factory=list)
    resampled: list = field(default_factory=list)
    unique_counts: Optional[list] = None
    seconds: float = 0.0


@dataclass
class MatchingPosterior:
    """Weighted set of matchings aggregated by matching equality."""

    entries: list  # [(frozenset-of-frozensets, weight)] sorted by -weight

    def __post_init__(self):
        total = sum(w for _, w in self.entries)
        if self.entries and not math.isclose(total, 1.0, rel_tol=1e-9):
            self.entries = [(m, w / total) for m, w in self.entries]

    def __len__(self):
        return len(self.entries)

    def probability(self, matching) -> float:
        key = canonical_matching(matching)
        for m, w in self.entries:
            if canonical_matching(m) == key:
                return w
        return 0.0

    def as_dict(self) -> dict:
        return {canonical_matching(m): w for m, w in self.entries}


def map_matching(posterior: MatchingPosterior):
    """Highest-weight matching; ties broken by lexicographic edge order."""
    if not posterior.entries:
        raise ContractError("empty posterior")
    return min(posterior.entries,
               key=lambda mw: (-mw[1], canonical_matching(mw[0])))[0]


# ---------------------------------------------------------------------------
# single-particle proposal (reference implementation)
# ---------------------------------------------------------------------------

def propose(particle: Particle, features, theta, rng,
            policy: VisitPolicy = VisitPolicy.uniform(),
            correction: bool = True, model: str = "knot") -> Particle:
    """Extend one particle by one decision-model step.

    Samples the next node per the visit policy and a decision per the local
    multinomial, then adds log nu- = -log parentCount(new state) to the weight
    (or nothing with the correction off).
    """
    state = particle.state
    if state.is_complete():
        raise ContractError("particle is already complete")
    if policy.kind == "uniform":
        unvisited = [v for v in range(state.graph.n_nodes)
                     if not state.is_visited(v)]
        v = unvisited[int(rng.random() * len(unvisited)) % len(unvisited)]
    else:
        v = policy.order[state.n_visited]
    cands, probs = decision_distribution(state, v, features, theta, model)
    j = int(np.searchsorted(np.cumsum(probs), rng.random(), side="right"))
    j = min(j, len(cands) - 1)
    from .graph import apply_decision
    new_state = apply_decision(state, v, cands[j], model=model)
    log_inc = -math.log(parent_count(new_state)) if correction else 0.0
    return Particle(new_state, particle.log_weight + log_inc)


# ---------------------------------------------------------------------------
# array engine
# ---------------------------------------------------------------------------

@dataclass
class SmcContext:
    """Static per-graph inputs of a sampler run: graph + linear predictors."""

    graph: MatchGraph
    lp_pair: np.ndarray
    lp_tri: np.ndarray

    @classmethod
    def from_faces(cls, faces: Sequence, params: ModelParams) -> "SmcContext":
        arrays = FaceArrays.from_faces(faces)
        graph = MatchGraph(arrays.partition)
        return cls(graph,
                   pair_linear_predictors(arrays, params.theta, params.standardization),
                   triplet_linear_predictors(arrays, params.theta, params.standardization))

    @classmethod
    def from_features(cls, graph: MatchGraph, features, theta) -> "SmcContext":
        """Build lp tensors through the object-layer feature provider."""
        n = graph.n_nodes
        theta = np.asarray(theta, dtype=float)
        lp_pair = np.zeros((n, n))
        lp_tri = np.zeros((n, n, n))
        for u in range(n):
            for v in range(n):
                if u != v and graph.partition[u] != graph.partition[v]:
                    lp_pair[u, v] = theta @ features.phi(frozenset((u, v)))
        for u in range(n):
            for v in range(n):
                for w in range(n):
                    parts = {int(graph.partition[x]) for x in (u, v, w)}
                    if len({u, v, w}) == 3 and len(parts) == 3:
                        lp_tri[u, v, w] = theta @ features.phi(frozenset((u, v, w)))
        return cls(graph, lp_pair, lp_tri)


def normalized_weights(log_weights: np.ndarray) -> np.ndarray:
    m = np.max(log_weights)
    if not np.isfinite(m):
        raise NumericalError("degenerate particle population: all weights vanished")
    w = np.exp(log_weights - m)
    return w / w.sum()


def effective_sample_size(weights: np.ndarray) -> float:
    return float(1.0 / np.sum(weights * weights))


def resample_indices(weights: np.ndarray, rng, scheme: str = "systematic") -> np.ndarray:
    n = weights.shape[0]
    if scheme == "systematic":
        positions = (rng.random() + np.arange(n)) / n
        cum = np.cumsum(weights)
        cum[-1] = 1.0
        return np.minimum(np.searchsorted(cum, positions, side="right"), n - 1)
    if scheme == "multinomial":
        return rng.choice(n, size=n, p=weights)
    raise ContractError(f"unknown resampling scheme {scheme!r}")


def _run_population(context: SmcContext, config: SmcConfig, rng,
                    policy: VisitPolicy):
    graph = context.graph
    n = graph.n_nodes
    N = config.n_particles
    st = ParticleState(N, n)
    log_w = np.zeros(N)
    log_inc = np.empty(N)
    diag = SmcDiagnostics(unique_counts=[] if config.track_unique else None)
    order = policy.order if policy.kind == "fixed" else None
    if order is not None and len(order) != n:
        raise ContractError("fixed visit order must cover every node")
    for r in range(n):
        u_node = rng.random(N)
        u_dec = rng.random(N)
        fixed = int(order[r]) if order is not None else -1
        status = _kernels.propagate(
            graph.partition, context.lp_pair, context.lp_tri,
            st.edge_of, st.visited, st.edge_nodes, st.edge_size, st.edge_nvis,
            st.n_edges, st.n_sing, u_node, u_dec, fixed,
            config.correction, log_inc)
        if status:
            raise ContractError(
                f"zero parent count for particle {status - 1} at iteration {r}")
        log_w += log_inc
        w = normalized_weights(log_w)
        ess = effective_sample_size(w)
        diag.ess.append(ess)
        if config.track_unique:
            labels = st.canonical_labels()
            diag.unique_counts.append(int(np.unique(labels, axis=0).shape[0]))
        if ess < config.ess_threshold * N:
            idx = resample_indices(w, rng, config.resampling)
            st.take(idx)
            log_w[:] = 0.0
            diag.resampled.append(True)
        else:
            diag.resampled.append(False)
    return st, normalized_weights(log_w), diag


def _aggregate(st: ParticleState, weights: np.ndarray) -> MatchingPosterior:
    labels = st.canonical_labels()
    uniq, first, inverse = np.unique(labels, axis=0, return_index=True,
                                     return_inverse=True)
    agg = np.bincount(inverse, weights=weights, minlength=uniq.shape[0])
    entries = [(st.matching_of(int(first[k])), float(agg[k]))
               for k in range(uniq.shape[0])]
    entries.sort(key=lambda mw: (-mw[1], canonical_matching(mw[0])))
    return MatchingPosterior(entries)


def run_smc(context: SmcContext, config: SmcConfig,
            policy: VisitPolicy = VisitPolicy.uniform(),
            rng=None):
    """Run the sampler; returns (MatchingPosterior, SmcDiagnostics).

    R = n_nodes iterations of propagate / weight / ESS-triggered resampling;
    the final estimate uses the weighted particles when the last iteration did
    not resample.
    """
    t0 = time.perf_counter()
    if rng is None:
        rng = np.random.default_rng(config.seed)
    if context.graph.n_nodes == 0:
        return MatchingPosterior([(frozenset(), 1.0)]), SmcDiagnostics()
    st, weights, diag = _run_population(context, config, rng, policy)
    posterior = _aggregate(st, weights)
    diag.seconds = time.perf_counter() - t0
    return posterior, diag


# ---------------------------------------------------------------------------
# board-level prediction: segmentation + per-cluster SMC
# ---------------------------------------------------------------------------

def segment_board(board, threshold: float = DEFAULT_SEGMENT_THRESHOLD) -> list:
    """Single-linkage clusters of face indices at the given 3-D distance.

    Faces within ``threshold`` are linked; clusters are the connected
    components, each sorted ascending, ordered by smallest member.
    """
    if threshold <= 0:
        raise ContractError("segmentation threshold must be positive")
    n = len(board.faces)
    if n == 0:
        return []
    arrays = FaceArrays.from_faces(board.faces)
    D = arrays.distances()
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i in range(n):
        for j in range(i + 1, n):
            if D[i, j] <= threshold:
                pi, pj = find(i), find(j)
                if pi != pj:
                    parent[max(pi, pj)] = min(pi, pj)
    groups: dict = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return sorted(groups.values(), key=lambda g: g[0])


@dataclass
class BoardPrediction:
    board_id: str
    map_matching: frozenset          # union of per-cluster MAP matchings
    posterior: MatchingPosterior     # lane-paired composite over clusters
    seconds: float
    n_faces: int
    clusters: list


def predict_board(board, params: ModelParams, config: SmcConfig,
                  segment_threshold: float = DEFAULT_SEGMENT_THRESHOLD,
                  policy_kind: str = "uniform") -> BoardPrediction:
    """Segment, sample per cluster, and combine.

    The board-level MAP is the union of per-cluster MAP matchings (clusters
    are node-disjoint). The board-level posterior pairs particle lanes across
    clusters: lane k's composite matching is the union of the clusters' lane-k
    matchings with the product of their normalized weights.
    """
    t0 = time.perf_counter()
    clusters = segment_board(board, segment_threshold)
    n = len(board.faces)
    N = config.n_particles
    ss = np.random.SeedSequence(config.seed)
    children = ss.spawn(max(len(clusters), 1))
    map_edges: set = set()
    lane_labels = np.full((N, n), -1, dtype=np.int16)
    lane_logw = np.zeros(N)
    for c, cluster in enumerate(clusters):
        faces = [board.faces[i] for i in cluster]
        ctx = SmcContext.from_faces(faces, params)
        policy = (VisitPolicy.sorted_by_x(faces) if policy_kind == "sorted-by-x"
                  else VisitPolicy.uniform())
        rng = np.random.default_rng(children[c])
        st, weights, _diag = _run_population(ctx, config, rng, policy)
        local_post = _aggregate(st, weights)
        local_map = map_matching(local_post)
        mapping = np.asarray(cluster, dtype=np.int16)
        for e in local_map:
            map_edges.add(frozenset(int(mapping[v]) for v in e))
        labels = st.canonical_labels()
        lane_labels[:, mapping] = np.where(labels >= 0, mapping[labels], -1)
        lane_logw += np.log(np.maximum(weights, 1e-300))
    if not clusters:
        posterior = MatchingPosterior([(frozenset(), 1.0)])
    else:
        lane_w = normalized_weights(lane_logw)
        uniq, first, inverse = np.unique(lane_labels, axis=0, return_index=True,
                                         return_inverse=True)
        agg = np.bincount(inverse, weights=lane_w, minlength=uniq.shape[0])
        entries = []
        for k in range(uniq.shape[0]):
            row = uniq[k]
            edges: dict = {}
            for v in range(n):
                edges.setdefault(int(row[v]), set()).add(v)
            matching = frozenset(frozenset(members) for members in edges.values())
            entries.append((matching, float(agg[k])))
        entries.sort(key=lambda mw: (-mw[1], canonical_matching(mw[0])))
        posterior = MatchingPosterior(entries)
    seconds = time.perf_counter() - t0
    return BoardPrediction(board.id, frozenset(map_edges), posterior, seconds,
                           n, clusters)
