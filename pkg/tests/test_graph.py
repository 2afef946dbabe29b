import pytest

from knotmatch.errors import ContractError
from knotmatch.graph import (EMPTY_DECISION, DecisionState, MatchGraph,
                             apply_decision, canonical_matching,
                             decision_set_bipartite, decision_set_knot,
                             enumerate_matchings, is_reachable_matching,
                             replay, validate_matching)

from oracles import all_complete_matchings, all_shapes, shape_partitions


def e(*nodes):
    return frozenset(nodes)


def walk(graph, steps, model="knot"):
    state = DecisionState.initial(graph)
    for v, d in steps:
        state = apply_decision(state, v, d, model=model)
    return state


class TestBipartiteDecisionSets:
    # three nodes per side; even indices on side 0, odd on side 1
    graph = MatchGraph([0, 1, 0, 1, 0, 1], n_partitions=2)

    def test_first_visit_offers_all_opposite_nodes(self):
        state = DecisionState.initial(self.graph)
        assert decision_set_bipartite(state, 2) == [e(1), e(3), e(5)]

    def test_candidates_shrink_after_a_pick(self):
        state = walk(self.graph, [(2, e(1))], model="bipartite")
        assert decision_set_bipartite(state, 0) == [e(3), e(5)]

    def test_exhausted_side_leaves_no_candidates(self):
        g = MatchGraph([0, 0, 1], n_partitions=2)
        state = walk(g, [(0, e(2))], model="bipartite")
        assert decision_set_bipartite(state, 1) == []

    def test_visited_node_rejected(self):
        state = walk(self.graph, [(2, e(1))], model="bipartite")
        with pytest.raises(ContractError):
            decision_set_bipartite(state, 2)


class TestKnotDecisionSets:
    def test_first_node_sees_every_cross_partition_node(self):
        g = MatchGraph([0, 1, 1, 2, 2, 3, 3])
        state = DecisionState.initial(g)
        assert decision_set_knot(state, 0) == [e(v) for v in range(1, 7)]

    def test_covered_node_gets_only_the_empty_decision(self):
        g = MatchGraph([0, 1, 2, 3])
        state = walk(g, [(0, e(1))])
        assert decision_set_knot(state, 1) == [EMPTY_DECISION]

    def test_saturated_edge_leaves_singleton_decision(self, four_by_one):
        # pair {0,1} grows to {0,1,2}; node 3 then has nothing to join
        state = walk(four_by_one, [(0, e(1)), (2, e(0, 1)), (1, EMPTY_DECISION)])
        assert decision_set_knot(state, 3) == [EMPTY_DECISION]
        state = apply_decision(state, 3, EMPTY_DECISION)
        assert e(3) in state.matching

    def test_two_edges_on_own_partition_excluded(self):
        g = MatchGraph([0, 0, 1, 2])
        state = walk(g, [(0, e(2))])
        # {0,2} uses partitions 0 and 1: not joinable from partition 0
        assert decision_set_knot(state, 1) == [e(3)]

    def test_ordering_singletons_then_pairs(self):
        g = MatchGraph([0, 1, 2, 3, 3])
        state = walk(g, [(0, e(1))])
        assert decision_set_knot(state, 2) == [e(3), e(4), e(0, 1)]


class TestApplyDecision:
    def test_first_pair(self, four_by_one):
        state = walk(four_by_one, [(0, e(1))])
        assert state.matching == frozenset({e(0, 1)})

    def test_pair_grows_to_triple(self, four_by_one):
        state = walk(four_by_one, [(0, e(1)), (2, e(0, 1))])
        assert state.matching == frozenset({e(0, 1, 2)})

    def test_covered_noop(self, four_by_one):
        state = walk(four_by_one, [(0, e(1)), (2, e(0, 1)),
                                   (1, EMPTY_DECISION)])
        assert state.matching == frozenset({e(0, 1, 2)})
        assert state.visit_order == (0, 2, 1)

    def test_decision_outside_the_set_rejected(self, four_by_one):
        state = walk(four_by_one, [(0, e(1))])
        with pytest.raises(ContractError):
            apply_decision(state, 2, e(3, 1))  # node 1 is covered


class TestEnumeration:
    def test_one_node_per_partition_has_seven_end_states(self, four_by_one):
        assert len(enumerate_matchings(four_by_one)) == 7

    def test_single_node_graph(self):
        ms = enumerate_matchings(MatchGraph([0]))
        assert ms == [frozenset({e(0)})]

    def test_bipartite_two_by_two_end_states(self):
        # brute force over all visit/decision paths gives exactly the two
        # perfect matchings: a node is never allowed to stay unmatched while
        # opposite candidates remain
        g = MatchGraph([0, 0, 1, 1], n_partitions=2)
        ms = enumerate_matchings(g, model="bipartite")
        assert sorted(canonical_matching(m) for m in ms) == [
            ((0, 2), (1, 3)), ((0, 3), (1, 2))]

    def test_too_large_graph_refused(self):
        with pytest.raises(ContractError):
            enumerate_matchings(MatchGraph([0] * 13))


class TestInvariants:
    def random_path(self, rng, graph):
        from knotmatch.graph import decision_set
        state = DecisionState.initial(graph)
        order = rng.permutation(graph.n_nodes)
        for v in order:
            ds = decision_set(state, int(v), "knot")
            state = apply_decision(state, int(v), ds[rng.integers(len(ds))])
        return state

    def test_random_paths_keep_matchings_valid(self, rng):
        for _ in range(50):
            shape = tuple(rng.integers(0, 3, size=4))
            if sum(shape) == 0:
                continue
            g = MatchGraph(shape_partitions(shape))
            state = self.random_path(rng, g)
            validate_matching(g, state.matching)
            assert max(len(edge) for edge in state.matching) <= 3
            covered = {v for edge in state.matching for v in edge}
            assert covered == set(range(g.n_nodes))

    def test_replay_reproduces_the_matching(self, rng):
        for _ in range(30):
            shape = tuple(rng.integers(0, 3, size=4))
            if sum(shape) == 0:
                continue
            g = MatchGraph(shape_partitions(shape))
            state = self.random_path(rng, g)
            again = replay(g, state.visit_order, state.decisions)
            assert again.matching == state.matching


class TestReachability:
    def test_predicate_matches_exhaustive_enumeration(self):
        # reachable-by-construction end states vs the closed-form predicate,
        # on every partition shape with up to five nodes
        for shape in all_shapes(5):
            g = MatchGraph(shape_partitions(shape))
            reached = {canonical_matching(m) for m in enumerate_matchings(g)}
            for m in all_complete_matchings(g):
                assert is_reachable_matching(g, m) == (
                    canonical_matching(m) in reached), (shape, sorted(
                        canonical_matching(m)))

    def test_cross_partition_singletons_unreachable(self):
        g = MatchGraph([0, 1, 2, 3])
        m = frozenset({e(0), e(2), e(1, 3)})
        assert not is_reachable_matching(g, m)
