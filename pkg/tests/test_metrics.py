import pytest

from knotmatch.errors import ContractError
from knotmatch.graph import MatchGraph, enumerate_matchings
from knotmatch.metrics import (JACCARD_NODE_FLOOR, accuracy, aggregate_accuracy,
                               evaluate_board, jaccard_index)

from oracles import shape_partitions


def e(*nodes):
    return frozenset(nodes)


class TestAccuracy:
    def test_perfect(self):
        m = {e(0, 1), e(2, 3)}
        assert accuracy(m, m) == 1.0

    def test_disjoint(self):
        assert accuracy({e(0, 2), e(1, 3)}, {e(0, 1), e(2, 3)}) == 0.0

    def test_three_of_four(self):
        truth = {e(0, 1), e(2, 3), e(4, 5), e(6, 7)}
        pred = {e(0, 1), e(2, 3), e(4, 5), e(6), e(7)}
        assert accuracy(pred, truth) == pytest.approx(0.75)

    def test_empty_truth_is_vacuously_perfect(self):
        assert accuracy({e(0, 1)}, set()) == 1.0

    def test_adding_a_correct_edge_never_hurts(self):
        truth = {e(0, 1), e(2, 3)}
        worse = {e(0, 1), e(2), e(3)}
        better = {e(0, 1), e(2, 3)}
        assert accuracy(better, truth) >= accuracy(worse, truth)


class TestJaccard:
    def test_identical(self):
        m = {e(0, 1, 2), e(3)}
        assert jaccard_index(m, m) == 1.0

    def test_triple_versus_singleton(self):
        truth = {e(0, 1, 2)}
        pred = {e(0), e(1, 2)}
        # node 0: {0} vs {0,1,2} -> 1/3; nodes 1,2: {1,2} vs {0,1,2} -> 2/3
        assert jaccard_index(pred, truth) == pytest.approx((1 / 3 + 2 / 3 * 2) / 3)

    def test_per_node_floor_met_by_disjoint_triples(self):
        truth = {e(0, 1, 2), e(3), e(4)}
        pred = {e(0, 3, 4), e(1), e(2)}
        # node 0 sits in two 3-edges sharing only itself: 1/5
        values = []
        for v, pe, te in [(0, e(0, 3, 4), e(0, 1, 2))]:
            values.append(len(pe & te) / len(pe | te))
        assert values[0] == pytest.approx(JACCARD_NODE_FLOOR)
        assert jaccard_index(pred, truth) >= JACCARD_NODE_FLOOR

    def test_symmetry(self, rng):
        a = {e(0, 1), e(2, 3), e(4)}
        b = {e(0, 2), e(1, 4), e(3)}
        assert jaccard_index(a, b) == pytest.approx(jaccard_index(b, a))

    def test_uncovered_node_rejected(self):
        with pytest.raises(ContractError):
            jaccard_index({e(0, 1)}, {e(0, 1), e(2)})

    def test_identities_and_bounds_over_random_matchings(self, rng):
        cache = {}
        checked = 0
        while checked < 1000:
            shape = tuple(rng.integers(0, 3, size=4))
            if sum(shape) < 2:
                continue
            if shape not in cache:
                cache[shape] = enumerate_matchings(
                    MatchGraph(shape_partitions(shape)))
            options = cache[shape]
            a = options[rng.integers(len(options))]
            b = options[rng.integers(len(options))]
            assert accuracy(a, a) == 1.0
            assert jaccard_index(a, a) == 1.0
            j = jaccard_index(a, b)
            assert JACCARD_NODE_FLOOR <= j <= 1.0
            checked += 1


class TestReports:
    def test_aggregate_counts_edges_not_boards(self):
        r1 = evaluate_board("a", {e(0, 1)}, {e(0, 1)})
        r2 = evaluate_board("b", {e(0), e(1), e(2, 3)},
                            {e(0, 1), e(2, 3)})
        assert r1.accuracy == 1.0
        assert r2.accuracy == 0.5
        assert aggregate_accuracy([r1, r2]) == pytest.approx(2 / 3)

    def test_posterior_summaries(self):
        from knotmatch.smc import MatchingPosterior
        truth = {e(0, 1)}
        post = MatchingPosterior([(frozenset({e(0, 1)}), 0.75),
                                  (frozenset({e(0), e(1)}), 0.25)])
        rep = evaluate_board("p", {e(0, 1)}, truth, post)
        assert rep.jaccard_max == 1.0
        assert rep.jaccard_min == pytest.approx(0.5)
        assert rep.jaccard_weighted == pytest.approx(0.75 * 1.0 + 0.25 * 0.5)
        assert rep.jaccard_mean == pytest.approx(0.75)
