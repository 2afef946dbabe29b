from collections import defaultdict

import numpy as np
import pytest

from knotmatch.errors import DataError
from knotmatch.geometry import Board, Standardization
from knotmatch.graph import MatchGraph
from knotmatch.mcem import (Design, LatentPaths, McemConfig, SyntheticFeatures,
                            TrainingInstance, approximate_q, build_design,
                            design_value_grad, enumerate_latent_paths,
                            generate_synthetic_graphs, m_step,
                            recovery_experiment, run_mcem, sample_latent_paths)
from knotmatch.model import VisitPolicy, path_gradient, path_log_likelihood

from oracles import random_faces, total_variation


def knot_instance(rng, shape, matching_edges, std=None):
    faces = random_faces(rng, shape)
    std = std or Standardization.identity()
    board = Board("t", faces=faces)
    for label, edge in enumerate(matching_edges):
        for v in edge:
            faces[v].label = label
    return TrainingInstance.from_board(board, std)


def path_key(paths: LatentPaths, p: int):
    return (tuple(paths.path_v[p]), tuple(paths.path_d1[p]),
            tuple(paths.path_d2[p]))


def empirical_distribution(paths: LatentPaths):
    out = defaultdict(float)
    for p in range(paths.n_paths):
        out[path_key(paths, p)] += float(paths.weights[p])
    return out


def exact_distribution(paths: LatentPaths):
    out = {}
    for p in range(paths.n_paths):
        out[path_key(paths, p)] = float(paths.weights[p])
    return out


class TestLatentSampling:
    def test_two_node_pair_always_ends_at_observation(self, rng):
        inst = knot_instance(rng, (1, 1, 0, 0), [(0, 1)])
        paths = sample_latent_paths(inst, np.zeros(6), 200, rng)
        for state in paths.to_states(inst.graph):
            assert state.matching == inst.matching

    def test_multiple_visit_orders_reach_a_bipartite_matching(self, rng):
        # matching {{0,5},{2,1},{4,3}} on sides {0,2,4} / {1,3,5}
        covs = rng.normal(size=(6, 2))
        g = MatchGraph([0, 1, 0, 1, 0, 1], n_partitions=2)
        inst = TrainingInstance(
            board_id="bip", graph=g, features=SyntheticFeatures(covs),
            matching=frozenset({frozenset((0, 5)), frozenset((2, 1)),
                                frozenset((4, 3))}),
            model="bipartite")
        paths = sample_latent_paths(inst, np.zeros(2), 300, rng)
        orders = {tuple(paths.path_v[p]) for p in range(paths.n_paths)}
        assert (0, 2, 4) in orders and (2, 0, 4) in orders
        for state in paths.to_states(inst.graph, model="bipartite"):
            assert state.matching == inst.matching

    @pytest.mark.parametrize("scheme", ["constrained", "indicator"])
    def test_conditional_distribution_matches_enumeration(self, rng, scheme):
        inst = knot_instance(rng, (1, 1, 1, 1), [(0, 1, 2), (3,)])
        exact = exact_distribution(enumerate_latent_paths(inst, np.zeros(6)))
        paths = sample_latent_paths(inst, np.zeros(6), 20000, rng,
                                    scheme=scheme)
        emp = empirical_distribution(paths)
        assert total_variation(emp, exact) < 0.03

    def test_conditional_distribution_nonzero_theta(self, rng):
        inst = knot_instance(rng, (2, 1, 1, 0), [(0, 2, 3), (1,)])
        theta = rng.normal(size=6)
        exact = exact_distribution(enumerate_latent_paths(inst, theta))
        paths = sample_latent_paths(inst, theta, 20000, rng)
        assert total_variation(empirical_distribution(paths), exact) < 0.03

    def test_bipartite_conditional_distribution(self, rng):
        covs = rng.normal(size=(6, 2))
        g = MatchGraph([0, 1, 0, 1, 0, 1], n_partitions=2)
        inst = TrainingInstance(
            board_id="bip", graph=g, features=SyntheticFeatures(covs),
            matching=frozenset({frozenset((0, 1)), frozenset((2, 3)),
                                frozenset((4, 5))}),
            model="bipartite")
        theta = rng.normal(size=2)
        exact = exact_distribution(enumerate_latent_paths(inst, theta))
        paths = sample_latent_paths(inst, theta, 20000, rng)
        assert total_variation(empirical_distribution(paths), exact) < 0.03


class TestDesign:
    def test_design_likelihood_matches_path_log_likelihood(self, rng):
        inst = knot_instance(rng, (2, 1, 1, 1), [(0, 2), (1, 3, 4), (5,)]
                             if False else [(0, 2), (1, 3), (4,)])
        theta = rng.normal(size=6)
        paths = sample_latent_paths(inst, theta, 40, rng)
        design = build_design(inst, paths, dedupe=False)
        _value, _grad, path_ll = design_value_grad(design, theta)
        states = paths.to_states(inst.graph)
        for p, state in enumerate(states):
            want = path_log_likelihood(state, inst.features, theta,
                                       VisitPolicy.uniform())
            got = path_ll[p] + design.log_order_const
            assert got == pytest.approx(want, abs=1e-9)

    def test_design_gradient_matches_path_gradient_sum(self, rng):
        inst = knot_instance(rng, (1, 1, 2, 1), [(0, 1, 2), (3, 4)])
        theta = rng.normal(size=6)
        paths = sample_latent_paths(inst, theta, 25, rng)
        design = build_design(inst, paths, dedupe=False)
        _v, grad, _ = design_value_grad(design, theta)
        states = paths.to_states(inst.graph)
        want = np.zeros(6)
        for p, state in enumerate(states):
            want += paths.weights[p] * path_gradient(state, inst.features, theta)
        assert np.allclose(grad, want, atol=1e-9)

    def test_dedupe_preserves_the_design_value(self, rng):
        inst = knot_instance(rng, (1, 1, 1, 1), [(0, 1), (2, 3)])
        theta = rng.normal(size=6)
        paths = sample_latent_paths(inst, theta, 64, rng)
        raw = build_design(inst, paths, dedupe=False)
        ded = build_design(inst, paths, dedupe=True)
        v1, g1, _ = design_value_grad(raw, theta)
        v2, g2, _ = design_value_grad(ded, theta)
        assert v1 == pytest.approx(v2, abs=1e-10)
        assert np.allclose(g1, g2, atol=1e-10)


class TestApproximateQ:
    def test_single_path_reduces_to_path_likelihood(self, rng):
        inst = knot_instance(rng, (1, 1, 1, 0), [(0, 1, 2)])
        theta = rng.normal(size=6)
        paths = sample_latent_paths(inst, theta, 1, rng)
        design = build_design(inst, paths)
        lam = 1.0
        q, _se = approximate_q([design], theta, lam)
        state = paths.to_states(inst.graph)[0]
        want = path_log_likelihood(state, inst.features, theta) \
            - lam * float(theta @ theta)
        assert q == pytest.approx(want, abs=1e-9)

    def test_monte_carlo_matches_exact_within_two_se(self, rng):
        # small weights keep the linear predictors of the raw geometry O(1),
        # so the conditional spreads over many paths and the SE is meaningful
        inst = knot_instance(rng, (1, 1, 1, 1), [(0, 1, 2), (3,)])
        theta = rng.normal(size=6) * 0.01
        exact_paths = enumerate_latent_paths(inst, theta)
        q_exact, _ = approximate_q([build_design(inst, exact_paths)], theta, 1.0)
        paths = sample_latent_paths(inst, theta, 4000, rng)
        q_mc, se = approximate_q([build_design(inst, paths)], theta, 1.0)
        assert abs(q_mc - q_exact) < 2 * se + 1e-6

    def test_heavy_penalty_drives_estimate_to_zero(self, rng):
        inst = knot_instance(rng, (1, 1, 1, 0), [(0, 1), (2,)])
        paths = sample_latent_paths(inst, np.zeros(6), 50, rng)
        design = build_design(inst, paths)
        theta, _ = m_step([design], np.ones(6), lam=1e6)
        assert np.linalg.norm(theta) < 1e-3


class TestMStep:
    def designs(self, rng, theta_scale=0.5):
        inst = knot_instance(rng, (2, 2, 1, 1), [(0, 2), (1, 3, 4), (5,)])
        paths = sample_latent_paths(inst, rng.normal(size=6) * theta_scale,
                                    60, rng)
        return [build_design(inst, paths)]

    def test_gradient_vanishes_at_the_optimum(self, rng):
        designs = self.designs(rng)
        theta, _res = m_step(designs, np.zeros(6), lam=1.0)
        _, grad, _ = design_value_grad(designs[0], theta)
        grad = grad - 2.0 * theta  # d/dtheta of -penalty
        assert np.linalg.norm(grad) < 1e-6

    def test_restarts_agree(self, rng):
        designs = self.designs(rng)
        t1, _ = m_step(designs, np.zeros(6), lam=1.0)
        t2, _ = m_step(designs, rng.normal(size=6) * 3, lam=1.0)
        assert np.linalg.norm(t1 - t2) < 1e-4

    def test_zero_features_give_zero_estimate(self):
        design = Design(rows=np.zeros((4, 6)),
                        step_ptr=np.array([0, 2, 4]),
                        chosen=np.array([0, 1], dtype=np.int32),
                        step_path=np.array([0, 0], dtype=np.int32),
                        path_weights=np.ones(1), n_nominal=1,
                        log_order_const=0.0)
        theta, _ = m_step([design], np.ones(6), lam=1.0)
        assert np.linalg.norm(theta) < 1e-8

    def test_objective_concave_along_segments(self, rng):
        designs = self.designs(rng)

        def q_of(th):
            v, _, _ = design_value_grad(designs[0], th)
            return v - float(th @ th)

        for _ in range(20):
            a = rng.normal(size=6)
            b = rng.normal(size=6)
            mid = 0.5 * (a + b)
            assert q_of(mid) >= 0.5 * (q_of(a) + q_of(b)) - 1e-9


class TestExactEMonotonicity:
    def test_q_never_decreases_with_exact_e_steps(self, rng):
        instances = [knot_instance(rng, (1, 1, 1, 1), [(0, 1, 2), (3,)]),
                     knot_instance(rng, (1, 1, 1, 0), [(0, 1), (2,)]),
                     knot_instance(rng, (2, 1, 1, 0), [(0, 2), (1, 3)])]
        lam = 1.0
        theta = np.zeros(6)
        prev = None
        for _ in range(8):
            designs = [build_design(i, enumerate_latent_paths(i, theta))
                       for i in instances]
            q_before, _ = approximate_q(designs, theta, lam)
            theta, _ = m_step(designs, theta, lam)
            q_after, _ = approximate_q(designs, theta, lam)
            assert q_after >= q_before - 1e-9
            if prev is not None:
                assert q_before >= prev - 1e-9
            prev = q_before


class TestRunMcem:
    def test_no_instances_returns_zero(self):
        theta, trace = run_mcem([], McemConfig())
        assert np.all(theta == 0)
        assert len(trace) == 0

    def test_small_knot_training_converges(self, rng):
        instances = [knot_instance(rng, (2, 2, 1, 1),
                                   [(0, 2), (1, 3, 4), (5,)]),
                     knot_instance(rng, (2, 1, 2, 0), [(0, 2), (1, 3), (4,)])]
        config = McemConfig(estep_schedule=(50, 50, 100),
                            max_iterations=8, seed=4)
        theta, trace = run_mcem(instances, config)
        assert np.all(np.isfinite(theta))
        assert len(trace) >= 2
        assert all(np.isfinite(q) for q in trace.q)

    def test_min_iterations_extends_the_trace(self, rng):
        instances = [knot_instance(rng, (1, 1, 1, 0), [(0, 1), (2,)])]
        config = McemConfig(estep_schedule=(40,), max_iterations=10,
                            min_iterations=6, seed=1)
        _theta, trace = run_mcem(instances, config)
        assert len(trace) >= 6


class TestSyntheticGraphs:
    def test_zero_tau_gives_zero_parameters(self, rng):
        instances, theta = generate_synthetic_graphs(3, 4, tau=0.0, rng=rng)
        assert np.all(theta == 0)
        assert len(instances) == 3

    def test_matchings_are_complete_and_valid(self, rng):
        instances, _ = generate_synthetic_graphs(5, 6, rng=rng)
        for inst in instances:
            covered = {v for e in inst.matching for v in e}
            # balanced sides: every node is matched into a pair
            assert covered == set(range(12))
            assert all(len(e) == 2 for e in inst.matching)
            side0 = set(inst.graph.nodes_in(0))
            for e in inst.matching:
                assert len(set(e) & side0) == 1

    def test_known_order_fit_recovers_better_with_more_nodes(self):
        out = recovery_experiment(sizes=(4, 32), n_replicates=5,
                                  n_instances=10, seed=77)
        assert np.median(out[32]) < np.median(out[4])


class TestInstanceConstruction:
    def test_unlabelled_faces_rejected(self, rng):
        faces = random_faces(rng, (1, 1, 0, 0))
        board = Board("u", faces=faces)
        faces[0].label = 0
        with pytest.raises(DataError):
            TrainingInstance.from_board(board, Standardization.identity())

    def test_conflicting_singletons_are_projected_out(self, rng):
        faces = random_faces(rng, (1, 1, 1, 1))
        board = Board("c", faces=faces)
        # pair on partitions 1/3 plus singletons on 0 and 2: unreachable
        faces[0].label = 0
        faces[2].label = 1
        faces[1].label = 2
        faces[3].label = 2
        inst = TrainingInstance.from_board(board, Standardization.identity())
        assert inst.dropped_faces == (0, 2)
        assert inst.graph.n_nodes == 2
        assert inst.matching == frozenset({frozenset((0, 1))})

    def test_compatible_singleton_kept(self, rng):
        faces = random_faces(rng, (1, 1, 1, 0))
        board = Board("k", faces=faces)
        # pair {0,1} (partitions 0,1) + singleton on partition 2... the pair
        # does not contain partition 2, so the singleton is projected
        faces[0].label = 0
        faces[1].label = 0
        faces[2].label = 1
        inst = TrainingInstance.from_board(board, Standardization.identity())
        assert inst.dropped_faces == (2,)
        # singleton on partition 0 with pair containing partition 0: reachable
        faces2 = random_faces(rng, (2, 1, 0, 0))
        board2 = Board("k2", faces=faces2)
        faces2[0].label = 0
        faces2[2].label = 0
        faces2[1].label = 1
        inst2 = TrainingInstance.from_board(board2, Standardization.identity())
        assert inst2.dropped_faces == ()
        assert len(inst2.matching) == 2
