"""Acceptance suite.

One test per acceptance criterion, each printing a single PASS/FAIL line with
its measured quantities. Tolerances are pinned here and nowhere else. Run
with ``pytest -s tests/test_acceptance.py`` to see the lines as they pass.
"""
import math
import time
from statistics import median

import numpy as np
import pytest

from knotmatch.boardsim import SimConfig, generate_boards, true_matching
from knotmatch.cli import cross_validate, predict_boards, train_model
from knotmatch.geometry import BoardFeatures, Standardization
from knotmatch.graph import (MatchGraph, canonical_matching,
                             state_from_matching_visited)
from knotmatch.mcem import (McemConfig, TrainingInstance, recovery_experiment,
                            run_mcem)
from knotmatch.metrics import (JACCARD_NODE_FLOOR, accuracy, aggregate_accuracy,
                               jaccard_index)
from knotmatch.model import path_gradient, path_log_likelihood
from knotmatch.smc import (SmcConfig, SmcContext, parent_count, run_smc)

from oracles import (all_shapes, brute_force_parent_counts, exact_posterior,
                     finite_difference_gradient, random_faces,
                     shape_partitions, total_variation)


def report(criterion: int, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}")
    assert ok, detail


def uniform_context():
    g = MatchGraph([0, 1, 2, 3])
    return SmcContext(g, np.zeros((4, 4)), np.zeros((4, 4, 4)))


def rmse_vs_uniform(posterior) -> float:
    probs = {k: w for k, w in posterior.as_dict().items()}
    return math.sqrt(sum((probs.get(k, 0.0) - 1 / 7) ** 2
                         for k in _seven_keys()) / 7)


def _seven_keys():
    g = MatchGraph([0, 1, 2, 3])
    from knotmatch.graph import enumerate_matchings
    return [canonical_matching(m) for m in enumerate_matchings(g)]


def test_criterion_1_uniform_matching_recovery():
    t0 = time.perf_counter()
    ctx = uniform_context()
    corrected, uncorrected = [], []
    for seed in range(20):
        post, _ = run_smc(ctx, SmcConfig(n_particles=100_000, seed=seed,
                                         correction=True))
        corrected.append(rmse_vs_uniform(post))
        post, _ = run_smc(ctx, SmcConfig(n_particles=100_000, seed=seed,
                                         correction=False))
        uncorrected.append(rmse_vs_uniform(post))
    elapsed = time.perf_counter() - t0
    mean_rmse = float(np.mean(corrected))
    ok = (mean_rmse < 0.005 and all(r > 0.015 for r in uncorrected)
          and elapsed < 60.0)
    report(1, ok, f"corrected mean RMSE {mean_rmse:.5f} (< 0.005), "
                  f"uncorrected min {min(uncorrected):.5f} (> 0.015), "
                  f"{elapsed:.1f}s (< 60s)")


def test_criterion_2_exact_posterior_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    shapes = [s for s in all_shapes(6) if 3 <= sum(s) <= 6]
    worst = 0.0
    for k in range(25):
        shape = shapes[rng.integers(len(shapes))]
        faces = random_faces(rng, shape)
        g = MatchGraph([f.partition for f in faces])
        features = BoardFeatures(faces, Standardization.identity())
        scale = (0.003, 0.01, 0.03)[k % 3]
        theta = rng.normal(scale=scale, size=6)
        want = exact_posterior(g, features, theta)
        ctx = SmcContext.from_features(g, features, theta)
        post, _ = run_smc(ctx, SmcConfig(n_particles=50_000, seed=1000 + k))
        tv = total_variation(post.as_dict(), want)
        worst = max(worst, tv)
    elapsed = time.perf_counter() - t0
    ok = worst < 0.02 and elapsed < 300.0
    report(2, ok, f"worst TV over 25 graphs {worst:.4f} (< 0.02), "
                  f"{elapsed:.1f}s (< 300s)")


def test_criterion_3_parent_count_oracle():
    checked = 0
    for shape in all_shapes(6):
        g = MatchGraph(shape_partitions(shape))
        counts = brute_force_parent_counts(g)
        for (matching, visited), want in counts.items():
            if not visited:
                continue
            state = state_from_matching_visited(g, matching, visited)
            got = parent_count(state)
            assert got == want, (shape, matching, visited, got, want)
            checked += 1
    # the published cases
    g = MatchGraph([0, 1, 2, 3])
    e = frozenset
    quoted = [
        ([e((0, 1))], [0, 1], 2),               # 2-edge, both visited
        ([e((0, 1, 2))], [0, 1, 2], 6),         # 3-edge, all visited
        ([e((0, 1, 2)), e((3,))], [0, 1, 2, 3], 3 + 1),  # with a singleton
    ]
    for matching, visited, want in quoted:
        got = parent_count(state_from_matching_visited(g, matching, visited))
        assert got == want
    report(3, True, f"case table equals brute force on {checked} states "
                    f"across {len(all_shapes(6))} graph shapes")


def _fitted_standardization(faces):
    """Standardization over every cross-partition pair and triple of faces,
    putting covariates at the O(1) scale the fitted model operates on."""
    import itertools
    edges = []
    for u, v in itertools.combinations(range(len(faces)), 2):
        if faces[u].partition != faces[v].partition:
            edges.append([faces[u], faces[v]])
    for u, v, w in itertools.combinations(range(len(faces)), 3):
        parts = {faces[x].partition for x in (u, v, w)}
        if len(parts) == 3:
            edges.append([faces[u], faces[v], faces[w]])
    return Standardization.fit(edges) if edges else Standardization.identity()


def test_criterion_4_gradient_check():
    rng = np.random.default_rng(44)
    worst = 0.0
    for k in range(100):
        shape = tuple(rng.integers(1, 3, size=4))
        faces = random_faces(rng, shape)
        g = MatchGraph([f.partition for f in faces])
        std = _fitted_standardization(faces)
        features = BoardFeatures(faces, std)
        theta = rng.normal(scale=(1.0 if k % 2 else 0.2), size=6)
        from knotmatch.graph import DecisionState, apply_decision
        from knotmatch.model import decision_distribution
        state = DecisionState.initial(g)
        for v in rng.permutation(g.n_nodes):
            cands, probs = decision_distribution(state, int(v), features, theta)
            j = int(rng.choice(len(cands), p=probs))
            state = apply_decision(state, int(v), cands[j])
        grad = path_gradient(state, features, theta)
        fd = finite_difference_gradient(
            lambda th: path_log_likelihood(state, features, th), theta)
        rel = np.linalg.norm(grad - fd) / max(np.linalg.norm(grad), 1.0)
        worst = max(worst, rel)
    ok = worst < 1e-6
    report(4, ok, f"worst relative gradient error {worst:.2e} (< 1e-6) "
                  f"over 100 paths")


def test_criterion_5_parameter_recovery_trend():
    t0 = time.perf_counter()
    out = recovery_experiment(sizes=(4, 8, 16, 32), n_replicates=10,
                              n_instances=10, n_covariates=2, seed=5)
    medians = [median(out[s]) for s in (4, 8, 16, 32)]
    elapsed = time.perf_counter() - t0
    ok = all(medians[i] > medians[i + 1] for i in range(3)) and elapsed < 600
    report(5, ok, "median RMSE by nodes/partition "
                  + " > ".join(f"{m:.4f}" for m in medians)
                  + f", {elapsed:.0f}s (< 600s)")


@pytest.fixture(scope="module")
def simulated_hundred():
    return generate_boards(SimConfig(rho=25), 100, seed=20240817)


def test_criterion_6_mcem_convergence_shape(simulated_hundred):
    boards = simulated_hundred[:30]
    edges = []
    for b in boards:
        for e in true_matching(b):
            if len(e) >= 2:
                edges.append([b.faces[i] for i in sorted(e)])
    std = Standardization.fit(edges)
    instances = [TrainingInstance.from_board(b, std) for b in boards]
    config = McemConfig(estep_schedule=tuple([100] * 10 + [500]),
                        max_iterations=16, min_iterations=16, seed=6)
    _theta, trace = run_mcem(instances, config)
    violations = []
    for t in range(9, len(trace.q) - 1):  # iterations 10, 11, ... (1-indexed)
        slack = 2.0 * math.sqrt(trace.q_se[t] ** 2 + trace.q_se[t + 1] ** 2)
        if trace.q[t + 1] - trace.q[t] < -slack:
            violations.append((t + 1, trace.q[t + 1] - trace.q[t], slack))
    ok = len(trace.q) >= 12 and not violations
    report(6, ok, f"{len(trace.q)} iterations; Q-tilde non-decreasing within "
                  f"2 SE after iteration 10 (violations: {violations})")


@pytest.fixture(scope="module")
def pipeline_reports(simulated_hundred):
    t0 = time.perf_counter()
    reports = cross_validate(simulated_hundred, n_folds=2, lam=1.0,
                             schedule=tuple([100] * 10 + [500]), iters=15,
                             particles=1000, segment_threshold=500.0, seed=7)
    return reports, time.perf_counter() - t0


def test_criterion_7_end_to_end_pipeline(pipeline_reports):
    reports, elapsed = pipeline_reports
    agg = aggregate_accuracy(reports)
    ok = agg >= 0.85 and elapsed < 1800 and len(reports) == 100
    report(7, ok, f"2-fold CV aggregate accuracy {agg:.4f} (>= 0.85), "
                  f"{elapsed:.0f}s (< 1800s)")


def test_criterion_8_prediction_timing(simulated_hundred):
    # rerun prediction alone (segmentation on, N=1000) to time it cleanly
    boards = simulated_hundred[:40]
    params, _ = train_model(boards[:8], schedule=(60,) * 3 + (120,),
                            max_iterations=6, seed=8)
    preds = predict_boards(boards, params, particles=1000,
                           segment_threshold=500.0, seed=9)
    times = [p.seconds for p in preds]
    med = median(times)
    ok = med <= 5.0
    report(8, ok, f"median per-board prediction time {med * 1000:.0f} ms "
                  f"(<= 5 s) over {len(boards)} boards, N=1000")


def test_criterion_9_metric_identities():
    rng = np.random.default_rng(99)
    from knotmatch.graph import enumerate_matchings
    cache = {}
    checked = 0
    floor_ok = True
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
        if accuracy(a, a) != 1.0 or jaccard_index(a, a) != 1.0:
            floor_ok = False
            break
        j = jaccard_index(a, b)
        if not (JACCARD_NODE_FLOOR - 1e-12 <= j <= 1.0 + 1e-12):
            floor_ok = False
            break
        checked += 1
    report(9, floor_ok and checked == 1000,
           f"identities hold and per-node values in [1/5, 1] over "
           f"{checked} random matchings")
