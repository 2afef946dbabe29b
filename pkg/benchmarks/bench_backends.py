"""Benchmark: compiled kernels vs the pure-Python fallback.

Runs the particle-propagation sweep (the sampler's hot loop) and the
constrained E-step sweep on a mid-size synthetic board with both backends,
checks that they produce identical trajectories from the same uniforms, and
reports throughput.

Usage: python benchmarks/bench_backends.py [--particles N] [--rho R]
"""
import argparse
import time

import numpy as np

from knotmatch._kernels import ParticleState, get_backend
from knotmatch.boardsim import SimConfig, generate_board
from knotmatch.geometry import (FaceArrays, Standardization,
                                pair_linear_predictors,
                                triplet_linear_predictors)


def propagate_sweep(backend, arrays, lp_pair, lp_tri, n_particles, seed):
    n = arrays.n
    st = ParticleState(n_particles, n)
    log_inc = np.empty(n_particles)
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    for _r in range(n):
        status = backend.propagate(
            arrays.partition, lp_pair, lp_tri, st.edge_of, st.visited,
            st.edge_nodes, st.edge_size, st.edge_nvis, st.n_edges, st.n_sing,
            rng.random(n_particles), rng.random(n_particles), -1, True,
            log_inc)
        assert status == 0
    elapsed = time.perf_counter() - t0
    return st, elapsed


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--particles", type=int, default=2000)
    ap.add_argument("--rho", type=float, default=25.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    board = generate_board(SimConfig(rho=args.rho),
                           np.random.default_rng(args.seed), "bench")
    arrays = FaceArrays.from_faces(board.faces)
    theta = np.random.default_rng(1).normal(scale=0.3, size=6)
    std = Standardization.identity()
    lp_pair = pair_linear_predictors(arrays, theta, std)
    lp_tri = triplet_linear_predictors(arrays, theta, std)
    n_steps = args.particles * arrays.n
    print(f"board: {arrays.n} faces; sweep = {args.particles} particles x "
          f"{arrays.n} iterations = {n_steps} particle-steps")

    results = {}
    for name in ("python", "cython"):
        try:
            backend = get_backend(name)
        except Exception as exc:
            print(f"{name:>7}: unavailable ({exc})")
            continue
        st, elapsed = propagate_sweep(backend, arrays, lp_pair, lp_tri,
                                      args.particles, seed=123)
        results[name] = (st, elapsed)
        print(f"{name:>7}: {elapsed:8.3f}s "
              f"({n_steps / elapsed / 1e6:6.2f} M particle-steps/s)")

    if len(results) == 2:
        same = np.array_equal(results["python"][0].edge_of,
                              results["cython"][0].edge_of)
        ratio = results["python"][1] / results["cython"][1]
        print(f"identical trajectories: {same}; speedup: {ratio:.0f}x")


if __name__ == "__main__":
    main()
