"""Command-line surface: simulate / train / predict / evaluate.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
The only environment variable honored is ``KNOTMATCH_THREADS`` (worker count
for per-board prediction; default 1).
"""
from __future__ import annotations

import os
import sys
from concurrent.futures import ThreadPoolExecutor

import click
import numpy as np

from . import fileio
from .errors import ContractError, DataError, GenerationError, NumericalError
from .boardsim import SimConfig, generate_boards, true_matching
from .geometry import Standardization
from .mcem import McemConfig, TrainingInstance, run_mcem
from .metrics import aggregate_accuracy, evaluate_board
from .model import ModelParams
from .smc import DEFAULT_SEGMENT_THRESHOLD, SmcConfig, predict_board


def _parse_schedule(text: str) -> tuple:
    """Parse an E-step schedule like ``100x10,500`` (last entry repeats)."""
    out = []
    try:
        for part in text.split(","):
            part = part.strip()
            if "x" in part:
                size, reps = part.split("x")
                out.extend([int(size)] * int(reps))
            else:
                out.append(int(part))
    except ValueError:
        raise click.UsageError(f"bad E-step schedule {text!r}")
    if not out or min(out) < 1:
        raise click.UsageError("E-step schedule entries must be positive")
    return tuple(out)


@click.group()
def cli():
    """Knot matching on lumber boards: simulation, training, prediction."""


@cli.command()
@click.option("--count", type=int, required=True, help="Number of boards.")
@click.option("--rho", type=float, default=25.0, show_default=True,
              help="Poisson knot-count rate per board.")
@click.option("--separation", type=float, default=50.0, show_default=True,
              help="Branch separation floor (board units).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def simulate(count, rho, separation, seed, out):
    """Generate synthetic labelled boards (JSON-lines)."""
    if count < 0:
        raise click.UsageError("--count must be nonnegative")
    config = SimConfig(rho=rho, separation=separation)
    boards = generate_boards(config, count, seed=seed)
    fileio.write_boards(out, boards)
    click.echo(f"wrote {len(boards)} boards to {out}")


@cli.command()
@click.option("--boards", "boards_path", type=click.Path(exists=True, dir_okay=False),
              required=True, help="Labelled board file.")
@click.option("--lambda", "lam", type=float, default=1.0, show_default=True,
              help="L2 penalty weight.")
@click.option("--estep-schedule", default="100x10,500", show_default=True,
              help="Per-iteration E-step sample sizes; last entry repeats.")
@click.option("--iters", type=int, default=20, show_default=True,
              help="Maximum MC-EM iterations.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out-model", type=click.Path(dir_okay=False), required=True)
@click.option("--out-trace", type=click.Path(dir_okay=False), default=None,
              help="Optional Q-trace CSV.")
@click.option("--checkpoint-dir", type=click.Path(file_okay=False),
              default=None, help="Per-iteration checkpoint JSON files.")
def train(boards_path, lam, estep_schedule, iters, seed, out_model, out_trace,
          checkpoint_dir):
    """Fit the decision model by MC-EM on labelled boards."""
    boards = fileio.read_boards(boards_path)
    unlabeled = [b.id for b in boards
                 if any(f.label is None for f in b.faces)]
    if unlabeled:
        raise DataError(f"unlabelled boards: {', '.join(unlabeled)}")
    params, trace = train_model(boards, lam=lam,
                                schedule=_parse_schedule(estep_schedule),
                                max_iterations=iters, seed=seed,
                                checkpoint_dir=checkpoint_dir)
    fileio.write_model(out_model, params)
    if out_trace:
        fileio.write_trace(out_trace, trace)
    click.echo(f"trained on {len(boards)} boards, "
               f"{len(trace)} MC-EM iterations; model -> {out_model}")


def train_model(boards, lam=1.0, schedule=(100,) * 10 + (500,),
                max_iterations=20, seed=0, checkpoint_dir=None):
    """Library-level training entry: standardize, project, run MC-EM."""
    edges = []
    for b in boards:
        for e in true_matching(b):
            if len(e) >= 2:
                edges.append([b.faces[i] for i in sorted(e)])
    std = Standardization.fit(edges) if edges else Standardization.identity()
    instances = [TrainingInstance.from_board(b, std) for b in boards]
    dropped = sum(len(i.dropped_faces) for i in instances)
    if dropped:
        click.echo(f"projected {dropped} unreachable singleton faces out of "
                   f"the training instances", err=True)
    config = McemConfig(estep_schedule=schedule, max_iterations=max_iterations,
                        lam=lam, seed=seed)
    theta, trace = run_mcem(instances, config, checkpoint_dir=checkpoint_dir)
    if max_iterations == 0 or not len(trace):
        theta = np.zeros(6)
    return ModelParams(theta, lam, std), trace


@cli.command()
@click.option("--boards", "boards_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--particles", type=int, default=1000, show_default=True)
@click.option("--segment-threshold", type=float,
              default=DEFAULT_SEGMENT_THRESHOLD, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--no-correction", is_flag=True, default=False,
              help="Disable the overcounting correction (diagnostics only).")
@click.option("--policy", type=click.Choice(["uniform", "sorted-by-x"]),
              default="uniform", show_default=True,
              help="Visit-order policy (deterministic variant for ablation).")
@click.option("--out", type=click.Path(dir_okay=False), required=True,
              help="Posterior dump (JSON-lines).")
@click.option("--timing-out", type=click.Path(dir_okay=False), default=None,
              help="Timing CSV; defaults to OUT + '.timing.csv'.")
def predict(boards_path, model_path, particles, segment_threshold, seed,
            no_correction, policy, out, timing_out):
    """Sample matchings for every board and dump the posterior + timings."""
    boards = fileio.read_boards(boards_path)
    params = fileio.read_model(model_path)
    predictions = predict_boards(boards, params, particles, segment_threshold,
                                 seed, correction=not no_correction,
                                 policy_kind=policy)
    fileio.write_posteriors(out, predictions)
    fileio.write_timings(timing_out or out + ".timing.csv",
                         [(p.board_id, p.n_faces, p.seconds)
                          for p in predictions])
    times = sorted(p.seconds for p in predictions)
    if times:
        click.echo(f"predicted {len(predictions)} boards; median "
                   f"{times[len(times) // 2]:.3f}s per board")


def predict_boards(boards, params, particles=1000,
                   segment_threshold=DEFAULT_SEGMENT_THRESHOLD, seed=0,
                   correction=True, policy_kind="uniform"):
    """Predict every board (worker count from KNOTMATCH_THREADS, default 1)."""
    ss = np.random.SeedSequence(seed)
    children = ss.spawn(max(len(boards), 1))

    def one(args):
        k, board = args
        board_seed = int(np.random.default_rng(children[k]).integers(2 ** 31))
        config = SmcConfig(n_particles=particles, correction=correction,
                           seed=board_seed)
        return predict_board(board, params, config, segment_threshold,
                             policy_kind=policy_kind)

    workers = int(os.environ.get("KNOTMATCH_THREADS", "1"))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, enumerate(boards)))
    return [one(item) for item in enumerate(boards)]


@cli.command()
@click.option("--predictions", "pred_path", type=click.Path(dir_okay=False),
              default=None, help="Posterior dump from `predict`.")
@click.option("--truth", "truth_path", type=click.Path(dir_okay=False),
              default=None, help="Labelled board file.")
@click.option("--cv", default=None,
              help="Driver mode: an integer fold count or 'loo'; trains and "
                   "predicts internally (needs --boards).")
@click.option("--boards", "boards_path", type=click.Path(dir_okay=False),
              default=None, help="Labelled boards for --cv mode.")
@click.option("--lambda", "lam", type=float, default=1.0, show_default=True)
@click.option("--estep-schedule", default="100x10,500", show_default=True)
@click.option("--iters", type=int, default=15, show_default=True)
@click.option("--particles", type=int, default=1000, show_default=True)
@click.option("--segment-threshold", type=float,
              default=DEFAULT_SEGMENT_THRESHOLD, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True,
              help="Per-board evaluation CSV.")
def evaluate(pred_path, truth_path, cv, boards_path, lam, estep_schedule,
             iters, particles, segment_threshold, seed, out):
    """Score predictions against ground truth (direct or cross-validation)."""
    if cv is None:
        if not pred_path or not truth_path:
            raise click.UsageError("direct mode needs --predictions and --truth")
        reports = evaluate_predictions(pred_path, truth_path)
    else:
        if not boards_path:
            raise click.UsageError("--cv mode needs --boards")
        boards = fileio.read_boards(boards_path)
        folds = _cv_folds(cv, len(boards))
        reports = cross_validate(boards, folds, lam=lam,
                                 schedule=_parse_schedule(estep_schedule),
                                 iters=iters, particles=particles,
                                 segment_threshold=segment_threshold, seed=seed)
    agg = aggregate_accuracy(reports)
    fileio.write_eval(out, reports, aggregate=agg)
    click.echo(f"aggregate single-sample accuracy: {agg:.4f}")


def _cv_folds(cv: str, n_boards: int) -> int:
    if cv == "loo":
        return n_boards
    try:
        folds = int(cv)
    except ValueError:
        raise click.UsageError("--cv must be an integer or 'loo'")
    if not 2 <= folds <= n_boards:
        raise click.UsageError("--cv fold count must be in [2, n_boards]")
    return folds


def evaluate_predictions(pred_path, truth_path):
    posteriors = fileio.read_posteriors(pred_path)
    boards = {b.id: b for b in fileio.read_boards(truth_path)}
    missing = sorted(set(posteriors) ^ set(boards))
    if missing:
        raise DataError(f"board id mismatch between predictions and truth: "
                        f"{', '.join(missing)}")
    from .smc import MatchingPosterior
    reports = []
    for board_id in sorted(posteriors):
        rec = posteriors[board_id]
        truth = true_matching(boards[board_id])
        posterior = MatchingPosterior(sorted(rec["entries"], key=lambda mw: -mw[1]))
        map_m = rec["map"] if rec["map"] is not None else rec["entries"][0][0]
        reports.append(evaluate_board(board_id, map_m, truth, posterior))
    return reports


def cross_validate(boards, n_folds, lam=1.0, schedule=(100,) * 10 + (500,),
                   iters=15, particles=1000,
                   segment_threshold=DEFAULT_SEGMENT_THRESHOLD, seed=0):
    """K-fold (or leave-one-out) train/predict/score over labelled boards."""
    reports = []
    for fold in range(n_folds):
        held = [b for k, b in enumerate(boards) if k % n_folds == fold]
        rest = [b for k, b in enumerate(boards) if k % n_folds != fold]
        params, _trace = train_model(rest, lam=lam, schedule=schedule,
                                     max_iterations=iters, seed=seed + fold)
        predictions = predict_boards(held, params, particles,
                                     segment_threshold, seed=seed + fold)
        for board, pred in zip(held, predictions):
            truth = true_matching(board)
            reports.append(evaluate_board(board.id, pred.map_matching, truth,
                                          pred.posterior))
    return reports


def main(argv=None) -> int:
    """Entry point with the spec's exit-code mapping."""
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:  # --help and friends
        return int(exc.exit_code)
    except (click.UsageError, click.BadParameter) as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        return 1
    except (OSError, ContractError) as exc:
        click.echo(f"usage error: {exc}", err=True)
        return 1
    except (DataError, GenerationError) as exc:
        click.echo(f"data error: {exc}", err=True)
        return 2
    except NumericalError as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        return 3


if __name__ == "__main__":
    sys.exit(main())
