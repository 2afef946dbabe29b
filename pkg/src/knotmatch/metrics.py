"""Evaluation of predicted matchings against ground truth.

Single-sample accuracy is the fraction of true edges reproduced exactly.
The per-node Jaccard index compares, for every node, the edge containing it
in the prediction with the edge containing it in the truth; with edges capped
at three nodes the per-node value lies in [1/5, 1] (the 1/5 floor needs two
3-edges sharing only the node itself).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .errors import ContractError

JACCARD_NODE_FLOOR = 1.0 / 5.0


def accuracy(predicted, truth) -> float:
    """|{e in truth : e in predicted}| / |truth|; vacuously 1 for empty truth."""
    truth = frozenset(frozenset(e) for e in truth)
    if not truth:
        return 1.0
    predicted = frozenset(frozenset(e) for e in predicted)
    return sum(1 for e in truth if e in predicted) / len(truth)


def jaccard_index(particle, truth) -> float:
    """Per-node edge-overlap Jaccard averaged over the node universe.

    Both matchings must cover every node (singleton edges count as covering);
    an uncovered node is a contract violation since the decision model always
    covers.
    """
    particle = [frozenset(e) for e in particle]
    truth = [frozenset(e) for e in truth]
    nodes = sorted({v for e in particle for v in e} | {v for e in truth for v in e})
    if not nodes:
        return 1.0
    p_of = {}
    for e in particle:
        for v in e:
            p_of[v] = e
    t_of = {}
    for e in truth:
        for v in e:
            t_of[v] = e
    total = 0.0
    for v in nodes:
        if v not in p_of or v not in t_of:
            raise ContractError(f"node {v} is uncovered in one of the matchings")
        a, b = p_of[v], t_of[v]
        total += len(a & b) / len(a | b)
    return total / len(nodes)


@dataclass
class EvalReport:
    """Per-board evaluation: accuracy of the MAP plus Jaccard summaries."""

    board_id: str
    accuracy: float
    n_true_edges: int
    n_correct_edges: int
    jaccard_mean: Optional[float] = None
    jaccard_weighted: Optional[float] = None
    jaccard_min: Optional[float] = None
    jaccard_max: Optional[float] = None


def evaluate_board(board_id: str, map_matching, truth,
                   posterior=None) -> EvalReport:
    """Score one board; posterior entries feed the Jaccard summaries."""
    truth = frozenset(frozenset(e) for e in truth)
    acc = accuracy(map_matching, truth)
    n_true = len(truth)
    n_correct = round(acc * n_true) if n_true else 0
    report = EvalReport(board_id, acc, n_true, n_correct)
    if posterior is not None and len(posterior):
        values = [jaccard_index(m, truth) for m, _w in posterior.entries]
        weights = [w for _m, w in posterior.entries]
        report.jaccard_mean = sum(values) / len(values)
        report.jaccard_weighted = sum(v * w for v, w in zip(values, weights))
        report.jaccard_min = min(values)
        report.jaccard_max = max(values)
    return report


def aggregate_accuracy(reports) -> float:
    """Total correct edges over total true edges across boards."""
    n_true = sum(r.n_true_edges for r in reports)
    if n_true == 0:
        return 1.0
    return sum(r.n_correct_edges for r in reports) / n_true
