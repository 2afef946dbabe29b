"""Sequential decision probability model.

Each visited node picks from its decision set with multinomial-logit
probabilities proportional to exp(theta . phi(candidate edge)); a complete
path's log likelihood is the sum of its decision log probabilities plus the
visit-order term (uniform-random order by default). All computation is in the
log domain with max-subtraction.

These are the reference implementations; the SMC and MC-EM hot loops use the
array kernels in ``knotmatch._kernels``, which are parity-tested against this
module.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ContractError
from .geometry import N_COVARIATES, Standardization
from .graph import EMPTY_DECISION, DecisionState, decision_set

DEFAULT_LAMBDA = 1.0


@dataclass
class ModelParams:
    """Fitted model: weight vector, L2 penalty, covariate standardization."""

    theta: np.ndarray
    lam: float = DEFAULT_LAMBDA
    standardization: Standardization = field(default_factory=Standardization.identity)

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        if self.theta.shape != (N_COVARIATES,):
            raise ContractError(f"theta must have {N_COVARIATES} entries")
        if not np.all(np.isfinite(self.theta)):
            raise ContractError("theta must be finite")
        if self.lam <= 0:
            raise ContractError("lambda must be positive")

    @classmethod
    def zeros(cls, lam: float = DEFAULT_LAMBDA,
              standardization: Optional[Standardization] = None) -> "ModelParams":
        return cls(np.zeros(N_COVARIATES), lam,
                   standardization or Standardization.identity())


@dataclass(frozen=True)
class VisitPolicy:
    """How the visit order is drawn: latent uniform-random or deterministic.

    The deterministic variant carries an explicit node order (e.g. sorted by
    face x-coordinate) and contributes nothing to the path likelihood.
    """

    kind: str = "uniform"
    order: tuple = ()

    @staticmethod
    def uniform() -> "VisitPolicy":
        return VisitPolicy("uniform", ())

    @staticmethod
    def fixed(order: Sequence[int]) -> "VisitPolicy":
        return VisitPolicy("fixed", tuple(int(v) for v in order))

    @staticmethod
    def sorted_by_x(faces) -> "VisitPolicy":
        order = sorted(range(len(faces)), key=lambda i: (faces[i].x, i))
        return VisitPolicy("fixed", tuple(order))

    def log_order_probability(self, n_visits: int) -> float:
        """log p(sigma) for a complete visit order of the given length."""
        if self.kind == "uniform":
            return -math.lgamma(n_visits + 1)
        return 0.0


def log_softmax(lps: np.ndarray) -> np.ndarray:
    m = np.max(lps)
    z = lps - m
    return z - math.log(np.exp(z).sum())


def decision_distribution(state: DecisionState, v: int, features, theta,
                          model: str = "knot"):
    """Candidates and their multinomial probabilities for node v.

    Returns ``(candidates, probs)``; a forced decision (covered node, empty
    decision set) yields a single category with probability 1.
    """
    cands = decision_set(state, v, model)
    if not cands:
        cands = [EMPTY_DECISION]
    theta = np.asarray(theta, dtype=float)
    lps = np.array([float(theta @ features.phi(d | {v})) for d in cands])
    probs = np.exp(log_softmax(lps))
    return cands, probs


def path_log_likelihood(state: DecisionState, features, theta,
                        policy: VisitPolicy = VisitPolicy.uniform(),
                        model: str = "knot") -> float:
    """Joint log probability of a complete path (decisions + visit order)."""
    _require_complete(state, model)
    total = policy.log_order_probability(len(state.visit_order))
    replayed = DecisionState.initial(state.graph)
    for v, d in zip(state.visit_order, state.decisions):
        cands, probs = decision_distribution(replayed, v, features, theta, model)
        try:
            j = cands.index(d)
        except ValueError:
            raise ContractError(f"stored decision {sorted(d)} not available at node {v}")
        total += math.log(probs[j])
        replayed = _apply(replayed, v, d, model)
    return total


def path_gradient(state: DecisionState, features, theta,
                  model: str = "knot") -> np.ndarray:
    """Gradient of the decision term of the path log likelihood.

    sum over steps of phi(chosen) - E[phi] under the local multinomial; the
    visit-order term is theta-free and contributes nothing.
    """
    _require_complete(state, model)
    theta = np.asarray(theta, dtype=float)
    grad = np.zeros_like(theta)
    replayed = DecisionState.initial(state.graph)
    for v, d in zip(state.visit_order, state.decisions):
        cands, probs = decision_distribution(replayed, v, features, theta, model)
        if len(cands) > 1:
            phis = np.stack([features.phi(c | {v}) for c in cands])
            j = cands.index(d)
            grad += phis[j] - probs @ phis
        replayed = _apply(replayed, v, d, model)
    return grad


def _apply(state, v, d, model):
    from .graph import apply_decision
    return apply_decision(state, v, d, model=model, validate=False)


def _require_complete(state: DecisionState, model: str) -> None:
    need = state.graph.n_nodes if model == "knot" else len(state.graph.nodes_in(0))
    if len(state.visit_order) != need:
        raise ContractError(
            f"path has {len(state.visit_order)} visits, expected {need}")
