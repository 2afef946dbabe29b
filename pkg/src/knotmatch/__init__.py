"""knotmatch: probabilistic knot matching on lumber boards.

A sequential decision model over 4-partite non-uniform hypergraphs, a poset
SMC sampler with overcounting correction for drawing matchings, MC-EM
parameter estimation, evaluation metrics, and a synthetic board simulator.

``knotmatch.KERNEL_BACKEND`` reports whether the compiled kernels or the pure
Python fallback are in use.
"""
from ._kernels import BACKEND as KERNEL_BACKEND
from .errors import (ContractError, DataError, GenerationError, KnotmatchError,
                     NumericalError)
from .geometry import Board, KnotFace, Standardization
from .graph import (DecisionState, MatchGraph, apply_decision,
                    decision_set_bipartite, decision_set_knot,
                    enumerate_matchings, is_reachable_matching)
from .mcem import (McemConfig, TrainingInstance, generate_synthetic_graphs,
                   run_mcem, sample_latent_paths)
from .metrics import accuracy, jaccard_index
from .model import ModelParams, VisitPolicy
from .smc import (MatchingPosterior, SmcConfig, SmcContext, map_matching,
                  parent_count, predict_board, run_smc, segment_board)

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND", "__version__",
    "KnotmatchError", "ContractError", "DataError", "GenerationError",
    "NumericalError",
    "Board", "KnotFace", "Standardization",
    "MatchGraph", "DecisionState", "apply_decision", "decision_set_knot",
    "decision_set_bipartite", "enumerate_matchings", "is_reachable_matching",
    "ModelParams", "VisitPolicy",
    "SmcConfig", "SmcContext", "MatchingPosterior", "run_smc", "parent_count",
    "map_matching", "segment_board", "predict_board",
    "McemConfig", "TrainingInstance", "run_mcem", "sample_latent_paths",
    "generate_synthetic_graphs",
    "accuracy", "jaccard_index",
]
