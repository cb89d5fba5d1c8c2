from ._backend import BACKEND
from .core import (
    EXACT_COMPLETION_LIMIT,
    UNLABELED,
    FlowNetwork,
    FlowResult,
    ProblemTooLarge,
    PseudoBooleanFunction,
    complete_labeling,
    energy,
    exhaustive_solve,
    max_flow,
    minimize,
    roof_dual_network,
    solve_roof_duality,
)

__all__ = [
    "BACKEND", "EXACT_COMPLETION_LIMIT", "UNLABELED", "FlowNetwork", "FlowResult",
    "ProblemTooLarge", "PseudoBooleanFunction", "complete_labeling", "energy",
    "exhaustive_solve", "max_flow", "minimize", "roof_dual_network", "solve_roof_duality",
]
