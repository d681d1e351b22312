"""Riemannian variable-projection optimization over orthogonal transforms."""

from starm.optim.manifold import (
    enforce_orthogonality,
    reorthonormalize,
    retract,
    riemannian_gradient,
    skew,
    tangent_generator,
)
from starm.optim.objectives import (
    Evaluation,
    LowRankObjective,
    Objective,
    ObjectiveKind,
    RegressionObjective,
    euclidean_gradient,
    reduced_objective,
)
from starm.optim.schemas import (
    BacktrackingStep,
    FixedStep,
    OptimConfig,
    StopOn,
    parse_step,
)
from starm.optim.solver import (
    TRACE_COLUMNS,
    IterationRecord,
    OptimTrace,
    StopReason,
    alternating_descent,
    optimize,
)

__all__ = [
    "TRACE_COLUMNS",
    "BacktrackingStep",
    "Evaluation",
    "FixedStep",
    "IterationRecord",
    "LowRankObjective",
    "Objective",
    "ObjectiveKind",
    "OptimConfig",
    "OptimTrace",
    "RegressionObjective",
    "StopOn",
    "StopReason",
    "alternating_descent",
    "enforce_orthogonality",
    "euclidean_gradient",
    "optimize",
    "parse_step",
    "reduced_objective",
    "reorthonormalize",
    "retract",
    "riemannian_gradient",
    "skew",
    "tangent_generator",
]
