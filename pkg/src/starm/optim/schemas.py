"""Pydantic schemas for optimizer configuration."""

from enum import StrEnum
from typing import Annotated, Literal

from pydantic import BaseModel, ConfigDict, Field

from starm.config import (
    BACKTRACK_ALPHA0,
    BACKTRACK_C,
    BACKTRACK_MAX,
    BACKTRACK_SHRINK,
    GRAD_TOL,
)


class StopOn(StrEnum):
    """Which gradient norm the stopping test uses."""

    RIEMANNIAN = "riemannian"
    EUCLIDEAN = "euclidean"


class FixedStep(BaseModel):
    """Constant step size."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["fixed"] = "fixed"
    alpha: float = Field(gt=0, description="Step size")


class BacktrackingStep(BaseModel):
    """Armijo backtracking from ``alpha0``, shrinking by ``shrink``."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["backtrack"] = "backtrack"
    alpha0: float = Field(default=BACKTRACK_ALPHA0, gt=0)
    shrink: float = Field(default=BACKTRACK_SHRINK, gt=0, lt=1)
    c: float = Field(default=BACKTRACK_C, gt=0, lt=1, description="Sufficient decrease")
    max_backtracks: int = Field(default=BACKTRACK_MAX, ge=1)


StepConfig = Annotated[FixedStep | BacktrackingStep, Field(discriminator="kind")]


class OptimConfig(BaseModel):
    """Hyperparameters of the Riemannian descent loops."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    max_iters: int = Field(default=1000, ge=0)
    grad_tol: float = Field(default=GRAD_TOL, gt=0)
    step: StepConfig = Field(default_factory=BacktrackingStep)
    seed: int = 0
    log_every: int = Field(default=50, ge=1)
    stop_on: StopOn = StopOn.RIEMANNIAN


def parse_step(text: str) -> FixedStep | BacktrackingStep:
    """Parse ``fixed:ALPHA`` or ``backtrack`` from the command line.

    Raises:
        ValueError: If the text names no known step rule.
    """
    name, _, arg = text.strip().partition(":")
    if name == "fixed" and arg:
        return FixedStep(alpha=float(arg))
    if name == "backtrack":
        return BacktrackingStep(alpha0=float(arg)) if arg else BacktrackingStep()
    msg = f"unknown step rule {text!r}; expected fixed:ALPHA or backtrack"
    raise ValueError(msg)
