"""Riemannian gradient descent with variable projection, and the alternating baseline.

One iteration of ``optimize``:

1. evaluate the reduced objective and its Euclidean gradient ``G``,
2. project onto the tangent space, ``Omega = skew(M^T G)``,
3. step along ``-Omega`` with the exponential retraction ``M expm(-a Omega)``.

The step size ``a`` is fixed or chosen by Armijo backtracking. The
Frobenius norm of the Riemannian gradient ``M Omega`` equals ``||Omega||_F``.
"""

from __future__ import annotations

import time
from collections.abc import Callable
from dataclasses import dataclass, field
from enum import StrEnum
from typing import TypeVar

import numpy as np
import numpy.typing as npt
import structlog

from starm.config import DRIFT_TOL, ORTHOGONALITY_TOL
from starm.optim.manifold import enforce_orthogonality, retract, skew
from starm.optim.objectives import Evaluation, Objective, RegressionObjective
from starm.optim.schemas import BacktrackingStep, FixedStep, OptimConfig, StopOn
from starm.tensor import Matrix, Tensor3, as_transform

logger = structlog.get_logger()

T = TypeVar("T")

# Iterates must stay valid transforms, whose check is the tighter of the two.
REORTHONORMALIZE_TOL = min(DRIFT_TOL, ORTHOGONALITY_TOL)

TRACE_COLUMNS = (
    "iter",
    "objective",
    "riem_grad_norm",
    "eucl_grad_norm",
    "step",
    "elapsed_s",
)


class StopReason(StrEnum):
    """Why a descent loop ended."""

    CONVERGED = "converged"
    MAX_ITERS = "max_iters"
    LINE_SEARCH_FAILED = "line_search_failed"


@dataclass(frozen=True)
class IterationRecord:
    """One row of a convergence trace."""

    iter: int
    objective: float
    riem_grad_norm: float
    eucl_grad_norm: float
    step: float
    elapsed_s: float

    def as_row(self) -> tuple[int, float, float, float, float, float]:
        """Values in ``TRACE_COLUMNS`` order."""
        return (
            self.iter,
            self.objective,
            self.riem_grad_norm,
            self.eucl_grad_norm,
            self.step,
            self.elapsed_s,
        )


@dataclass
class OptimTrace:
    """Per-iteration records plus the final iterate."""

    records: list[IterationRecord] = field(default_factory=list)
    final_m: Matrix | None = None
    final_x: Tensor3 | None = None
    stop_reason: StopReason = StopReason.MAX_ITERS

    @property
    def converged(self) -> bool:
        """True if the gradient tolerance was met."""
        return self.stop_reason is StopReason.CONVERGED

    @property
    def line_search_failed(self) -> bool:
        """True if a line search exhausted its backtracks."""
        return self.stop_reason is StopReason.LINE_SEARCH_FAILED

    @property
    def objectives(self) -> npt.NDArray[np.float64]:
        """Objective value per recorded iteration."""
        return np.array([r.objective for r in self.records])

    @property
    def final_objective(self) -> float:
        """Objective at the last recorded iterate."""
        return self.records[-1].objective

    def to_rows(self) -> list[tuple[int, float, float, float, float, float]]:
        """Rows for CSV persistence, in ``TRACE_COLUMNS`` order."""
        return [r.as_row() for r in self.records]

    def summary(self) -> dict[str, object]:
        """JSON-serializable digest of the run."""
        last = self.records[-1]
        return {
            "iterations": last.iter,
            "final_objective": last.objective,
            "final_riem_grad_norm": last.riem_grad_norm,
            "final_eucl_grad_norm": last.eucl_grad_norm,
            "stop_reason": str(self.stop_reason),
            "elapsed_s": last.elapsed_s,
        }


def _start_point(m0: npt.ArrayLike) -> Matrix:
    return np.array(as_transform(m0).matrix)


def _line_search(
    value: float,
    slope: float,
    trial: Callable[[float], tuple[float, T]],
    step: FixedStep | BacktrackingStep,
) -> tuple[float, T] | None:
    """Find a step length satisfying ``f(a) <= value - c a slope``.

    ``trial(a)`` returns the objective after a step of length ``a`` and a
    payload describing the new point. Returns ``(a, payload)``, or ``None``
    once the backtracks are exhausted. A fixed step is always accepted.
    """
    if isinstance(step, FixedStep):
        return step.alpha, trial(step.alpha)[1]
    alpha = step.alpha0
    for _ in range(step.max_backtracks + 1):
        new_value, payload = trial(alpha)
        if new_value <= value - step.c * alpha * slope:
            return alpha, payload
        alpha *= step.shrink
    return None


def optimize(
    obj: Objective,
    m0: npt.ArrayLike,
    cfg: OptimConfig,
    callback: Callable[[IterationRecord, Matrix], None] | None = None,
) -> OptimTrace:
    """Minimize the reduced objective over the orthogonal group.

    Args:
        obj: Regression or low-rank objective.
        m0: Orthogonal starting transform.
        cfg: Iteration budget, tolerance and step rule.
        callback: Called with every record and the iterate it describes.

    Returns:
        Trace with one record per visited iterate (the start included).
        A failed line search ends the run with ``line_search_failed`` set.
    """
    start = time.monotonic()
    m = _start_point(m0)
    evaluation = obj.evaluate(m)
    trace = OptimTrace()
    step_taken = 0.0

    for it in range(cfg.max_iters + 1):
        grad = obj.gradient(m, evaluation)
        omega = skew(m.T @ grad)
        riem = float(np.linalg.norm(omega))
        eucl = float(np.linalg.norm(grad))
        trace.records.append(
            IterationRecord(
                iter=it,
                objective=evaluation.value,
                riem_grad_norm=riem,
                eucl_grad_norm=eucl,
                step=step_taken,
                elapsed_s=time.monotonic() - start,
            )
        )
        if callback is not None:
            callback(trace.records[-1], m)
        if it % cfg.log_every == 0:
            logger.debug(
                "optimize_iteration",
                iter=it,
                objective=evaluation.value,
                riem_grad_norm=riem,
            )

        stop_norm = riem if cfg.stop_on is StopOn.RIEMANNIAN else eucl
        if stop_norm <= cfg.grad_tol:
            trace.stop_reason = StopReason.CONVERGED
            break
        if it == cfg.max_iters:
            trace.stop_reason = StopReason.MAX_ITERS
            break

        def trial(
            alpha: float, m: Matrix = m, omega: Matrix = omega
        ) -> tuple[float, tuple[Matrix, Evaluation]]:
            candidate = enforce_orthogonality(
                retract(m, -alpha * omega), REORTHONORMALIZE_TOL
            )
            cand_eval = obj.evaluate(candidate)
            return cand_eval.value, (candidate, cand_eval)

        accepted = _line_search(evaluation.value, riem**2, trial, cfg.step)
        if accepted is None:
            trace.stop_reason = StopReason.LINE_SEARCH_FAILED
            logger.warning("line_search_failed", iter=it, objective=evaluation.value)
            break
        step_taken, payload = accepted
        m, evaluation = payload

    trace.final_m = m
    trace.final_x = evaluation.x
    logger.info("optimize_complete", **trace.summary())
    return trace


def alternating_descent(
    obj: RegressionObjective,
    m0: npt.ArrayLike,
    x0: npt.ArrayLike | None,
    cfg: OptimConfig,
) -> OptimTrace:
    """Alternate a gradient step in ``X`` with a Riemannian step in ``M``.

    Both blocks use the step rule of ``cfg``. The trace records the full
    objective ``Phi(M, X)`` and the gradient norms of the ``M`` block; the
    run converges when both the Riemannian ``M`` gradient and the ``X``
    gradient fall below ``grad_tol``.
    """
    start = time.monotonic()
    m = _start_point(m0)
    p, n2 = obj.a.shape[1], obj.b.shape[1]
    x = np.zeros((p, n2, obj.n3)) if x0 is None else np.array(x0, dtype=np.float64)
    trace = OptimTrace()
    step_taken = 0.0

    for it in range(cfg.max_iters + 1):
        value, grad_x, grad_m = obj.partial_gradients(m, x)
        omega = skew(m.T @ grad_m)
        riem = float(np.linalg.norm(omega))
        gx_norm = float(np.linalg.norm(grad_x))
        trace.records.append(
            IterationRecord(
                iter=it,
                objective=value,
                riem_grad_norm=riem,
                eucl_grad_norm=float(np.linalg.norm(grad_m)),
                step=step_taken,
                elapsed_s=time.monotonic() - start,
            )
        )
        if it % cfg.log_every == 0:
            logger.debug(
                "alternating_iteration", iter=it, objective=value, riem_grad_norm=riem
            )
        if riem <= cfg.grad_tol and gx_norm <= cfg.grad_tol:
            trace.stop_reason = StopReason.CONVERGED
            break
        if it == cfg.max_iters:
            trace.stop_reason = StopReason.MAX_ITERS
            break

        if gx_norm > 0.0:

            def x_trial(
                beta: float, m: Matrix = m, x: Tensor3 = x, grad_x: Tensor3 = grad_x
            ) -> tuple[float, Tensor3]:
                cand = x - beta * grad_x
                return obj.full_value(m, cand)[0], cand

            accepted_x = _line_search(value, gx_norm**2, x_trial, cfg.step)
            if accepted_x is None:
                trace.stop_reason = StopReason.LINE_SEARCH_FAILED
                logger.warning("line_search_failed", iter=it, block="x")
                break
            x = accepted_x[1]
            value, _, grad_m = obj.partial_gradients(m, x)
            omega = skew(m.T @ grad_m)
            riem = float(np.linalg.norm(omega))

        if riem > 0.0:

            def m_trial(
                alpha: float, m: Matrix = m, x: Tensor3 = x, omega: Matrix = omega
            ) -> tuple[float, Matrix]:
                cand = enforce_orthogonality(
                    retract(m, -alpha * omega), REORTHONORMALIZE_TOL
                )
                return obj.full_value(cand, x)[0], cand

            accepted_m = _line_search(value, riem**2, m_trial, cfg.step)
            if accepted_m is None:
                trace.stop_reason = StopReason.LINE_SEARCH_FAILED
                logger.warning("line_search_failed", iter=it, block="m")
                break
            step_taken = accepted_m[0]
            m = accepted_m[1]

    trace.final_m = m
    trace.final_x = x
    logger.info("alternating_descent_complete", **trace.summary())
    return trace

