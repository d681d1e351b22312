"""Two-by-two rotation example with four minimizers.

The design tensor has frontal slices ``[[1, 0], [0, 1], [0, 0]]`` and
``[[0, 0], [1, 0], [0, 1]]`` and the observations are all ones. Under the
rotation ``Q(theta)`` the reduced regression objective is
``3 - 16 / (7 + cos 4 theta)``, minimized at the odd multiples of ``pi / 4``.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
import structlog

from starm.optim import FixedStep, OptimConfig, RegressionObjective, optimize
from starm.optim.solver import IterationRecord
from starm.tensor import Matrix, Tensor3

logger = structlog.get_logger()

TRAJECTORY_COLUMNS = ("theta0", "iter", "theta", "objective", "abs_derivative")
LANDSCAPE_COLUMNS = ("theta", "objective", "closed_form")


def angle_tensors() -> tuple[Tensor3, Tensor3]:
    """Design tensor ``(3, 2, 2)`` and all-ones observations ``(3, 1, 2)``."""
    a = np.zeros((3, 2, 2))
    a[:, :, 0] = [[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]
    a[:, :, 1] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]
    return a, np.ones((3, 1, 2))


def rotation(theta: float) -> Matrix:
    """``[[cos, -sin], [sin, cos]]``."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def angle_of(m: npt.ArrayLike) -> float:
    """Rotation angle of a two-by-two orthogonal matrix."""
    mat = np.asarray(m, dtype=np.float64)
    return math.atan2(mat[1, 0], mat[0, 0])


def closed_form(theta: float) -> float:
    """``3 - 16 / (7 + cos 4 theta)``."""
    return 3.0 - 16.0 / (7.0 + math.cos(4.0 * theta))


def closed_form_derivative(theta: float) -> float:
    """``-64 sin 4 theta / (7 + cos 4 theta)^2``."""
    return -64.0 * math.sin(4.0 * theta) / (7.0 + math.cos(4.0 * theta)) ** 2


def nearest_minimizer(theta: float) -> float:
    """Closest odd multiple of ``pi / 4``."""
    quarter = math.pi / 4
    return quarter * (2 * round((theta / quarter - 1) / 2) + 1)


@dataclass(frozen=True)
class TrajectoryPoint:
    """One iterate of an angle run."""

    theta0: float
    iter: int
    theta: float
    objective: float
    abs_derivative: float

    def as_row(self) -> tuple[float, int, float, float, float]:
        """Values in ``TRAJECTORY_COLUMNS`` order."""
        return (self.theta0, self.iter, self.theta, self.objective, self.abs_derivative)


def _unwrap(theta: float, reference: float) -> float:
    """Shift ``theta`` by multiples of ``2 pi`` to lie closest to ``reference``."""
    return theta + 2 * math.pi * round((reference - theta) / (2 * math.pi))


def trajectory(
    theta0: float, *, alpha: float = 0.1, iters: int = 200, grad_tol: float = 1e-10
) -> list[TrajectoryPoint]:
    """Fixed-step Riemannian descent on the rotation group from ``Q(theta0)``."""
    a, b = angle_tensors()
    obj = RegressionObjective(a, b)
    cfg = OptimConfig(max_iters=iters, grad_tol=grad_tol, step=FixedStep(alpha=alpha))
    points: list[TrajectoryPoint] = []

    def record(rec: IterationRecord, m: Matrix) -> None:
        previous = points[-1].theta if points else theta0
        theta = _unwrap(angle_of(m), previous)
        points.append(
            TrajectoryPoint(
                theta0=theta0,
                iter=rec.iter,
                theta=theta,
                objective=rec.objective,
                abs_derivative=abs(closed_form_derivative(theta)),
            )
        )

    trace = optimize(obj, rotation(theta0), cfg, callback=record)
    logger.info(
        "angle_trajectory_complete",
        theta0=theta0,
        theta=points[-1].theta,
        stop_reason=str(trace.stop_reason),
    )
    return points


def contraction_ratio(points: Sequence[TrajectoryPoint], tail: int = 20) -> float:
    """Median ratio of consecutive derivative magnitudes over the last iterates.

    Returns ``nan`` when fewer than two usable points remain.
    """
    values = np.array([p.abs_derivative for p in points[-tail:]])
    prev, curr = values[:-1], values[1:]
    usable = prev > 0
    if not np.any(usable):
        return math.nan
    return float(np.median(curr[usable] / prev[usable]))


def landscape(n: int = 100) -> list[tuple[float, float, float]]:
    """Reduced objective through the regression solver and in closed form."""
    a, b = angle_tensors()
    obj = RegressionObjective(a, b)
    rows = []
    for theta in np.linspace(0.0, math.pi, n, endpoint=False):
        value = obj.evaluate(rotation(float(theta))).value
        rows.append((float(theta), value, closed_form(float(theta))))
    return rows
