"""Reduced objectives of the variable-projection formulation.

Both objectives eliminate the representation ``X`` through its closed-form
optimum for a given transform ``M`` and expose the reduced value
``Phi(M) = Phi(M, X(M))`` together with its Euclidean gradient in ``M``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import StrEnum
from typing import TypeAlias

import numpy as np
import numpy.typing as npt

from starm.autodiff import GradContext, grad_starm, tsvdm_grad_wrt_M
from starm.errors import ShapeMismatchError
from starm.tensor import (
    Matrix,
    Tensor3,
    TransformLike,
    as_tensor3,
    as_transform,
    frobenius_norm,
    mode3_unfold,
    starm_product,
    starm_transpose,
)
from starm.tsvdm import check_rank, solve_normal_equations


class ObjectiveKind(StrEnum):
    """The two inner problems."""

    REGRESSION = "regression"
    LOW_RANK = "lowrank"


@dataclass(frozen=True, eq=False)
class Evaluation:
    """Reduced objective at one transform.

    Attributes:
        value: ``Phi(M)``.
        x: Inner solution ``X(M)`` (the coefficients for regression, ``A_k``
            for low rank).
        residual: ``A * X - B`` for regression, ``A_k - A`` for low rank.
        ctx: Cached t-SVDM factors for the low-rank gradient.
    """

    value: float
    x: Tensor3
    residual: Tensor3
    ctx: GradContext | None = None


@dataclass(frozen=True, eq=False)
class RegressionObjective:
    """``1/2 ||A * X - B||_F^2 + reg/2 ||X||_F^2`` with ``X`` eliminated.

    Attributes:
        a: ``(n1, p, n3)`` design tensor.
        b: ``(n1, n2, n3)`` observations.
        reg: Tikhonov parameter.
    """

    a: Tensor3
    b: Tensor3
    reg: float = 0.0

    def __post_init__(self) -> None:
        a = as_tensor3(self.a)
        b = as_tensor3(self.b)
        if a.shape[0] != b.shape[0] or a.shape[2] != b.shape[2]:
            msg = f"regression tensors do not conform: A {a.shape}, B {b.shape}"
            raise ShapeMismatchError(msg)
        if self.reg < 0:
            msg = f"regularization must be nonnegative, got {self.reg}"
            raise ValueError(msg)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    kind = ObjectiveKind.REGRESSION

    @property
    def n3(self) -> int:
        """Tube length."""
        return int(self.a.shape[2])

    def full_value(self, m: TransformLike, x: Tensor3) -> tuple[float, Tensor3]:
        """``Phi(M, X)`` for arbitrary ``X`` and the residual ``A * X - B``."""
        residual = starm_product(self.a, x, m) - self.b
        value = 0.5 * frobenius_norm(residual) ** 2
        if self.reg > 0:
            value += 0.5 * self.reg * frobenius_norm(x) ** 2
        return value, residual

    def evaluate(self, m: TransformLike) -> Evaluation:
        """Solve the inner least-squares problem and evaluate ``Phi(M)``."""
        t = as_transform(m)
        x = solve_normal_equations(self.a, self.b, t, reg=self.reg)
        value, residual = self.full_value(t, x)
        return Evaluation(value=value, x=x, residual=residual)

    def gradient(self, m: TransformLike, evaluation: Evaluation) -> Matrix:
        """Euclidean gradient ``M [(A*X)_(3) R_(3)^T + (R*X^T)_(3) A_(3)^T]``.

        The term through ``X`` vanishes by optimality of the inner solution.
        With ``reg > 0`` the product's dependence on ``X x3 M`` adds
        ``-reg M X_(3) X_(3)^T``, since optimality gives ``A^T * R = -reg X``.
        That term is ``M S`` with ``S`` symmetric, so only the Euclidean
        norm sees it.
        """
        t = as_transform(m)
        x, residual = evaluation.x, evaluation.residual
        fitted = residual + self.b
        r_xt = starm_product(residual, starm_transpose(x), t)
        inner = (
            mode3_unfold(fitted) @ mode3_unfold(residual).T
            + mode3_unfold(r_xt) @ mode3_unfold(self.a).T
        )
        if self.reg > 0:
            x3 = mode3_unfold(x)
            inner = inner - self.reg * (x3 @ x3.T)
        return t.matrix @ inner

    def partial_gradients(
        self, m: TransformLike, x: Tensor3
    ) -> tuple[float, Tensor3, Matrix]:
        """``Phi(M, X)`` with its gradients in ``X`` and ``M`` for a free ``X``."""
        t = as_transform(m)
        value, residual = self.full_value(t, x)
        _, grad_x, grad_m = grad_starm(residual, self.a, x, t)
        if self.reg > 0:
            grad_x = grad_x + self.reg * x
        return value, grad_x, grad_m


@dataclass(frozen=True, eq=False)
class LowRankObjective:
    """``1/2 ||A - A_k(M)||_F^2``.

    Attributes:
        a: ``(n1, n2, n3)`` data tensor.
        k: Truncation, ``1 <= k <= min(n1, n2)``.
    """

    a: Tensor3
    k: int

    def __post_init__(self) -> None:
        a = as_tensor3(self.a)
        check_rank(self.k, min(a.shape[0], a.shape[1]))
        object.__setattr__(self, "a", a)

    kind = ObjectiveKind.LOW_RANK

    @property
    def n3(self) -> int:
        """Tube length."""
        return int(self.a.shape[2])

    def evaluate(self, m: TransformLike) -> Evaluation:
        """Truncate the t-SVDM under ``M`` and evaluate ``Phi(M)``."""
        ctx = GradContext.build(self.a, m, self.k)
        residual = ctx.approx - self.a
        return Evaluation(
            value=0.5 * frobenius_norm(residual) ** 2,
            x=ctx.approx,
            residual=residual,
            ctx=ctx,
        )

    def gradient(self, m: TransformLike, evaluation: Evaluation) -> Matrix:
        """Gradient of ``M -> <R, A_k(M)>`` at ``R = A_k - A``."""
        return tsvdm_grad_wrt_M(
            evaluation.residual, self.a, m, self.k, evaluation.ctx
        )

    def relative_error(self, evaluation: Evaluation) -> float:
        """``||A - A_k||_F / ||A||_F``."""
        total = frobenius_norm(self.a)
        return frobenius_norm(evaluation.residual) / total if total > 0 else 0.0


Objective: TypeAlias = RegressionObjective | LowRankObjective


def reduced_objective(obj: Objective, m: TransformLike) -> tuple[float, Tensor3]:
    """``(Phi(M), X(M))``."""
    evaluation = obj.evaluate(m)
    return evaluation.value, evaluation.x


def euclidean_gradient(
    obj: Objective,
    m: TransformLike,
    x: Evaluation | npt.ArrayLike | None = None,
) -> Matrix:
    """Euclidean gradient of the reduced objective at ``M``.

    Args:
        obj: Objective.
        m: Orthogonal transform.
        x: The inner solution ``X(M)`` or a full ``Evaluation``; recomputed
            when omitted. For the low-rank objective ``A_k(M)`` is fixed by
            ``M`` and the factors are always recomputed from it.
    """
    if isinstance(x, Evaluation):
        return obj.gradient(m, x)
    if x is None or isinstance(obj, LowRankObjective):
        return obj.gradient(m, obj.evaluate(m))
    coeffs = np.asarray(x, dtype=np.float64)
    _, residual = obj.full_value(m, coeffs)
    return obj.gradient(m, Evaluation(value=0.0, x=coeffs, residual=residual))
