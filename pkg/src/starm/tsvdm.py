"""The t-SVDM and the inner-problem solvers built on it.

Every routine works in the transform domain ``Ahat = A x3 M``, where the
star-M algebra decouples into independent matrix problems on the frontal
slices, and maps the result back with ``M^T``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from starm.config import RANK_TOL
from starm.errors import RankOutOfRangeError, ShapeMismatchError
from starm.tensor import (
    Tensor3,
    Transform,
    TransformLike,
    as_tensor3,
    as_transform,
    frobenius_norm,
    from_slices,
    mode3_product,
    slices,
    starm_product,
    starm_transpose,
)

Stack = npt.NDArray[np.float64]


@dataclass(frozen=True, eq=False)
class TsvdmFactors:
    """``A = U * S * V^T`` under a fixed transform.

    Attributes:
        u: ``(n1, n1, n3)`` star-M orthogonal left factor.
        s: ``(n1, n2, n3)`` f-diagonal factor with ordered singular tubes.
        v: ``(n2, n2, n3)`` star-M orthogonal right factor.
        transform: The transform the factorization was computed under.
        sigma: ``(n3, min(n1, n2))`` transform-domain singular values,
            nonincreasing along each row.
    """

    u: Tensor3
    s: Tensor3
    v: Tensor3
    transform: Transform
    sigma: Stack

    @property
    def max_rank(self) -> int:
        """Largest admissible truncation, ``min(n1, n2)``."""
        return int(self.sigma.shape[1])


@dataclass(frozen=True, eq=False)
class EnergyProfile:
    """Per-slice share of energy carried by each transform-domain singular value.

    Attributes:
        percent: ``(n3, r)`` percentages; each nonzero row sums to 100.
        cumulative: Running sums of ``percent`` along each row.
    """

    percent: Stack
    cumulative: Stack

    def captured(self, k: int) -> Stack:
        """Percentage of each slice's energy kept by the leading ``k`` values."""
        return self.cumulative[:, k - 1]


def facewise_svd(
    ahat: npt.ArrayLike, *, full_matrices: bool = False
) -> tuple[Stack, Stack, Stack]:
    """SVD of every frontal slice with a platform-independent sign convention.

    Each left singular vector has its largest-magnitude entry made
    nonnegative; the paired right singular vector is flipped with it.

    Returns:
        ``(U, sigma, Vt)`` stacks of shapes ``(n3, n1, c)``, ``(n3, r)`` and
        ``(n3, c', n2)``.
    """
    u, sigma, vt = np.linalg.svd(slices(ahat), full_matrices=full_matrices)
    r = sigma.shape[1]
    u_signs = _pivot_signs(u, axis=1)
    v_signs = _pivot_signs(vt, axis=2)
    v_signs[:, :r] = u_signs[:, :r]
    return u * u_signs[:, None, :], sigma, vt * v_signs[:, :, None]


def _pivot_signs(stack: Stack, *, axis: int) -> Stack:
    """Sign of the largest-magnitude entry of each vector along ``axis``."""
    pivot_idx = np.expand_dims(np.argmax(np.abs(stack), axis=axis), axis)
    pivots = np.squeeze(np.take_along_axis(stack, pivot_idx, axis=axis), axis=axis)
    return np.where(pivots < 0, -1.0, 1.0)


def transform_domain_spectrum(a: npt.ArrayLike, m: TransformLike) -> Stack:
    """Singular values of every transform-domain slice, shape ``(n3, r)``."""
    t = as_transform(m)
    return np.linalg.svd(slices(mode3_product(a, t.matrix)), compute_uv=False)


def tsvdm(a: npt.ArrayLike, m: TransformLike) -> TsvdmFactors:
    """Full t-SVDM of ``a`` under ``m``."""
    t = as_transform(m)
    arr = as_tensor3(a)
    n1, n2, n3 = arr.shape
    u, sigma, vt = facewise_svd(mode3_product(arr, t.matrix), full_matrices=True)
    s_hat = np.zeros((n3, n1, n2))
    idx = np.arange(sigma.shape[1])
    s_hat[:, idx, idx] = sigma
    back = t.matrix.T
    return TsvdmFactors(
        u=mode3_product(from_slices(u), back),
        s=mode3_product(from_slices(s_hat), back),
        v=mode3_product(from_slices(np.swapaxes(vt, 1, 2)), back),
        transform=t,
        sigma=sigma,
    )


def check_rank(k: int, max_rank: int) -> None:
    if not 1 <= k <= max_rank:
        raise RankOutOfRangeError(k, max_rank)


def truncate(factors: TsvdmFactors, k: int) -> tuple[Tensor3, Tensor3, Tensor3]:
    """Leading ``k`` singular tubes ``(U_k, S_k, V_k)``.

    Raises:
        RankOutOfRangeError: If ``k`` is outside ``[1, min(n1, n2)]``.
    """
    check_rank(k, factors.max_rank)
    return factors.u[:, :k, :], factors.s[:k, :k, :], factors.v[:, :k, :]


def reconstruct(
    uk: Tensor3, sk: Tensor3, vk: Tensor3, m: TransformLike
) -> Tensor3:
    """``U_k * S_k * V_k^T``."""
    return starm_product(starm_product(uk, sk, m), starm_transpose(vk), m)


def low_rank_approx(a: npt.ArrayLike, m: TransformLike, k: int) -> Tensor3:
    """Optimal t-rank-``k`` approximation of ``a`` under ``m``.

    Raises:
        RankOutOfRangeError: If ``k`` is outside ``[1, min(n1, n2)]``.
    """
    t = as_transform(m)
    arr = as_tensor3(a)
    check_rank(k, min(arr.shape[0], arr.shape[1]))
    u, sigma, vt = facewise_svd(mode3_product(arr, t.matrix))
    ahat_k = (u[:, :, :k] * sigma[:, None, :k]) @ vt[:, :k, :]
    return mode3_product(from_slices(ahat_k), t.matrix.T)


def _threshold(sigma: Stack, tol: float) -> float:
    return tol * float(sigma.max()) if sigma.size else 0.0


def t_rank(a: npt.ArrayLike, m: TransformLike, tol: float = RANK_TOL) -> int:
    """Number of singular tubes with norm above ``tol * sigma_max``."""
    sigma = transform_domain_spectrum(a, m)
    if not sigma.size or sigma.max() == 0.0:
        return 0
    tube_norms = np.sqrt(np.sum(sigma**2, axis=0))
    return int(np.count_nonzero(tube_norms > _threshold(sigma, tol)))


def implicit_rank(a: npt.ArrayLike, m: TransformLike, tol: float = RANK_TOL) -> int:
    """Sum over transform-domain slices of the numerical matrix rank."""
    sigma = transform_domain_spectrum(a, m)
    if not sigma.size or sigma.max() == 0.0:
        return 0
    return int(np.count_nonzero(sigma > _threshold(sigma, tol)))


def pseudoinverse(a: npt.ArrayLike, m: TransformLike, tol: float = RANK_TOL) -> Tensor3:
    """Star-M pseudoinverse ``V * S^+ * U^T`` with slicewise Moore-Penrose ``S^+``."""
    t = as_transform(m)
    u, sigma, vt = facewise_svd(mode3_product(a, t.matrix))
    cutoff = _threshold(sigma, tol)
    inv = np.divide(1.0, sigma, out=np.zeros_like(sigma), where=sigma > cutoff)
    pinv_hat = np.swapaxes(vt, 1, 2) @ (inv[:, :, None] * np.swapaxes(u, 1, 2))
    return mode3_product(from_slices(pinv_hat), t.matrix.T)


def operator_norm(a: npt.ArrayLike, m: TransformLike) -> float:
    """Largest singular value over all transform-domain slices."""
    sigma = transform_domain_spectrum(a, m)
    return float(sigma.max()) if sigma.size else 0.0


def solve_normal_equations(
    a: npt.ArrayLike,
    b: npt.ArrayLike,
    m: TransformLike,
    *,
    reg: float = 0.0,
    tol: float = RANK_TOL,
) -> Tensor3:
    """Slicewise least-squares solution of ``A * X = B``.

    Each transform-domain slice solves ``min ||Ahat_i X_i - Bhat_i||_F`` with
    the minimum-norm solution on rank deficiency. With ``reg > 0`` the
    slices solve the Tikhonov problem
    ``min ||Ahat_i X_i - Bhat_i||_F^2 + reg ||X_i||_F^2`` instead.

    Args:
        a: ``(n1, p, n3)`` design tensor.
        b: ``(n1, n2, n3)`` right-hand side.
        m: Transform.
        reg: Tikhonov parameter, ``>= 0``.
        tol: Relative singular value cutoff for the unregularized solve.

    Returns:
        ``(p, n2, n3)`` solution in the spatial domain.

    Raises:
        ShapeMismatchError: If ``a`` and ``b`` disagree on ``n1`` or ``n3``.
    """
    t = as_transform(m)
    a3 = as_tensor3(a)
    b3 = as_tensor3(b)
    if a3.shape[0] != b3.shape[0] or a3.shape[2] != b3.shape[2]:
        msg = f"cannot solve with A {a3.shape} and B {b3.shape}"
        raise ShapeMismatchError(msg)
    if reg < 0:
        msg = f"regularization must be nonnegative, got {reg}"
        raise ValueError(msg)
    u, sigma, vt = facewise_svd(mode3_product(a3, t.matrix))
    bhat = slices(mode3_product(b3, t.matrix))
    if reg > 0:
        filt = sigma / (sigma**2 + reg)
    else:
        cutoff = _threshold(sigma, tol)
        filt = np.divide(1.0, sigma, out=np.zeros_like(sigma), where=sigma > cutoff)
    coeffs = filt[:, :, None] * (np.swapaxes(u, 1, 2) @ bhat)
    xhat = np.swapaxes(vt, 1, 2) @ coeffs
    return mode3_product(from_slices(xhat), t.matrix.T)


def energy_profile(a: npt.ArrayLike, m: TransformLike) -> EnergyProfile:
    """Percentage of each slice's energy captured per singular value."""
    energy = transform_domain_spectrum(a, m) ** 2
    totals = energy.sum(axis=1, keepdims=True)
    percent = np.divide(
        100.0 * energy, totals, out=np.zeros_like(energy), where=totals > 0
    )
    return EnergyProfile(percent=percent, cumulative=np.cumsum(percent, axis=1))


def projection_error(
    x: npt.ArrayLike, uk: npt.ArrayLike, m: TransformLike
) -> tuple[float, Stack]:
    """Relative error of projecting ``x`` onto the span of ``U_k``.

    Returns:
        ``||X - U_k * U_k^T * X||_F / ||X||_F`` and the same ratio for every
        frontal slice (one entry per parameter in a snapshot tensor).
    """
    x3 = as_tensor3(x)
    t = as_transform(m)
    residual = x3 - starm_product(uk, starm_product(starm_transpose(uk), x3, t), t)
    slice_norms = np.linalg.norm(residual, axis=(0, 1))
    data_norms = np.linalg.norm(x3, axis=(0, 1))
    per_slice = np.divide(
        slice_norms, data_norms, out=np.zeros_like(slice_norms), where=data_norms > 0
    )
    total = frobenius_norm(x3)
    return (frobenius_norm(residual) / total if total > 0 else 0.0), per_slice
