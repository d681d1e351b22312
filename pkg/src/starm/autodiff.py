"""Reverse-mode derivatives of the star-M building blocks.

Each ``grad_*`` function maps an output cotangent to input cotangents
(vector-Jacobian products). Gradients with respect to the transform are
Euclidean gradients of the map that realizes ``M^{-1}`` as ``M^T``; project
them onto the tangent space of the orthogonal group before use.
"""

from __future__ import annotations

import hashlib
from collections.abc import Callable
from dataclasses import dataclass
from enum import StrEnum

import numpy as np
import numpy.typing as npt
import scipy.linalg
import structlog

from starm.config import FD_DIRECTIONS, FD_STEP, GAP_TOL, RANK_TOL
from starm.errors import ContextMismatchError, ShapeMismatchError
from starm.tensor import (
    Matrix,
    Tensor3,
    Transform,
    TransformLike,
    as_tensor3,
    as_transform,
    from_slices,
    mode3_product,
    mode3_unfold,
    slices,
    starm_product,
    starm_transpose,
)
from starm.tsvdm import Stack, check_rank, facewise_svd

logger = structlog.get_logger()


# ---------------------------------------------------------------------------
# Mode-3 and star-M products
# ---------------------------------------------------------------------------


def grad_mode3_wrt_tensor(db: npt.ArrayLike, m: TransformLike | Matrix) -> Tensor3:
    """Cotangent of ``A`` for ``B = A x3 M``: ``dB x3 M^T``."""
    mat = m.matrix if isinstance(m, Transform) else np.asarray(m, dtype=np.float64)
    cot = as_tensor3(db)
    if cot.shape[2] != mat.shape[0]:
        msg = f"cotangent {cot.shape} does not match a {mat.shape} transform"
        raise ShapeMismatchError(msg)
    return mode3_product(cot, mat.T)


def grad_mode3_wrt_matrix(db: npt.ArrayLike, a: npt.ArrayLike) -> Matrix:
    """Cotangent of ``M`` for ``B = A x3 M``: ``unfold(dB) unfold(A)^T``."""
    cot = as_tensor3(db)
    arr = as_tensor3(a)
    if cot.shape[:2] != arr.shape[:2]:
        msg = f"cotangent {cot.shape} does not match tensor {arr.shape}"
        raise ShapeMismatchError(msg)
    return mode3_unfold(cot) @ mode3_unfold(arr).T


def grad_starm(
    dc: npt.ArrayLike,
    a: npt.ArrayLike,
    b: npt.ArrayLike,
    m: TransformLike,
) -> tuple[Tensor3, Tensor3, Matrix]:
    """Cotangents of ``(A, B, M)`` for ``C = A * B``.

    ``dA = dC * B^T``, ``dB = A^T * dC`` and
    ``dM = M (C_(3) dC_(3)^T + dA_(3) A_(3)^T + dB_(3) B_(3)^T)``.
    """
    t = as_transform(m)
    cot = as_tensor3(dc)
    a3 = as_tensor3(a)
    b3 = as_tensor3(b)
    c = starm_product(a3, b3, t)
    if cot.shape != c.shape:
        msg = f"cotangent {cot.shape} does not match product {c.shape}"
        raise ShapeMismatchError(msg)
    da = starm_product(cot, starm_transpose(b3), t)
    db = starm_product(starm_transpose(a3), cot, t)
    inner = (
        mode3_unfold(c) @ mode3_unfold(cot).T
        + mode3_unfold(da) @ mode3_unfold(a3).T
        + mode3_unfold(db) @ mode3_unfold(b3).T
    )
    return da, db, t.matrix @ inner


# ---------------------------------------------------------------------------
# Matrix SVD
# ---------------------------------------------------------------------------


def svd_grad(
    du: npt.ArrayLike,
    ds: npt.ArrayLike,
    dv: npt.ArrayLike,
    u: npt.ArrayLike,
    sigma: npt.ArrayLike,
    v: npt.ArrayLike,
    *,
    sigma_max: float | None = None,
    rank_tol: float = RANK_TOL,
    gap_tol: float = GAP_TOL,
) -> tuple[npt.NDArray[np.float64], npt.NDArray[np.bool_]]:
    """Reverse-mode derivative of the economic SVD ``A = U diag(sigma) V^T``.

    Works on a single matrix or on a stack (leading batch axes). ``F`` has
    entries ``1 / (sigma_j^2 - sigma_i^2)``; entries whose gap is below
    ``gap_tol * sigma_max^2`` are zeroed and the matrix is flagged when the
    zeroed entry is actually reached by the cotangents. ``1 / sigma`` is
    taken as zero below ``rank_tol * sigma_max``.

    Args:
        du: Cotangent of ``U`` (``m x r``).
        ds: Cotangent of the singular values (``r``).
        dv: Cotangent of ``V`` (``n x r``).
        u: Left singular vectors (``m x r``).
        sigma: Singular values (``r``).
        v: Right singular vectors (``n x r``).
        sigma_max: Scale for both thresholds; defaults to ``max(sigma)``.
        rank_tol: Relative cutoff for inverting singular values.
        gap_tol: Relative cutoff for squared-gap denominators.

    Returns:
        Cotangent of ``A`` and the per-matrix degenerate-spectrum flags.
    """
    u_ = np.asarray(u, dtype=np.float64)
    v_ = np.asarray(v, dtype=np.float64)
    s_ = np.asarray(sigma, dtype=np.float64)
    du_ = np.asarray(du, dtype=np.float64)
    dv_ = np.asarray(dv, dtype=np.float64)
    ds_ = np.asarray(ds, dtype=np.float64)
    r = s_.shape[-1]
    scale = float(np.max(s_, initial=0.0)) if sigma_max is None else sigma_max

    ut = np.swapaxes(u_, -1, -2)
    vt = np.swapaxes(v_, -1, -2)
    s2 = s_**2
    gap = s2[..., None, :] - s2[..., :, None]
    off_diagonal = ~np.eye(r, dtype=bool)
    usable = (np.abs(gap) >= gap_tol * scale**2) & off_diagonal
    f = np.divide(1.0, gap, out=np.zeros_like(gap), where=usable)

    ut_du = ut @ du_
    vt_dv = vt @ dv_
    j = ut_du - np.swapaxes(ut_du, -1, -2)
    k = vt_dv - np.swapaxes(vt_dv, -1, -2)
    reached = (j != 0.0) | (k != 0.0)
    degenerate = np.any(~usable & off_diagonal & reached, axis=(-2, -1))

    inv = np.divide(1.0, s_, out=np.zeros_like(s_), where=s_ > rank_tol * scale)
    core = (
        (f * j) * s_[..., None, :]
        + ds_[..., :, None] * np.eye(r)
        + s_[..., :, None] * (f * k)
    )
    da = u_ @ core @ vt
    da += (du_ - u_ @ ut_du) * inv[..., None, :] @ vt
    dvt = np.swapaxes(dv_, -1, -2)
    da += u_ @ (inv[..., :, None] * (dvt - np.swapaxes(vt_dv, -1, -2) @ vt))
    return da, degenerate


# ---------------------------------------------------------------------------
# Truncated t-SVDM with respect to M
# ---------------------------------------------------------------------------


def _digest(a: Tensor3, m: Matrix) -> str:
    h = hashlib.blake2b(digest_size=16)
    h.update(np.asarray(a.shape, dtype=np.int64).tobytes())
    h.update(np.ascontiguousarray(a).tobytes())
    h.update(np.ascontiguousarray(m).tobytes())
    return h.hexdigest()


@dataclass(frozen=True, eq=False)
class GradContext:
    """Forward quantities of ``A_k(M)`` cached for the backward pass.

    Attributes:
        k: Truncation.
        u: ``(n3, n1, r)`` transform-domain left singular vectors.
        sigma: ``(n3, r)`` transform-domain singular values.
        vt: ``(n3, r, n2)`` transform-domain right singular vectors, transposed.
        approx_hat: ``Ahat_k`` in the transform domain.
        approx: ``A_k`` in the spatial domain.
        degenerate: Per-slice flags for near-repeated singular values reached
            by the truncation.
        digest: Content hash of the inputs the context was built from.
    """

    k: int
    u: Stack
    sigma: Stack
    vt: Stack
    approx_hat: Tensor3
    approx: Tensor3
    degenerate: npt.NDArray[np.bool_]
    digest: str

    @classmethod
    def build(cls, a: npt.ArrayLike, m: TransformLike, k: int) -> GradContext:
        """Run the forward pass ``A -> A_k(M)`` and cache its factors."""
        t = as_transform(m)
        arr = as_tensor3(a)
        check_rank(k, min(arr.shape[0], arr.shape[1]))
        u, sigma, vt = facewise_svd(mode3_product(arr, t.matrix))
        approx_hat = from_slices((u[:, :, :k] * sigma[:, None, :k]) @ vt[:, :k, :])
        scale = float(np.max(sigma, initial=0.0))
        s2 = sigma**2
        head = s2[:, :k, None]
        gaps = np.abs(head - s2[:, None, :])
        gaps[:, np.arange(k), np.arange(k)] = np.inf
        # Pairs of numerically zero values never receive a cotangent.
        tiny = sigma <= RANK_TOL * scale
        both_tiny = tiny[:, :k, None] & tiny[:, None, :]
        close = (gaps < GAP_TOL * scale**2) & ~both_tiny
        degenerate = np.any(close, axis=(1, 2)) & (scale > 0)
        return cls(
            k=k,
            u=u,
            sigma=sigma,
            vt=vt,
            approx_hat=approx_hat,
            approx=mode3_product(approx_hat, t.matrix.T),
            degenerate=degenerate,
            digest=_digest(arr, t.matrix),
        )

    def matches(self, a: npt.ArrayLike, m: TransformLike) -> bool:
        """True if the context was built from exactly these inputs."""
        return self.digest == _digest(as_tensor3(a), as_transform(m).matrix)


def tsvdm_grad_wrt_M(
    r: npt.ArrayLike,
    a: npt.ArrayLike,
    m: TransformLike,
    k: int,
    ctx: GradContext | None = None,
) -> Matrix:
    """Euclidean gradient of ``M -> <R, A_k(M)>``.

    ``A_k(M) = (Ahat_k) x3 M^T`` with ``Ahat_k`` the slicewise rank-``k``
    truncation of ``Ahat = A x3 M``. The backward pass differentiates the
    outer ``x3 M^T``, the facewise product ``U_k S_k V_k^T``, the slicewise
    SVD (cotangents padded with zeros beyond ``k``), and the inner ``x3 M``.

    Raises:
        ContextMismatchError: If ``ctx`` was built from other inputs.
    """
    t = as_transform(m)
    arr = as_tensor3(a)
    cot = as_tensor3(r)
    if cot.shape != arr.shape:
        msg = f"cotangent {cot.shape} does not match tensor {arr.shape}"
        raise ShapeMismatchError(msg)
    if ctx is None:
        ctx = GradContext.build(arr, t, k)
    elif ctx.k != k or not ctx.matches(arr, t):
        msg = "gradient context was built from different inputs"
        raise ContextMismatchError(msg)
    if np.any(ctx.degenerate):
        logger.warning(
            "degenerate_spectrum",
            slices=np.flatnonzero(ctx.degenerate).tolist(),
            k=k,
        )

    # Outer x3 M^T: cotangent of Ahat_k and the M^T contribution.
    rhat = mode3_product(cot, t.matrix)
    grad = grad_mode3_wrt_matrix(cot, ctx.approx_hat).T

    # Facewise U_k S_k V_k^T, padded to the full economic width.
    r_stack = slices(rhat)
    u, sigma, vt = ctx.u, ctx.sigma, ctx.vt
    v = np.swapaxes(vt, 1, 2)
    du = np.zeros_like(u)
    dv = np.zeros_like(v)
    ds = np.zeros_like(sigma)
    uk, sk, vk = u[:, :, :k], sigma[:, :k], v[:, :, :k]
    du[:, :, :k] = (r_stack @ vk) * sk[:, None, :]
    dv[:, :, :k] = (np.swapaxes(r_stack, 1, 2) @ uk) * sk[:, None, :]
    ds[:, :k] = np.einsum("nik,nij,njk->nk", uk, r_stack, vk)

    dahat, _ = svd_grad(
        du, ds, dv, u, sigma, v, sigma_max=float(np.max(sigma, initial=0.0))
    )

    # Inner x3 M.
    grad += grad_mode3_wrt_matrix(from_slices(dahat), arr)
    return grad


# ---------------------------------------------------------------------------
# Finite-difference checking
# ---------------------------------------------------------------------------


class DiffMode(StrEnum):
    """Perturbation family for finite-difference checks."""

    EUCLIDEAN = "euclidean"
    GEODESIC = "geodesic"


def finite_diff_check(
    f: Callable[[npt.NDArray[np.float64]], float],
    x: npt.ArrayLike,
    g: npt.ArrayLike,
    mode: DiffMode | str = DiffMode.EUCLIDEAN,
    *,
    n_directions: int = FD_DIRECTIONS,
    seed: int = 0,
    step: float | None = None,
    atol: float = 1e-8,
) -> float:
    """Largest relative error between ``g`` and central differences of ``f``.

    Euclidean mode perturbs ``x`` along random unit directions ``D`` and
    compares ``<g, D>``. Geodesic mode needs an orthogonal ``x``, moves along
    ``x expm(t Omega)`` for random unit skew ``Omega`` and compares
    ``<g, x Omega>``.

    Each direction's error is ``|fd - analytic|`` divided by the largest of
    ``|fd|``, ``|analytic|``, ``1e-3`` times the norm of the relevant part of
    ``g``, and ``atol``.
    """
    mode = DiffMode(mode)
    rng = np.random.default_rng(seed)
    x_ = np.asarray(x, dtype=np.float64)
    g_ = np.asarray(g, dtype=np.float64)
    h = FD_STEP * (1.0 + float(np.linalg.norm(x_))) if step is None else step

    if mode is DiffMode.GEODESIC:
        xtg = x_.T @ g_
        g_scale = float(np.linalg.norm(xtg - xtg.T)) / 2.0
    else:
        g_scale = float(np.linalg.norm(g_))

    worst = 0.0
    for _ in range(n_directions):
        if mode is DiffMode.GEODESIC:
            raw = rng.standard_normal((x_.shape[1], x_.shape[1]))
            omega = raw - raw.T
            omega /= np.linalg.norm(omega)
            plus = f(x_ @ scipy.linalg.expm(h * omega))
            minus = f(x_ @ scipy.linalg.expm(-h * omega))
            analytic = float(np.vdot(g_, x_ @ omega))
        else:
            direction = rng.standard_normal(x_.shape)
            direction /= np.linalg.norm(direction)
            plus = f(x_ + h * direction)
            minus = f(x_ - h * direction)
            analytic = float(np.vdot(g_, direction))
        fd = (plus - minus) / (2.0 * h)
        denom = max(abs(fd), abs(analytic), 1e-3 * g_scale, atol)
        worst = max(worst, abs(fd - analytic) / denom)
    return worst
