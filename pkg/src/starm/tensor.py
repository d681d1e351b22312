"""Dense order-3 tensors and the star-M product mechanics.

A tensor is a float64 ``numpy`` array of shape ``(n1, n2, n3)``. Frontal
slices are ``A[:, :, k]`` and tubes are ``A[i, j, :]``. Indexing is 0-based:
the tube ``A[i, j, :]`` is column ``i + j * n1`` of the mode-3 unfolding.

A transformation ``M`` acts along the tubes. Only orthogonal ``M`` is
accepted by the product, so ``M^{-1}`` is always ``M^T``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import StrEnum
from typing import TypeAlias

import numpy as np
import numpy.typing as npt

from starm.config import ORTHOGONALITY_TOL
from starm.errors import NotOrthogonalError, ShapeMismatchError

Tensor3: TypeAlias = npt.NDArray[np.float64]
Matrix: TypeAlias = npt.NDArray[np.float64]
Tube: TypeAlias = npt.NDArray[np.float64]


class TransformKind(StrEnum):
    """Provenance of a transformation matrix."""

    IDENTITY = "identity"
    DCT = "dct"
    RANDOM_ORTHOGONAL = "random"
    DATA_DEPENDENT = "data"
    PERMUTATION = "permutation"
    LEARNED = "learned"
    CUSTOM = "custom"


def orthogonality_residual(m: npt.ArrayLike) -> float:
    """Return ``||M^T M - I||_F`` for a square matrix."""
    mat = np.asarray(m, dtype=np.float64)
    return float(np.linalg.norm(mat.T @ mat - np.eye(mat.shape[0])))


@dataclass(frozen=True, eq=False)
class Transform:
    """An orthogonal ``n3 x n3`` matrix with a provenance tag.

    Attributes:
        matrix: The matrix ``M``; validated orthogonal to ``ORTHOGONALITY_TOL``.
        kind: How the matrix was produced.
    """

    matrix: Matrix
    kind: TransformKind = TransformKind.CUSTOM
    residual: float = field(init=False, repr=False)

    def __post_init__(self) -> None:
        mat = np.array(self.matrix, dtype=np.float64, order="C")
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1] or mat.shape[0] < 1:
            msg = f"transform must be a nonempty square matrix, got {mat.shape}"
            raise ShapeMismatchError(msg)
        residual = orthogonality_residual(mat)
        if not residual <= ORTHOGONALITY_TOL:
            msg = f"matrix is not orthogonal: ||M^T M - I||_F = {residual:.3e}"
            raise NotOrthogonalError(msg, residual)
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "residual", residual)

    @property
    def n3(self) -> int:
        """Tube length the transform acts on."""
        return int(self.matrix.shape[0])

    @property
    def inverse(self) -> Matrix:
        """``M^{-1}``, realized as ``M^T``."""
        return self.matrix.T

    def __neg__(self) -> Transform:
        return Transform(-self.matrix, self.kind)


TransformLike: TypeAlias = Transform | npt.ArrayLike


def as_transform(m: TransformLike) -> Transform:
    """Coerce a matrix or transform into a validated ``Transform``."""
    if isinstance(m, Transform):
        return m
    return Transform(np.asarray(m, dtype=np.float64))


def as_tensor3(a: npt.ArrayLike) -> Tensor3:
    """View array-like data as an order-3 float64 tensor.

    Raises:
        ShapeMismatchError: If the data is not three-dimensional.
    """
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 3:
        msg = f"expected an order-3 tensor, got shape {arr.shape}"
        raise ShapeMismatchError(msg)
    return arr


def tube(values: npt.ArrayLike) -> Tensor3:
    """View a vector of length ``n3`` as a ``(1, 1, n3)`` tensor."""
    return np.asarray(values, dtype=np.float64).reshape(1, 1, -1)


def tube_values(t: npt.ArrayLike) -> Tube:
    """Flatten a tube (vector or ``(1, 1, n3)`` tensor) to a vector."""
    arr = np.asarray(t, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[:2] != (1, 1):
        msg = f"expected a (1, 1, n3) tube, got shape {arr.shape}"
        raise ShapeMismatchError(msg)
    return arr.reshape(-1)


# ---------------------------------------------------------------------------
# Unfolding and mode-3 products
# ---------------------------------------------------------------------------


def mode3_unfold(a: npt.ArrayLike) -> Matrix:
    """Mode-3 unfolding: the ``n3 x (n1*n2)`` matrix whose columns are tubes.

    Column ``i + j * n1`` holds the tube ``A[i, j, :]``.
    """
    arr = as_tensor3(a)
    n1, n2, n3 = arr.shape
    return arr.reshape(n1 * n2, n3, order="F").T


def mode3_fold(x: npt.ArrayLike, dims: tuple[int, int, int]) -> Tensor3:
    """Inverse of ``mode3_unfold``.

    Raises:
        ShapeMismatchError: If ``x`` is not ``n3 x (n1*n2)``.
    """
    mat = np.asarray(x, dtype=np.float64)
    n1, n2, n3 = dims
    if mat.shape != (n3, n1 * n2):
        msg = f"cannot fold {mat.shape} into {dims}: expected ({n3}, {n1 * n2})"
        raise ShapeMismatchError(msg)
    return mat.T.reshape(n1, n2, n3, order="F")


def mode3_product(a: npt.ArrayLike, m: npt.ArrayLike | Transform) -> Tensor3:
    """Apply ``M`` (``p x n3``) along every tube: ``fold(M @ unfold(A))``."""
    arr = as_tensor3(a)
    mat = m.matrix if isinstance(m, Transform) else np.asarray(m, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[1] != arr.shape[2]:
        msg = f"mode-3 product needs {arr.shape[2]} columns, got matrix {mat.shape}"
        raise ShapeMismatchError(msg)
    return np.tensordot(arr, mat, axes=([2], [1]))


def to_transform_domain(a: npt.ArrayLike, m: TransformLike) -> Tensor3:
    """``A x3 M``."""
    return mode3_product(a, as_transform(m).matrix)


def from_transform_domain(ahat: npt.ArrayLike, m: TransformLike) -> Tensor3:
    """``Ahat x3 M^T``."""
    return mode3_product(ahat, as_transform(m).matrix.T)


# ---------------------------------------------------------------------------
# Products
# ---------------------------------------------------------------------------


def slices(a: npt.ArrayLike) -> npt.NDArray[np.float64]:
    """Frontal slices as a stack of shape ``(n3, n1, n2)``."""
    return np.moveaxis(as_tensor3(a), 2, 0)


def from_slices(stack: npt.ArrayLike) -> Tensor3:
    """Inverse of ``slices``."""
    return np.moveaxis(np.asarray(stack, dtype=np.float64), 0, 2)


def facewise_product(ah: npt.ArrayLike, bh: npt.ArrayLike) -> Tensor3:
    """Multiply corresponding frontal slices, ``C[:, :, k] = A[:, :, k] B[:, :, k]``."""
    a = as_tensor3(ah)
    b = as_tensor3(bh)
    if a.shape[1] != b.shape[0] or a.shape[2] != b.shape[2]:
        msg = f"facewise product of {a.shape} and {b.shape} does not conform"
        raise ShapeMismatchError(msg)
    return from_slices(slices(a) @ slices(b))


def starm_product(a: npt.ArrayLike, b: npt.ArrayLike, m: TransformLike) -> Tensor3:
    """The star-M product ``((A x3 M) facewise (B x3 M)) x3 M^T``.

    Raises:
        ShapeMismatchError: If the inner dimensions or tube lengths differ.
        NotOrthogonalError: If ``m`` is not orthogonal.
    """
    t = as_transform(m)
    a3 = as_tensor3(a)
    b3 = as_tensor3(b)
    if a3.shape[2] != t.n3 or b3.shape[2] != t.n3:
        msg = f"tube lengths {a3.shape[2]}, {b3.shape[2]} do not match n3={t.n3}"
        raise ShapeMismatchError(msg)
    ahat = mode3_product(a3, t.matrix)
    bhat = mode3_product(b3, t.matrix)
    return mode3_product(facewise_product(ahat, bhat), t.matrix.T)


def starm_transpose(a: npt.ArrayLike) -> Tensor3:
    """Transpose every frontal slice."""
    return np.transpose(as_tensor3(a), (1, 0, 2))


def tubal_product(a: npt.ArrayLike, b: npt.ArrayLike, m: TransformLike) -> Tube:
    """Star-M product of two tubes, returned as a vector.

    Raises:
        ShapeMismatchError: If the tube lengths differ from ``n3``.
    """
    t = as_transform(m)
    av = tube_values(a)
    bv = tube_values(b)
    if av.shape[0] != t.n3 or bv.shape[0] != t.n3:
        msg = f"tube lengths {av.shape[0]}, {bv.shape[0]} do not match n3={t.n3}"
        raise ShapeMismatchError(msg)
    return t.matrix.T @ ((t.matrix @ av) * (t.matrix @ bv))


def r_matrix(
    a: npt.ArrayLike,
    m: TransformLike,
    *,
    allow_nonorthogonal: bool = False,
) -> Matrix:
    """Structured matrix ``R_M[a] = M^{-1} diag(M a) M``.

    ``R_M[a] @ b`` equals the tubal product ``a * b``. With
    ``allow_nonorthogonal`` the inverse is formed explicitly, which reproduces
    algebras such as the summation transform; the product functions never take
    that path.
    """
    av = tube_values(a)
    if allow_nonorthogonal and not isinstance(m, Transform):
        mat = np.asarray(m, dtype=np.float64)
        if mat.shape != (av.shape[0], av.shape[0]):
            msg = f"matrix {mat.shape} does not act on tubes of length {av.shape[0]}"
            raise ShapeMismatchError(msg)
        return np.linalg.solve(mat, (mat @ av)[:, None] * mat)
    t = as_transform(m)
    if av.shape[0] != t.n3:
        msg = f"tube length {av.shape[0]} does not match n3={t.n3}"
        raise ShapeMismatchError(msg)
    return t.matrix.T @ ((t.matrix @ av)[:, None] * t.matrix)


# ---------------------------------------------------------------------------
# Identities and norms
# ---------------------------------------------------------------------------


def identity_tube(m: TransformLike) -> Tube:
    """``e = 1 x3 M^{-1}``, the unit of the tubal product."""
    t = as_transform(m)
    return t.matrix.T @ np.ones(t.n3)


def identity_tensor(size: int, m: TransformLike) -> Tensor3:
    """f-diagonal ``(size, size, n3)`` tensor with identity tubes on the diagonal."""
    if size < 1:
        msg = f"identity tensor size must be positive, got {size}"
        raise ShapeMismatchError(msg)
    e = identity_tube(m)
    out = np.zeros((size, size, e.shape[0]))
    idx = np.arange(size)
    out[idx, idx, :] = e
    return out


def is_f_diagonal(a: npt.ArrayLike, atol: float = 0.0) -> bool:
    """True if every frontal slice is diagonal up to ``atol``."""
    arr = as_tensor3(a)
    mask = ~np.eye(arr.shape[0], arr.shape[1], dtype=bool)
    return bool(np.all(np.abs(arr[mask]) <= atol))


def frobenius_norm(a: npt.ArrayLike) -> float:
    """Square root of the sum of squared entries."""
    return float(np.linalg.norm(np.asarray(a, dtype=np.float64).ravel()))
