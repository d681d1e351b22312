"""Constructors and validation for transformation matrices."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import numpy.typing as npt
import scipy.fft
import scipy.linalg
import structlog

from starm.config import MAX_RECOVERY_N3, ORTHOGONALITY_TOL
from starm.errors import DegenerateTensorError, ShapeMismatchError
from starm.tensor import (
    Tensor3,
    Transform,
    TransformKind,
    as_transform,
    mode3_unfold,
    orthogonality_residual,
)

logger = structlog.get_logger()


def validate(m: npt.ArrayLike) -> bool:
    """True iff ``m`` is square and ``||M^T M - I||_F <= 1e-10``."""
    mat = np.asarray(m, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        return False
    return orthogonality_residual(mat) <= ORTHOGONALITY_TOL


def make_identity(n3: int) -> Transform:
    """Exact ``n3 x n3`` identity."""
    _check_size(n3)
    return Transform(np.eye(n3), TransformKind.IDENTITY)


def make_dct(n3: int) -> Transform:
    """Orthonormal DCT-II matrix.

    Row ``i``, column ``j`` is ``c_i cos(pi i (2j + 1) / (2 n3))`` with
    ``c_0 = sqrt(1/n3)`` and ``c_i = sqrt(2/n3)``; identical to MATLAB's
    ``dct(eye(n3))``.
    """
    _check_size(n3)
    return Transform(
        scipy.fft.dct(np.eye(n3), type=2, norm="ortho", axis=0),
        TransformKind.DCT,
    )


def make_random_orthogonal(n3: int, seed: int) -> Transform:
    """Orthogonal factor of a seeded standard-normal matrix.

    The columns of ``Q`` are scaled by the signs of ``diag(R)`` so the result
    does not depend on the LAPACK sign convention.
    """
    _check_size(n3)
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((n3, n3)))
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return Transform(q * signs, TransformKind.RANDOM_ORTHOGONAL)


def make_data_dependent(a: Tensor3) -> Transform:
    """``Z^T`` from the full left singular factor of the mode-3 unfolding.

    Raises:
        DegenerateTensorError: If ``a`` is identically zero.
    """
    unfolded = mode3_unfold(a)
    if not np.any(unfolded):
        msg = "data-dependent transform needs a nonzero tensor"
        raise DegenerateTensorError(msg)
    z, _, _ = scipy.linalg.svd(unfolded, full_matrices=True)
    return Transform(z.T, TransformKind.DATA_DEPENDENT)


def make_permutation(perm: list[int] | tuple[int, ...]) -> Transform:
    """Row-permutation matrix with ``P[i, perm[i]] = 1``.

    Raises:
        ShapeMismatchError: If ``perm`` is not a permutation of ``0..n-1``.
    """
    n3 = len(perm)
    if sorted(perm) != list(range(n3)) or n3 == 0:
        msg = f"{list(perm)} is not a permutation of 0..{n3 - 1}"
        raise ShapeMismatchError(msg)
    p = np.zeros((n3, n3))
    p[np.arange(n3), list(perm)] = 1.0
    return Transform(p, TransformKind.PERMUTATION)


def learned(m: npt.ArrayLike) -> Transform:
    """Tag an optimizer result as a learned transform."""
    return Transform(np.asarray(m, dtype=np.float64), TransformKind.LEARNED)


def transformation_error(m: npt.ArrayLike, m_true: npt.ArrayLike) -> float | None:
    """Distance from ``m`` to the closest ``P D M_true``.

    ``P`` ranges over row permutations and ``D`` over diagonal sign
    matrices, the ``2^n3 n3!`` matrices that leave the objectives unchanged.
    Returns ``None`` above ``n3 = 4`` where the enumeration is skipped.
    """
    mat = np.asarray(m, dtype=np.float64)
    truth = np.asarray(m_true, dtype=np.float64)
    n3 = truth.shape[0]
    if mat.shape != truth.shape:
        msg = f"cannot compare {mat.shape} with {truth.shape}"
        raise ShapeMismatchError(msg)
    if n3 > MAX_RECOVERY_N3:
        return None
    best = np.inf
    for perm in itertools.permutations(range(n3)):
        rows = truth[list(perm)]
        for signs in itertools.product((1.0, -1.0), repeat=n3):
            candidate = np.asarray(signs)[:, None] * rows
            best = min(best, float(np.linalg.norm(mat - candidate)))
    return best


def _check_size(n3: int) -> None:
    if n3 < 1:
        msg = f"transform size must be positive, got {n3}"
        raise ShapeMismatchError(msg)


# ---------------------------------------------------------------------------
# Textual transform specs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TransformSpec:
    """A parsed transform description such as ``dct`` or ``random:7``.

    Attributes:
        kind: Which constructor to use.
        seed: Seed for ``random``.
        perm: Row order for ``perm``.
        path: Matrix file for ``file``.
    """

    kind: TransformKind
    seed: int | None = None
    perm: tuple[int, ...] | None = None
    path: Path | None = None

    @classmethod
    def parse(cls, text: str) -> TransformSpec:
        """Parse ``identity|dct|random:SEED|data|file:PATH|perm:I,J,...``.

        Raises:
            ValueError: If the text names no known transform.
        """
        name, _, arg = text.strip().partition(":")
        name = name.lower()
        if name == "identity" and not arg:
            return cls(TransformKind.IDENTITY)
        if name == "dct" and not arg:
            return cls(TransformKind.DCT)
        if name == "data" and not arg:
            return cls(TransformKind.DATA_DEPENDENT)
        if name == "random":
            try:
                return cls(TransformKind.RANDOM_ORTHOGONAL, seed=int(arg or 0))
            except ValueError:
                msg = f"invalid seed in transform spec {text!r}"
                raise ValueError(msg) from None
        if name == "perm" and arg:
            try:
                order = tuple(int(p) for p in arg.split(","))
            except ValueError:
                msg = f"invalid permutation in transform spec {text!r}"
                raise ValueError(msg) from None
            return cls(TransformKind.PERMUTATION, perm=order)
        if name == "file" and arg:
            return cls(TransformKind.CUSTOM, path=Path(arg))
        msg = f"unknown transform spec {text!r}"
        raise ValueError(msg)

    def materialize(self, n3: int, data: Tensor3 | None = None) -> Transform:
        """Build the transform for tubes of length ``n3``.

        Args:
            n3: Tube length.
            data: Tensor for the data-dependent transform.

        Raises:
            ShapeMismatchError: If the result does not act on length ``n3``.
            ValueError: If ``data`` is needed but missing.
        """
        match self.kind:
            case TransformKind.IDENTITY:
                transform = make_identity(n3)
            case TransformKind.DCT:
                transform = make_dct(n3)
            case TransformKind.RANDOM_ORTHOGONAL:
                transform = make_random_orthogonal(n3, self.seed or 0)
            case TransformKind.DATA_DEPENDENT:
                if data is None:
                    msg = "data-dependent transform needs an input tensor"
                    raise ValueError(msg)
                transform = make_data_dependent(data)
            case TransformKind.PERMUTATION:
                transform = make_permutation(self.perm or ())
            case _:
                from starm.fileio import read_matrix

                assert self.path is not None
                transform = as_transform(read_matrix(self.path))
        if transform.n3 != n3:
            msg = f"transform acts on length {transform.n3}, data has n3={n3}"
            raise ShapeMismatchError(msg)
        logger.debug("transform_materialized", kind=str(self.kind), n3=n3)
        return transform

    def __str__(self) -> str:
        match self.kind:
            case TransformKind.RANDOM_ORTHOGONAL:
                return f"random:{self.seed}"
            case TransformKind.PERMUTATION:
                return "perm:" + ",".join(str(p) for p in self.perm or ())
            case TransformKind.CUSTOM:
                return f"file:{self.path}"
            case _:
                return str(self.kind)
