"""Tangent-space projection and retraction on the orthogonal group."""

from __future__ import annotations

import numpy as np
import numpy.typing as npt
import scipy.linalg
import structlog

from starm.config import SKEW_REJECT_TOL, SKEW_WARN_TOL
from starm.errors import NotSkewError, ShapeMismatchError
from starm.tensor import Matrix, orthogonality_residual

logger = structlog.get_logger()


def skew(a: npt.ArrayLike) -> Matrix:
    """Skew-symmetric part ``(A - A^T) / 2``."""
    mat = np.asarray(a, dtype=np.float64)
    return (mat - mat.T) / 2.0


def tangent_generator(m: npt.ArrayLike, g: npt.ArrayLike) -> Matrix:
    """``Omega = (M^T G - G^T M) / 2``, so the Riemannian gradient is ``M Omega``."""
    mat = np.asarray(m, dtype=np.float64)
    grad = np.asarray(g, dtype=np.float64)
    if mat.shape != grad.shape:
        msg = f"gradient {grad.shape} does not match point {mat.shape}"
        raise ShapeMismatchError(msg)
    return skew(mat.T @ grad)


def riemannian_gradient(m: npt.ArrayLike, g: npt.ArrayLike) -> Matrix:
    """Project a Euclidean gradient onto the tangent space at ``M``."""
    return np.asarray(m, dtype=np.float64) @ tangent_generator(m, g)


def retract(m: npt.ArrayLike, omega: npt.ArrayLike) -> Matrix:
    """Exponential retraction ``M expm(Omega)``.

    Slightly asymmetric ``Omega`` is replaced by its skew part with a
    warning.

    Raises:
        NotSkewError: If ``Omega`` is far from skew-symmetric.
    """
    mat = np.asarray(m, dtype=np.float64)
    gen = np.asarray(omega, dtype=np.float64)
    if gen.shape != (mat.shape[1], mat.shape[1]):
        msg = f"generator {gen.shape} does not act on a {mat.shape} point"
        raise ShapeMismatchError(msg)
    asymmetry = float(np.linalg.norm(gen + gen.T))
    if asymmetry > SKEW_WARN_TOL:
        scale = max(1.0, float(np.linalg.norm(gen)))
        if asymmetry > SKEW_REJECT_TOL * scale:
            msg = f"retraction argument is not skew: asymmetry {asymmetry:.3e}"
            raise NotSkewError(msg)
        logger.warning("retraction_symmetrized", asymmetry=asymmetry)
        gen = skew(gen)
    return mat @ scipy.linalg.expm(gen)


def reorthonormalize(m: npt.ArrayLike) -> Matrix:
    """Closest orthogonal matrix (unitary polar factor)."""
    unitary, _ = scipy.linalg.polar(np.asarray(m, dtype=np.float64))
    return np.asarray(unitary, dtype=np.float64)


def enforce_orthogonality(m: npt.ArrayLike, tol: float) -> Matrix:
    """Re-orthonormalize ``m`` when its drift exceeds ``tol``."""
    mat = np.asarray(m, dtype=np.float64)
    drift = orthogonality_residual(mat)
    if drift <= tol:
        return mat
    logger.warning("iterate_reorthonormalized", drift=drift)
    return reorthonormalize(mat)
