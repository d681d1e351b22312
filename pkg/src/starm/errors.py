"""Exception hierarchy for the tensor algebra, optimizer, and harness."""

from __future__ import annotations

from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from pydantic import ValidationError


class StarmError(Exception):
    """Base class for every error raised by this package.

    Attributes:
        code: Stable machine-readable identifier used in CLI error documents.
    """

    code = "starm_error"

    def to_dict(self) -> dict[str, object]:
        """Render the error as a JSON-serializable document."""
        return {"error": self.code, "message": str(self)}


class ShapeMismatchError(StarmError, ValueError):
    """Raised when operand dimensions do not conform."""

    code = "shape_mismatch"


class NotOrthogonalError(StarmError, ValueError):
    """Raised when a transformation matrix fails the orthogonality check."""

    code = "not_orthogonal"

    def __init__(self, message: str, residual: float) -> None:
        """Initialize orthogonality error.

        Args:
            message: Error description.
            residual: Measured ``||M^T M - I||_F``.
        """
        super().__init__(message)
        self.residual = residual

    def to_dict(self) -> dict[str, object]:
        """Render the error including the measured residual."""
        return {**super().to_dict(), "residual": self.residual}


class RankOutOfRangeError(StarmError, ValueError):
    """Raised when a truncation rank is outside ``[1, min(n1, n2)]``."""

    code = "rank_out_of_range"

    def __init__(self, k: int, max_rank: int) -> None:
        """Initialize rank error.

        Args:
            k: Requested truncation.
            max_rank: Largest admissible truncation.
        """
        super().__init__(f"truncation k={k} outside [1, {max_rank}]")
        self.k = k
        self.max_rank = max_rank


class DegenerateTensorError(StarmError, ValueError):
    """Raised when an operation needs a nonzero tensor."""

    code = "degenerate_tensor"


class NotSkewError(StarmError, ValueError):
    """Raised when a retraction argument is far from skew-symmetric."""

    code = "not_skew"


class ContextMismatchError(StarmError, ValueError):
    """Raised when cached forward quantities do not belong to the given inputs."""

    code = "context_mismatch"


class TensorFileError(StarmError):
    """Raised when reading or writing a tensor or matrix file fails."""

    code = "tensor_file"

    def __init__(self, message: str, path: str, code: str | None = None) -> None:
        """Initialize file error.

        Args:
            message: Error description.
            path: Path that caused the error.
            code: Optional reason (``bad_magic``, ``truncated``, ``bad_metadata``,
                ``io_error``).
        """
        super().__init__(message)
        self.path = path
        if code is not None:
            self.code = code

    def to_dict(self) -> dict[str, object]:
        """Render the error including the offending path."""
        return {**super().to_dict(), "path": self.path}


class ConfigError(StarmError):
    """Raised when an experiment configuration cannot be loaded or validated."""

    code = "invalid_config"

    def __init__(
        self,
        message: str,
        path: str | None = None,
        validation_error: ValidationError | None = None,
    ) -> None:
        """Initialize configuration error.

        Args:
            message: Error description.
            path: Config file path, when the error came from a file.
            validation_error: Pydantic validation error details.
        """
        super().__init__(message)
        self.path = path
        self.validation_error = validation_error

    def to_dict(self) -> dict[str, object]:
        """Render the error with per-field validation details."""
        doc = super().to_dict()
        if self.path is not None:
            doc["path"] = self.path
        if self.validation_error is not None:
            doc["details"] = [
                {"loc": [str(p) for p in err["loc"]], "msg": err["msg"]}
                for err in self.validation_error.errors()
            ]
        return doc
