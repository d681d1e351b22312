"""Numerical constants and process settings."""

from pathlib import Path

from pydantic import computed_field
from pydantic_settings import BaseSettings, SettingsConfigDict

# ---------------------------------------------------------------------------
# Tolerances
# ---------------------------------------------------------------------------

ORTHOGONALITY_TOL = 1e-10
RANK_TOL = 1e-10
GAP_TOL = 1e-8
GRAD_TOL = 1e-10
DRIFT_TOL = 1e-8
SKEW_WARN_TOL = 1e-12
SKEW_REJECT_TOL = 1e-6

# ---------------------------------------------------------------------------
# Finite differences
# ---------------------------------------------------------------------------

FD_STEP = 1e-6
FD_DIRECTIONS = 10

# ---------------------------------------------------------------------------
# Backtracking line search defaults
# ---------------------------------------------------------------------------

BACKTRACK_ALPHA0 = 1.0
BACKTRACK_SHRINK = 0.5
BACKTRACK_C = 1e-4
BACKTRACK_MAX = 50

# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------

TENSOR_MAGIC = b"STM1"
MATRIX_MAGIC = b"STMM"
CSV_FLOAT_FORMAT = ".17g"
REPORT_NAME = "report.json"
# Recovery error enumerates 2^n3 * n3! equivalents.
MAX_RECOVERY_N3 = 4


class Settings(BaseSettings):
    """Process settings loaded from environment variables.

    Attributes:
        debug: Enable debug-level logging.
        log_file: Optional file that mirrors the log stream.
        output_dir: Default directory for command artifacts.
    """

    model_config = SettingsConfigDict(
        env_prefix="STARM_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    debug: bool = False
    log_file: Path | None = None
    output_dir: Path = Path()

    @computed_field  # type: ignore[prop-decorator]
    @property
    def resolved_output_dir(self) -> Path:
        """Absolute default output directory.

        Returns:
            ``output_dir`` with ``~`` expanded and made absolute.
        """
        return self.output_dir.expanduser().resolve()
