"""Low-t-rank compression against matrix SVD baselines."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import scipy.linalg
import structlog

from starm.errors import ShapeMismatchError
from starm.optim import LowRankObjective, OptimConfig, OptimTrace, optimize
from starm.tensor import Matrix, Tensor3, Transform, frobenius_norm, mode3_unfold
from starm.transforms import learned
from starm.tsvdm import low_rank_approx

logger = structlog.get_logger()


@dataclass(frozen=True)
class CompressionEntry:
    """One representation of the data at a fixed truncation.

    Attributes:
        name: Label of the representation.
        rank: Truncation actually used.
        relative_error: ``||A - A_k||_F / ||A||_F``.
        storage: Number of stored floats.
    """

    name: str
    rank: int
    relative_error: float
    storage: int


def tsvdm_storage(dims: tuple[int, ...], k: int) -> int:
    """``k (n1 + n2 + 1) n3`` factor entries plus the ``n3 x n3`` transform."""
    n1, n2, n3 = dims
    return k * (n1 + n2 + 1) * n3 + n3 * n3


def matrix_storage(rows: int, cols: int, k: int) -> int:
    """Rank-``k`` SVD factors of a ``rows x cols`` matrix."""
    return k * (rows + cols + 1)


def stacked(a: Tensor3) -> Matrix:
    """Frontal slices stacked vertically, ``(n1 n3) x n2``."""
    n1, n2, n3 = a.shape
    return np.moveaxis(a, 2, 0).reshape(n3 * n1, n2)


def vectorized(a: Tensor3) -> Matrix:
    """Frontal slices as columns, ``(n1 n2) x n3``."""
    return mode3_unfold(a).T


def _matrix_entry(name: str, mat: Matrix, k: int) -> CompressionEntry:
    rank = min(k, *mat.shape)
    u, sigma, vt = scipy.linalg.svd(mat, full_matrices=False)
    approx = (u[:, :rank] * sigma[:rank]) @ vt[:rank]
    total = float(np.linalg.norm(mat))
    error = float(np.linalg.norm(mat - approx)) / total if total > 0 else 0.0
    return CompressionEntry(name, rank, error, matrix_storage(*mat.shape, rank))


def tsvdm_entry(name: str, a: Tensor3, m: Transform, k: int) -> CompressionEntry:
    """Relative error of the t-rank-``k`` approximation under ``m``."""
    total = frobenius_norm(a)
    residual = frobenius_norm(a - low_rank_approx(a, m, k))
    error = residual / total if total > 0 else 0.0
    return CompressionEntry(name, k, error, tsvdm_storage(a.shape, k))


@dataclass
class CompressionResult:
    """Entries for the data tensor and optionally a transfer tensor."""

    entries: list[CompressionEntry]
    trace: OptimTrace
    learned: Transform
    transfer: list[CompressionEntry] | None = None

    @property
    def monotone(self) -> bool:
        """True if no iteration increased the objective."""
        objectives = self.trace.objectives
        return bool(np.all(np.diff(objectives) <= 1e-12 * max(1.0, objectives[0])))

    def summary(self) -> dict[str, object]:
        """JSON digest for the report."""
        doc: dict[str, object] = {
            "entries": [asdict(e) for e in self.entries],
            "optimization": self.trace.summary(),
            "monotone": self.monotone,
        }
        if self.transfer is not None:
            doc["transfer"] = [asdict(e) for e in self.transfer]
        return doc


def run_compression(
    a: Tensor3,
    k: int,
    m0: Transform,
    cfg: OptimConfig,
    *,
    transfer: Tensor3 | None = None,
) -> CompressionResult:
    """Learn a transform for ``a`` and compare against the baselines.

    Raises:
        ShapeMismatchError: If ``transfer`` has a different tube length.
    """
    if transfer is not None and transfer.shape[2] != a.shape[2]:
        msg = f"transfer tensor has n3={transfer.shape[2]}, data has n3={a.shape[2]}"
        raise ShapeMismatchError(msg)
    trace = optimize(LowRankObjective(a, k), m0.matrix, cfg)
    assert trace.final_m is not None
    best = learned(trace.final_m)
    entries = [
        tsvdm_entry(f"tsvdm[{m0.kind}]", a, m0, k),
        tsvdm_entry("tsvdm[learned]", a, best, k),
        _matrix_entry("stacked", stacked(a), k),
        _matrix_entry("vectorized", vectorized(a), k),
    ]
    transfer_entries = None
    if transfer is not None:
        transfer_entries = [
            tsvdm_entry(f"tsvdm[{m0.kind}]", transfer, m0, k),
            tsvdm_entry("tsvdm[learned]", transfer, best, k),
        ]
    for entry in entries:
        logger.info("compression_entry", **asdict(entry))
    return CompressionResult(
        entries=entries, trace=trace, learned=best, transfer=transfer_entries
    )
