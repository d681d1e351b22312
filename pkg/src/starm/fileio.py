"""Binary tensor/matrix files, CSV traces and JSON reports.

Tensor file layout (all little-endian)::

    b"STM1" | n1 u64 | n2 u64 | n3 u64 | n1*n2*n3 f64 | [len u64 | JSON utf-8]

The payload is slice-major with each frontal slice column-major, which is
Fortran order for an ``(n1, n2, n3)`` array. Matrix files use the magic
``b"STMM"`` and header ``(rows, cols, 1)``.

Every writer goes through a temporary file in the destination directory
followed by a rename, so readers never see a partial file.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import numpy.typing as npt
import structlog

from starm.config import CSV_FLOAT_FORMAT, MATRIX_MAGIC, TENSOR_MAGIC
from starm.errors import TensorFileError
from starm.tensor import Matrix, Tensor3, as_tensor3

logger = structlog.get_logger()

_HEADER = np.dtype("<u8")
_PAYLOAD = np.dtype("<f8")
_HEADER_BYTES = 4 + 3 * _HEADER.itemsize


@dataclass
class TensorFile:
    """A tensor with its optional JSON metadata.

    Attributes:
        data: ``(n1, n2, n3)`` float64 tensor.
        metadata: Decoded metadata block, empty when absent.
    """

    data: Tensor3
    metadata: dict[str, Any] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Atomic writes
# ---------------------------------------------------------------------------


def atomic_write_bytes(path: Path, payload: bytes) -> None:
    """Write ``payload`` to ``path`` via a temporary file and rename.

    Raises:
        TensorFileError: If the destination cannot be written.
    """
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, temp_path = tempfile.mkstemp(
            dir=path.parent, prefix=f".{path.name}-", suffix=".tmp"
        )
    except OSError as exc:
        msg = f"cannot write {path}: {exc.strerror}"
        raise TensorFileError(msg, str(path), "io_error") from exc
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        Path(temp_path).replace(path)
    except Exception:
        if Path(temp_path).exists():
            Path(temp_path).unlink()
        raise


def atomic_write_text(path: Path, text: str) -> None:
    """UTF-8 text variant of ``atomic_write_bytes``."""
    atomic_write_bytes(path, text.encode("utf-8"))


# ---------------------------------------------------------------------------
# Binary formats
# ---------------------------------------------------------------------------


def _encode(
    magic: bytes,
    data: npt.NDArray[np.float64],
    dims: tuple[int, int, int],
    metadata: dict[str, Any] | None,
) -> bytes:
    parts = [
        magic,
        np.asarray(dims, dtype=_HEADER).tobytes(),
        np.asarray(data, dtype=_PAYLOAD).ravel(order="F").tobytes(),
    ]
    if metadata:
        blob = json.dumps(metadata, sort_keys=True).encode("utf-8")
        parts.append(np.asarray([len(blob)], dtype=_HEADER).tobytes())
        parts.append(blob)
    return b"".join(parts)


def _read_bytes(path: Path) -> bytes:
    try:
        return path.read_bytes()
    except FileNotFoundError:
        msg = f"file not found: {path}"
        raise TensorFileError(msg, str(path), "io_error") from None
    except OSError as exc:
        msg = f"cannot read {path}: {exc.strerror}"
        raise TensorFileError(msg, str(path), "io_error") from exc


def _decode(
    magic: bytes, raw: bytes, path: Path
) -> tuple[npt.NDArray[np.float64], dict[str, Any]]:
    if raw[:4] != magic:
        msg = f"{path}: bad magic {raw[:4]!r}, expected {magic!r}"
        raise TensorFileError(msg, str(path), "bad_magic")
    if len(raw) < _HEADER_BYTES:
        msg = f"{path}: truncated header"
        raise TensorFileError(msg, str(path), "truncated")
    n1, n2, n3 = (int(d) for d in np.frombuffer(raw, dtype=_HEADER, count=3, offset=4))
    count = n1 * n2 * n3
    end = _HEADER_BYTES + count * _PAYLOAD.itemsize
    if len(raw) < end:
        have = len(raw) - _HEADER_BYTES
        need = end - _HEADER_BYTES
        msg = f"{path}: payload holds {have} bytes, header needs {need}"
        raise TensorFileError(msg, str(path), "truncated")
    data = np.frombuffer(raw, dtype=_PAYLOAD, count=count, offset=_HEADER_BYTES)
    tensor = data.astype(np.float64).reshape((n1, n2, n3), order="F")
    return tensor, _decode_metadata(raw[end:], path)


def _decode_metadata(tail: bytes, path: Path) -> dict[str, Any]:
    if not tail:
        return {}
    if len(tail) < _HEADER.itemsize:
        msg = f"{path}: truncated metadata length"
        raise TensorFileError(msg, str(path), "truncated")
    length = int(np.frombuffer(tail, dtype=_HEADER, count=1)[0])
    blob = tail[_HEADER.itemsize :]
    if len(blob) != length:
        msg = f"{path}: metadata block is {len(blob)} bytes, header says {length}"
        raise TensorFileError(msg, str(path), "truncated")
    try:
        decoded = json.loads(blob.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        msg = f"{path}: metadata is not valid UTF-8 JSON"
        raise TensorFileError(msg, str(path), "bad_metadata") from exc
    if not isinstance(decoded, dict):
        msg = f"{path}: metadata must be a JSON object"
        raise TensorFileError(msg, str(path), "bad_metadata")
    return decoded


def write_tensor(
    path: Path, a: npt.ArrayLike, metadata: dict[str, Any] | None = None
) -> None:
    """Write a tensor file atomically."""
    tensor = as_tensor3(a)
    dims = (tensor.shape[0], tensor.shape[1], tensor.shape[2])
    atomic_write_bytes(path, _encode(TENSOR_MAGIC, tensor, dims, metadata))
    logger.debug("tensor_written", path=str(path), dims=dims)


def read_tensor(path: Path) -> TensorFile:
    """Read a tensor file.

    Raises:
        TensorFileError: On I/O failure, bad magic, truncation or bad metadata.
    """
    tensor, metadata = _decode(TENSOR_MAGIC, _read_bytes(path), path)
    return TensorFile(data=tensor, metadata=metadata)


def write_matrix(
    path: Path, m: npt.ArrayLike, metadata: dict[str, Any] | None = None
) -> None:
    """Write a matrix file atomically."""
    mat = np.asarray(m, dtype=np.float64)
    if mat.ndim != 2:
        msg = f"expected a matrix, got shape {mat.shape}"
        raise TensorFileError(msg, str(path), "io_error")
    dims = (mat.shape[0], mat.shape[1], 1)
    atomic_write_bytes(path, _encode(MATRIX_MAGIC, mat, dims, metadata))
    logger.debug("matrix_written", path=str(path), dims=dims[:2])


def read_matrix(path: Path) -> Matrix:
    """Read a matrix file.

    Raises:
        TensorFileError: On I/O failure, bad magic or truncation, or if the
            third header dimension is not 1.
    """
    tensor, _ = _decode(MATRIX_MAGIC, _read_bytes(path), path)
    if tensor.shape[2] != 1:
        msg = f"{path}: matrix file has third dimension {tensor.shape[2]}"
        raise TensorFileError(msg, str(path), "bad_magic")
    return tensor[:, :, 0]


# ---------------------------------------------------------------------------
# Text reports
# ---------------------------------------------------------------------------


def format_float(value: float) -> str:
    """Full-precision, locale-independent float text."""
    return format(float(value), CSV_FLOAT_FORMAT)


def write_csv(
    path: Path, header: Sequence[str], rows: Iterable[Sequence[object]]
) -> None:
    """Write a CSV with 17-significant-digit floats."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(
            [format_float(v) if isinstance(v, float | np.floating) else v for v in row]
        )
    atomic_write_text(path, buffer.getvalue())


def read_csv(path: Path) -> list[dict[str, str]]:
    """Read a CSV written by ``write_csv`` into dictionaries."""
    with path.open(encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


def _jsonable(value: object) -> object:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    msg = f"cannot serialize {type(value).__name__}"
    raise TypeError(msg)


def write_json(path: Path, document: dict[str, Any]) -> None:
    """Write a JSON report atomically."""
    atomic_write_text(path, json.dumps(document, indent=2, default=_jsonable) + "\n")
