"""Tests for tensor files, CSV traces and JSON reports."""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import pytest

from starm.errors import TensorFileError
from starm.fileio import (
    atomic_write_text,
    format_float,
    read_csv,
    read_matrix,
    read_tensor,
    write_csv,
    write_json,
    write_matrix,
    write_tensor,
)


def _header(magic: bytes, dims: tuple[int, int, int]) -> bytes:
    return magic + struct.pack("<3Q", *dims)


def test_tensor_round_trip_is_bit_exact(tmp_path: Path) -> None:
    """Awkward floats survive unchanged, metadata included."""
    rng = np.random.default_rng(0)
    a = rng.standard_normal((3, 4, 2)) * 10.0 ** rng.integers(-300, 300, (3, 4, 2))
    a[0, 0, 0] = -0.0
    a[1, 0, 0] = np.nextafter(1.0, 2.0)
    path = tmp_path / "a.stm"
    write_tensor(path, a, {"generator": "random", "seed": 3})
    loaded = read_tensor(path)
    assert loaded.data.shape == (3, 4, 2)
    assert loaded.data.tobytes() == a.astype(np.float64).tobytes()
    assert loaded.metadata == {"generator": "random", "seed": 3}


def test_tensor_layout_is_column_major_by_slice(tmp_path: Path) -> None:
    """The payload lists slice 0 column by column, then slice 1."""
    a = np.arange(12.0).reshape(2, 3, 2)
    path = tmp_path / "a.stm"
    write_tensor(path, a)
    raw = path.read_bytes()
    assert raw[:4] == b"STM1"
    assert struct.unpack("<3Q", raw[4:28]) == (2, 3, 2)
    payload = struct.unpack("<12d", raw[28:])
    assert payload[:6] == tuple(a[:, :, 0].ravel(order="F"))
    assert payload[6:] == tuple(a[:, :, 1].ravel(order="F"))


def test_tensor_without_metadata(tmp_path: Path) -> None:
    """An absent metadata block decodes as an empty mapping."""
    path = tmp_path / "a.stm"
    write_tensor(path, np.ones((1, 1, 3)))
    assert path.stat().st_size == 28 + 24
    assert read_tensor(path).metadata == {}


def test_bad_magic(tmp_path: Path) -> None:
    """Files with another magic are rejected with bad_magic."""
    path = tmp_path / "a.stm"
    write_matrix(path, np.eye(2))
    with pytest.raises(TensorFileError) as excinfo:
        read_tensor(path)
    assert excinfo.value.code == "bad_magic"
    assert excinfo.value.to_dict()["path"] == str(path)


@pytest.mark.parametrize("cut", [10, 28, 40])
def test_truncated_payload(tmp_path: Path, cut: int) -> None:
    """A short header or payload is reported as truncated."""
    path = tmp_path / "a.stm"
    write_tensor(path, np.ones((2, 2, 2)))
    path.write_bytes(path.read_bytes()[:cut])
    with pytest.raises(TensorFileError) as excinfo:
        read_tensor(path)
    assert excinfo.value.code == "truncated"


@pytest.mark.parametrize(
    ("tail", "code"),
    [
        (struct.pack("<Q", 10) + b"{}", "truncated"),
        (struct.pack("<Q", 3) + b"{x}", "bad_metadata"),
        (struct.pack("<Q", 2) + b"[]", "bad_metadata"),
        (struct.pack("<Q", 2) + b"\xff\xfe", "bad_metadata"),
        (b"\x01\x02", "truncated"),
    ],
)
def test_bad_metadata_block(tmp_path: Path, tail: bytes, code: str) -> None:
    """The metadata block must be a length-prefixed UTF-8 JSON object."""
    path = tmp_path / "a.stm"
    path.write_bytes(_header(b"STM1", (1, 1, 1)) + struct.pack("<d", 1.0) + tail)
    with pytest.raises(TensorFileError) as excinfo:
        read_tensor(path)
    assert excinfo.value.code == code


def test_missing_file(tmp_path: Path) -> None:
    """Reading a missing file is an io_error naming the path."""
    with pytest.raises(TensorFileError) as excinfo:
        read_tensor(tmp_path / "missing.stm")
    assert excinfo.value.code == "io_error"
    assert "missing.stm" in str(excinfo.value)


def test_matrix_round_trip(tmp_path: Path) -> None:
    """Matrices keep their shape and values."""
    m = np.arange(6.0).reshape(2, 3) / 7.0
    path = tmp_path / "m.stmm"
    write_matrix(path, m)
    raw = path.read_bytes()
    assert raw[:4] == b"STMM"
    assert struct.unpack("<3Q", raw[4:28]) == (2, 3, 1)
    np.testing.assert_array_equal(read_matrix(path), m)


def test_matrix_header_needs_unit_depth(tmp_path: Path) -> None:
    """A matrix file whose third dimension is not 1 is rejected."""
    path = tmp_path / "m.stmm"
    path.write_bytes(_header(b"STMM", (1, 1, 2)) + struct.pack("<2d", 1.0, 2.0))
    with pytest.raises(TensorFileError):
        read_matrix(path)


def test_write_matrix_rejects_tensors(tmp_path: Path) -> None:
    """Only two-dimensional arrays are matrices."""
    with pytest.raises(TensorFileError):
        write_matrix(tmp_path / "m.stmm", np.zeros((2, 2, 2)))


def test_format_float_round_trips() -> None:
    """17 significant digits reproduce every double."""
    for value in (0.1, 1.0 / 3.0, 2.0**-1074, 1.7976931348623157e308, -0.0):
        assert float(format_float(value)) == value
    assert format_float(0.1) == "0.10000000000000001"


def test_csv_writes_full_precision(tmp_path: Path) -> None:
    """Floats use the full-precision format; other values are written as is."""
    path = tmp_path / "trace.csv"
    write_csv(path, ("iter", "objective"), [(0, 0.1), (1, np.float64(1.0 / 3.0))])
    assert path.read_text().splitlines() == [
        "iter,objective",
        "0,0.10000000000000001",
        "1,0.33333333333333331",
    ]
    rows = read_csv(path)
    assert rows[1] == {"iter": "1", "objective": "0.33333333333333331"}


def test_json_report_serializes_numpy(tmp_path: Path) -> None:
    """Arrays, numpy scalars and paths are converted."""
    path = tmp_path / "report.json"
    write_json(
        path,
        {"sigma": np.array([1.0, 2.0]), "k": np.int64(2), "input": Path("a.stm")},
    )
    assert json.loads(path.read_text()) == {
        "sigma": [1.0, 2.0],
        "k": 2,
        "input": "a.stm",
    }


def test_atomic_write_leaves_no_temporaries(tmp_path: Path) -> None:
    """Only the destination remains, and parents are created."""
    path = tmp_path / "nested" / "out.txt"
    atomic_write_text(path, "first")
    atomic_write_text(path, "second")
    assert path.read_text() == "second"
    assert [p.name for p in path.parent.iterdir()] == ["out.txt"]


def test_unserializable_report_writes_nothing(tmp_path: Path) -> None:
    """A failed JSON encode leaves no file behind."""
    with pytest.raises(TypeError):
        write_json(tmp_path / "report.json", {"bad": object()})
    assert list(tmp_path.iterdir()) == []


def test_atomic_write_removes_temporary_when_rename_fails(tmp_path: Path) -> None:
    """A destination that is a directory keeps the directory and no temporary."""
    target = tmp_path / "report.json"
    target.mkdir()
    with pytest.raises(OSError):
        atomic_write_text(target, "{}")
    assert sorted(p.name for p in tmp_path.iterdir()) == ["report.json"]
    assert target.is_dir()
