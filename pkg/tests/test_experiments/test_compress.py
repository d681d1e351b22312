"""Tests for the compression experiment."""

from __future__ import annotations

import numpy as np
import pytest

from starm.errors import ShapeMismatchError
from starm.experiments.compress import (
    matrix_storage,
    run_compression,
    stacked,
    tsvdm_entry,
    tsvdm_storage,
    vectorized,
)
from starm.experiments.data import lowrank_tensor
from starm.optim import OptimConfig
from starm.transforms import make_dct, make_identity


def test_storage_counts() -> None:
    """Factor storage plus the transform."""
    assert tsvdm_storage((6, 5, 4), 2) == 2 * 12 * 4 + 16
    assert matrix_storage(24, 5, 2) == 2 * 30


def test_baseline_matricizations(tensor: np.ndarray) -> None:
    """Stacked slices and vectorized slices keep every entry."""
    s = stacked(tensor)
    v = vectorized(tensor)
    assert s.shape == (20, 3)
    assert v.shape == (12, 5)
    np.testing.assert_array_equal(s[4:8], tensor[:, :, 1])
    np.testing.assert_array_equal(v[:, 2], tensor[:, :, 2].ravel(order="F"))


def test_tsvdm_entry_is_exact_for_hidden_rank() -> None:
    """The hiding transform compresses exactly at the hidden rank."""
    a = lowrank_tensor((6, 5, 4), 2, seed=3)
    entry = tsvdm_entry("dct", a, make_dct(4), 2)
    assert entry.relative_error < 1e-10
    assert entry.storage == tsvdm_storage(a.shape, 2)


def test_learned_transform_does_not_lose() -> None:
    """The learned transform is at least as good as its start, monotonically."""
    a = lowrank_tensor((6, 5, 4), 1, noise=0.05, seed=4)
    result = run_compression(a, 1, make_identity(4), OptimConfig(max_iters=25))
    entries = {e.name: e for e in result.entries}
    assert set(entries) == {
        "tsvdm[identity]",
        "tsvdm[learned]",
        "stacked",
        "vectorized",
    }
    assert (
        entries["tsvdm[learned]"].relative_error
        <= entries["tsvdm[identity]"].relative_error + 1e-12
    )
    assert result.monotone
    summary = result.summary()
    assert "transfer" not in summary
    assert summary["optimization"]["iterations"] == len(result.trace.records) - 1


def test_transfer_needs_matching_tubes() -> None:
    """A transfer tensor with another n3 is rejected before optimizing."""
    a = lowrank_tensor((4, 4, 3), 1, seed=0)
    with pytest.raises(ShapeMismatchError):
        run_compression(
            a, 1, make_dct(3), OptimConfig(max_iters=1), transfer=np.ones((4, 4, 2))
        )


def test_transfer_entries() -> None:
    """The learned transform is evaluated on the second tensor too."""
    a = lowrank_tensor((4, 4, 3), 1, seed=0)
    other = lowrank_tensor((5, 3, 3), 1, seed=1)
    result = run_compression(
        a, 1, make_dct(3), OptimConfig(max_iters=2), transfer=other
    )
    assert result.transfer is not None
    assert [e.name for e in result.transfer] == ["tsvdm[dct]", "tsvdm[learned]"]
    assert result.transfer[0].relative_error < 1e-10


@pytest.mark.slow
def test_learning_reduces_error_on_hidden_rank_tensor() -> None:
    """From the identity, 100 iterations cut the error by at least one percent."""
    a = lowrank_tensor((8, 6, 5), 2, noise=1e-3, seed=0)
    result = run_compression(a, 2, make_identity(5), OptimConfig(max_iters=100))
    entries = {e.name: e for e in result.entries}
    start = entries["tsvdm[identity]"].relative_error
    assert entries["tsvdm[learned]"].relative_error <= 0.99 * start
    assert result.monotone
