"""Pytest configuration and fixtures."""

import sys
from pathlib import Path

# Add src to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

import numpy as np
import pytest

from starm.tensor import Matrix, Tensor3
from starm.transforms import make_random_orthogonal


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator."""
    return np.random.default_rng(20240613)


@pytest.fixture
def orthogonal(rng: np.random.Generator) -> Matrix:
    """Random 5 x 5 orthogonal transform."""
    return np.array(make_random_orthogonal(5, int(rng.integers(1 << 30))).matrix)


@pytest.fixture
def tensor(rng: np.random.Generator) -> Tensor3:
    """Random (4, 3, 5) tensor."""
    return rng.standard_normal((4, 3, 5))
