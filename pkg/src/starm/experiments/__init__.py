"""Experiment runners behind the command-line harness."""

from starm.experiments.angle import contraction_ratio, landscape, trajectory
from starm.experiments.compress import run_compression
from starm.experiments.data import (
    lowrank_tensor,
    random_tensor,
    synthetic_regression,
    wave_snapshots,
)
from starm.experiments.regression import run_regression
from starm.experiments.rom import run_rom

__all__ = [
    "contraction_ratio",
    "landscape",
    "lowrank_tensor",
    "random_tensor",
    "run_compression",
    "run_regression",
    "run_rom",
    "synthetic_regression",
    "trajectory",
    "wave_snapshots",
]
