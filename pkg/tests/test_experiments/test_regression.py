"""Tests for the synthetic regression experiment."""

from __future__ import annotations

import numpy as np
import pytest

from starm.experiments.data import synthetic_regression
from starm.experiments.regression import oracle_objective, run_regression
from starm.optim import OptimConfig
from starm.schemas import RegressionMethod
from starm.tensor import orthogonality_residual
from starm.transforms import TransformSpec


def test_problem_shapes_and_slopes() -> None:
    """Design, observations and hidden transform have the documented shapes."""
    problem = synthetic_regression(4, n_points=30, seed=2)
    assert problem.a.shape == (30, 2, 4)
    assert problem.b.shape == (30, 1, 4)
    assert problem.m_true.shape == (4, 4)
    np.testing.assert_allclose(problem.slopes, [-0.5, 0.0, 0.5, 1.0])
    assert orthogonality_residual(problem.m_true) < 1e-12


def test_problem_is_seeded() -> None:
    """The same seed gives the same tensors."""
    first = synthetic_regression(2, noise=1e-3, seed=5)
    second = synthetic_regression(2, noise=1e-3, seed=5)
    np.testing.assert_array_equal(first.a, second.a)
    np.testing.assert_array_equal(first.b, second.b)


def test_noiseless_oracle_is_exact() -> None:
    """The hidden transform fits noiseless data exactly."""
    assert oracle_objective(synthetic_regression(4, seed=1)) < 1e-20


def test_noisy_oracle_objective_scale() -> None:
    """Small noise leaves a small but nonzero objective at the hidden transform."""
    value = oracle_objective(synthetic_regression(2, noise=1e-3, seed=0))
    assert 1e-6 <= value <= 1e-2


def test_single_method() -> None:
    """Asking for one method runs only that method."""
    problem = synthetic_regression(2, seed=3)
    runs = run_regression(problem, RegressionMethod.ALTDESC, OptimConfig(max_iters=3))
    assert [run.method for run in runs] == [RegressionMethod.ALTDESC]
    assert runs[0].summary()["method"] == "altdesc"
    assert runs[0].recovery_error is not None


def test_recovery_error_skipped_for_long_tubes() -> None:
    """Tubes longer than four are not enumerated."""
    problem = synthetic_regression(8, n_points=20, seed=0)
    runs = run_regression(problem, RegressionMethod.VARPRO, OptimConfig(max_iters=1))
    assert runs[0].recovery_error is None


@pytest.mark.slow
@pytest.mark.parametrize("n3", [2, 4])
def test_varpro_recovers_hidden_transform(n3: int) -> None:
    """Variable projection finds the hidden transform up to signed permutation."""
    problem = synthetic_regression(n3, seed=n3)
    cfg = OptimConfig(max_iters=3000, grad_tol=1e-12)
    (run,) = run_regression(
        problem, RegressionMethod.VARPRO, cfg, init=TransformSpec.parse("random:1")
    )
    assert run.trace.final_objective <= 1e-8
    assert run.recovery_error is not None
    assert run.recovery_error < 1e-3


@pytest.mark.slow
def test_both_methods_share_a_start() -> None:
    """Both traces begin at the same objective value."""
    problem = synthetic_regression(2, seed=7)
    varpro, altdesc = run_regression(
        problem, RegressionMethod.BOTH, OptimConfig(max_iters=50)
    )
    assert varpro.method is RegressionMethod.VARPRO
    assert altdesc.method is RegressionMethod.ALTDESC
    assert varpro.trace.records[0].objective <= altdesc.trace.records[0].objective
    assert varpro.trace.final_objective <= altdesc.trace.final_objective


@pytest.mark.slow
def test_varpro_fits_eight_slice_problem() -> None:
    """The longest tube in the sweep is still fitted exactly."""
    problem = synthetic_regression(8, seed=8)
    cfg = OptimConfig(max_iters=5000, grad_tol=1e-12)
    (run,) = run_regression(
        problem, RegressionMethod.VARPRO, cfg, init=TransformSpec.parse("random:1")
    )
    assert run.trace.final_objective <= 1e-8
    assert run.recovery_error is None


@pytest.mark.slow
def test_varpro_reaches_the_noise_floor() -> None:
    """With noisy data the fit settles at the objective of the hidden transform.

    Noise lands on every spatial entry of both tensors, so the floor is
    ``O(n_points * n3 * noise^2)`` rather than ``O(noise^2)``.
    """
    problem = synthetic_regression(2, noise=1e-2, seed=0)
    floor = oracle_objective(problem)
    assert floor > 1e-3
    cfg = OptimConfig(max_iters=3000, grad_tol=1e-12)
    (run,) = run_regression(
        problem, RegressionMethod.VARPRO, cfg, init=TransformSpec.parse("random:1")
    )
    assert 0.5 * floor <= run.trace.final_objective <= 1.05 * floor
    assert run.recovery_error is not None
    assert run.recovery_error < 0.1


@pytest.mark.slow
def test_varpro_not_worse_than_alternating_descent_on_four_slices() -> None:
    """At an equal budget of 1000 iterations the reduced problem ends lower."""
    problem = synthetic_regression(4, seed=4)
    varpro, altdesc = run_regression(
        problem,
        RegressionMethod.BOTH,
        OptimConfig(max_iters=1000),
        init=TransformSpec.parse("random:1"),
    )
    assert varpro.trace.final_objective < varpro.trace.records[0].objective
    assert varpro.trace.final_objective <= altdesc.trace.final_objective + 1e-16
