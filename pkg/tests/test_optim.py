"""Tests for the manifold helpers, objectives and descent loops."""

from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from structlog.testing import capture_logs

from starm.errors import NotSkewError, ShapeMismatchError
from starm.experiments.angle import angle_tensors, closed_form, rotation
from starm.experiments.data import synthetic_regression
from starm.optim import (
    BacktrackingStep,
    FixedStep,
    LowRankObjective,
    OptimConfig,
    RegressionObjective,
    StopOn,
    StopReason,
    alternating_descent,
    enforce_orthogonality,
    euclidean_gradient,
    optimize,
    parse_step,
    reduced_objective,
    reorthonormalize,
    retract,
    riemannian_gradient,
    skew,
    tangent_generator,
)
from starm.tensor import orthogonality_residual
from starm.transforms import make_random_orthogonal


def _make_regression(seed: int = 0) -> RegressionObjective:
    rng = np.random.default_rng(seed)
    return RegressionObjective(
        rng.standard_normal((10, 3, 4)), rng.standard_normal((10, 2, 4))
    )


def test_skew_part() -> None:
    """skew(A) is antisymmetric and fixes skew matrices."""
    a = np.arange(9.0).reshape(3, 3)
    s = skew(a)
    np.testing.assert_allclose(s, -s.T)
    np.testing.assert_allclose(skew(s), s)


def test_riemannian_gradient_is_tangent(orthogonal: np.ndarray) -> None:
    """``M^T grad`` is skew and its norm is that of the generator."""
    g = np.random.default_rng(2).standard_normal((5, 5))
    rg = riemannian_gradient(orthogonal, g)
    np.testing.assert_allclose(orthogonal.T @ rg, -(orthogonal.T @ rg).T, atol=1e-12)
    assert np.linalg.norm(rg) == pytest.approx(
        np.linalg.norm(tangent_generator(orthogonal, g)), rel=1e-12
    )


def test_tangent_generator_shape_check(orthogonal: np.ndarray) -> None:
    """Gradient and point must have the same shape."""
    with pytest.raises(ShapeMismatchError):
        tangent_generator(orthogonal, np.zeros((4, 4)))


def test_retraction_stays_orthogonal(orthogonal: np.ndarray) -> None:
    """``M expm(Omega)`` is orthogonal and ``Omega = 0`` is the identity move."""
    raw = np.random.default_rng(3).standard_normal((5, 5))
    moved = retract(orthogonal, 3.0 * (raw - raw.T))
    assert orthogonality_residual(moved) < 1e-12
    np.testing.assert_allclose(retract(orthogonal, np.zeros((5, 5))), orthogonal)


def test_retraction_rejects_non_skew(orthogonal: np.ndarray) -> None:
    """A symmetric generator is an error; tiny asymmetry is projected away."""
    with pytest.raises(NotSkewError):
        retract(orthogonal, np.eye(5))
    raw = np.random.default_rng(4).standard_normal((5, 5))
    omega = raw - raw.T
    nudged = omega + 1e-9 * np.eye(5)
    np.testing.assert_allclose(
        retract(orthogonal, nudged), retract(orthogonal, omega), atol=1e-12
    )


def test_reorthonormalize_returns_nearest_orthogonal(orthogonal: np.ndarray) -> None:
    """The polar factor of a perturbed orthogonal matrix is close to it."""
    drifted = orthogonal + 1e-6 * np.random.default_rng(5).standard_normal((5, 5))
    fixed = reorthonormalize(drifted)
    assert orthogonality_residual(fixed) < 1e-12
    assert np.linalg.norm(fixed - orthogonal) < 1e-5


def test_drifted_iterate_is_repaired_with_a_warning(orthogonal: np.ndarray) -> None:
    """Drift above the tolerance is projected away and logged as a warning."""
    drifted = orthogonal + 1e-7 * np.random.default_rng(6).standard_normal((5, 5))
    with capture_logs() as logs:
        fixed = enforce_orthogonality(drifted, 1e-10)
        untouched = enforce_orthogonality(orthogonal, 1e-10)
    assert orthogonality_residual(fixed) < 1e-12
    np.testing.assert_array_equal(untouched, orthogonal)
    events = [e for e in logs if e["event"] == "iterate_reorthonormalized"]
    assert len(events) == 1
    assert events[0]["log_level"] == "warning"
    assert events[0]["drift"] > 1e-10


@pytest.mark.parametrize(
    ("text", "expected"),
    [
        ("fixed:0.1", FixedStep(alpha=0.1)),
        ("backtrack", BacktrackingStep()),
        ("backtrack:2", BacktrackingStep(alpha0=2.0)),
    ],
)
def test_parse_step(text: str, expected: FixedStep | BacktrackingStep) -> None:
    """Step rules parse from their command-line form."""
    assert parse_step(text) == expected


@pytest.mark.parametrize("text", ["fixed", "armijo", "fixed:-1"])
def test_parse_step_rejects(text: str) -> None:
    """Unknown or invalid rules raise ValueError."""
    with pytest.raises(ValueError):
        parse_step(text)


def test_regression_objective_shape_check() -> None:
    """A and B must agree on n1 and n3."""
    with pytest.raises(ShapeMismatchError):
        RegressionObjective(np.zeros((4, 2, 3)), np.zeros((5, 1, 3)))
    with pytest.raises(ValueError):
        RegressionObjective(np.zeros((4, 2, 3)), np.zeros((4, 1, 3)), reg=-1.0)


def test_reduced_objective_returns_inner_solution() -> None:
    """``X(M)`` minimizes ``Phi(M, X)`` for the given transform."""
    obj = _make_regression()
    m = np.array(make_random_orthogonal(4, 1).matrix)
    value, x = reduced_objective(obj, m)
    rng = np.random.default_rng(9)
    for _ in range(5):
        other = x + 1e-3 * rng.standard_normal(x.shape)
        assert obj.full_value(m, other)[0] >= value


def test_euclidean_gradient_accepts_inner_solution() -> None:
    """Passing ``X(M)`` or an evaluation gives the same gradient."""
    obj = _make_regression()
    m = np.array(make_random_orthogonal(4, 2).matrix)
    evaluation = obj.evaluate(m)
    np.testing.assert_allclose(
        euclidean_gradient(obj, m, evaluation.x), euclidean_gradient(obj, m)
    )
    np.testing.assert_allclose(
        euclidean_gradient(obj, m, evaluation), euclidean_gradient(obj, m)
    )


@pytest.mark.parametrize("reg", [0.0, 0.5])
def test_reduced_gradient_is_the_partial_in_m_at_the_inner_optimum(reg: float) -> None:
    """With ``X = X(M)`` the reduced gradient equals the full partial in ``M``."""
    rng = np.random.default_rng(12)
    obj = RegressionObjective(
        rng.standard_normal((10, 3, 4)), rng.standard_normal((10, 2, 4)), reg=reg
    )
    m = np.array(make_random_orthogonal(4, 3).matrix)
    evaluation = obj.evaluate(m)
    _, grad_x, grad_m = obj.partial_gradients(m, evaluation.x)
    assert np.linalg.norm(grad_x) < 1e-9
    np.testing.assert_allclose(obj.gradient(m, evaluation), grad_m, atol=1e-9)


@pytest.mark.parametrize("objective", ["regression", "lowrank"])
def test_objective_invariant_under_signed_permutations(objective: str) -> None:
    """``Phi(P D M) = Phi(M)`` for every permutation and sign pattern."""
    rng = np.random.default_rng(7)
    obj: RegressionObjective | LowRankObjective
    if objective == "regression":
        obj = _make_regression(7)
    else:
        obj = LowRankObjective(rng.standard_normal((5, 4, 4)), 2)
    m = np.array(make_random_orthogonal(4, 7).matrix)
    base = obj.evaluate(m).value
    for perm in itertools.permutations(range(4)):
        signs = rng.choice([-1.0, 1.0], size=4)
        assert obj.evaluate(signs[:, None] * m[list(perm)]).value == pytest.approx(
            base, rel=1e-10
        )


def test_zero_iterations_records_start() -> None:
    """max_iters = 0 evaluates the start and returns it unchanged."""
    obj = _make_regression()
    m0 = np.array(make_random_orthogonal(4, 3).matrix)
    trace = optimize(obj, m0, OptimConfig(max_iters=0))
    assert len(trace.records) == 1
    assert trace.stop_reason is StopReason.MAX_ITERS
    np.testing.assert_array_equal(trace.final_m, m0)
    assert trace.final_objective == pytest.approx(obj.evaluate(m0).value)


def test_backtracking_is_monotone() -> None:
    """Armijo steps never increase the objective and iterates stay orthogonal."""
    obj = LowRankObjective(np.random.default_rng(8).standard_normal((6, 5, 4)), 2)
    seen: list[float] = []

    def check(_record: object, m: np.ndarray) -> None:
        seen.append(orthogonality_residual(m))

    trace = optimize(
        obj, np.eye(4), OptimConfig(max_iters=40), callback=check
    )
    assert np.all(np.diff(trace.objectives) <= 0.0)
    assert max(seen) <= 1e-10
    assert len(seen) == len(trace.records)
    assert [r.iter for r in trace.records] == list(range(len(trace.records)))


def test_line_search_failure_is_reported() -> None:
    """An unreachable sufficient-decrease test ends the run cleanly."""
    obj = LowRankObjective(np.random.default_rng(9).standard_normal((4, 3, 5)), 1)
    step = BacktrackingStep(alpha0=1e8, shrink=0.5, c=0.5, max_backtracks=1)
    trace = optimize(obj, np.eye(5), OptimConfig(max_iters=10, step=step))
    assert trace.line_search_failed
    assert len(trace.records) == 1
    np.testing.assert_array_equal(trace.final_m, np.eye(5))


def test_fixed_step_is_always_taken() -> None:
    """Every record after the first reports the fixed step size."""
    obj = _make_regression()
    cfg = OptimConfig(max_iters=5, step=FixedStep(alpha=0.01))
    trace = optimize(obj, np.eye(4), cfg)
    assert [r.step for r in trace.records[1:]] == [0.01] * 5


def test_stop_on_euclidean_norm() -> None:
    """The Euclidean test is stricter than the Riemannian one."""
    obj = _make_regression(11)
    start = optimize(obj, np.eye(4), OptimConfig(max_iters=0)).records[0]
    assert start.riem_grad_norm < start.eucl_grad_norm
    tol = (start.riem_grad_norm + start.eucl_grad_norm) / 2.0
    riem = optimize(obj, np.eye(4), OptimConfig(max_iters=3, grad_tol=tol))
    eucl = optimize(
        obj,
        np.eye(4),
        OptimConfig(max_iters=3, grad_tol=tol, stop_on=StopOn.EUCLIDEAN),
    )
    assert riem.converged and len(riem.records) == 1
    assert len(eucl.records) > 1


@pytest.mark.slow
@pytest.mark.parametrize("n3", [2, 3])
def test_varpro_fits_noiseless_regression(n3: int) -> None:
    """Variable projection drives the noiseless objective to zero."""
    problem = synthetic_regression(n3, seed=n3)
    obj = RegressionObjective(problem.a, problem.b)
    m0 = make_random_orthogonal(n3, 0)
    trace = optimize(obj, m0, OptimConfig(max_iters=2000, grad_tol=1e-12))
    assert trace.final_objective <= 1e-8


@pytest.mark.slow
def test_varpro_beats_alternating_descent() -> None:
    """From the same start and budget the reduced problem gets further."""
    problem = synthetic_regression(3, seed=1)
    obj = RegressionObjective(problem.a, problem.b)
    m0 = make_random_orthogonal(3, 5)
    cfg = OptimConfig(max_iters=100)
    varpro = optimize(obj, m0, cfg)
    altdesc = alternating_descent(obj, m0, None, cfg)
    assert varpro.final_objective < altdesc.final_objective
    assert np.all(np.diff(altdesc.objectives) <= 1e-12)
    assert orthogonality_residual(altdesc.final_m) <= 1e-10


def test_alternating_descent_from_given_coefficients() -> None:
    """Starting at the optimal ``X`` with the true transform is a fixed point."""
    problem = synthetic_regression(2, seed=4)
    obj = RegressionObjective(problem.a, problem.b)
    x0 = obj.evaluate(problem.m_true).x
    trace = alternating_descent(
        obj, problem.m_true, x0, OptimConfig(max_iters=5, grad_tol=1e-8)
    )
    assert trace.converged
    assert trace.final_objective <= 1e-20


def test_starting_at_a_minimizer_stops_immediately() -> None:
    """Rotation by pi/4 is already a minimizer."""
    a, b = angle_tensors()
    trace = optimize(
        RegressionObjective(a, b),
        rotation(math.pi / 4),
        OptimConfig(max_iters=100, grad_tol=1e-8),
    )
    assert trace.converged
    assert trace.records[-1].iter <= 1
    assert trace.final_objective == pytest.approx(closed_form(math.pi / 4), abs=1e-12)


def test_low_rank_gradient_vanishes_where_descent_converges() -> None:
    """The recomputed Riemannian gradient is zero at the converged iterate."""
    obj = LowRankObjective(np.random.default_rng(13).standard_normal((4, 3, 2)), 1)
    trace = optimize(
        obj,
        make_random_orthogonal(2, 0),
        OptimConfig(max_iters=3000, grad_tol=1e-8),
    )
    assert trace.converged
    assert trace.records[0].riem_grad_norm > 1e-6
    assert trace.final_m is not None
    grad = riemannian_gradient(trace.final_m, euclidean_gradient(obj, trace.final_m))
    assert np.linalg.norm(grad) <= 1e-8
    assert np.all(np.diff(trace.objectives) <= 0.0)


def test_alternating_step_matches_varpro_step_at_inner_optimum() -> None:
    """From ``X = X(M)`` one alternating step moves ``M`` like one reduced step."""
    problem = synthetic_regression(3, seed=2)
    obj = RegressionObjective(problem.a, problem.b)
    m0 = np.array(make_random_orthogonal(3, 4).matrix)
    x0 = obj.evaluate(m0).x
    cfg = OptimConfig(max_iters=1, step=FixedStep(alpha=0.05))
    varpro = optimize(obj, m0, cfg)
    altdesc = alternating_descent(obj, m0, x0, cfg)
    assert altdesc.records[0].objective == pytest.approx(varpro.records[0].objective)
    np.testing.assert_allclose(altdesc.final_m, varpro.final_m, atol=1e-10)
