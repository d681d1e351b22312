"""Tests for the two-by-two rotation example."""

from __future__ import annotations

import math

import pytest

from starm.experiments.angle import (
    angle_of,
    closed_form,
    closed_form_derivative,
    contraction_ratio,
    landscape,
    nearest_minimizer,
    rotation,
    trajectory,
)


@pytest.mark.parametrize(
    ("theta", "expected"),
    [(0.0, 1.0), (math.pi / 8, 5.0 / 7.0), (math.pi / 4, 1.0 / 3.0)],
)
def test_closed_form_values(theta: float, expected: float) -> None:
    """Known values at the maximum, the midpoint and the minimum."""
    assert closed_form(theta) == pytest.approx(expected, rel=1e-14)


def test_landscape_matches_closed_form() -> None:
    """The regression solver reproduces the closed form on the grid."""
    rows = landscape(40)
    assert len(rows) == 40
    assert rows[0][0] == 0.0
    for theta, value, exact in rows:
        assert 0.0 <= theta < math.pi
        assert value == pytest.approx(exact, abs=1e-12)


@pytest.mark.parametrize("theta", [0.2, 0.7, 1.3, 2.9])
def test_derivative_matches_differences(theta: float) -> None:
    """The closed-form derivative agrees with central differences."""
    h = 1e-6
    fd = (closed_form(theta + h) - closed_form(theta - h)) / (2 * h)
    assert closed_form_derivative(theta) == pytest.approx(fd, abs=1e-8)


def test_rotation_angle_round_trip() -> None:
    """angle_of inverts rotation on (-pi, pi]."""
    for theta in (-3.0, -0.5, 0.0, 1.0, 3.1):
        assert angle_of(rotation(theta)) == pytest.approx(theta, abs=1e-14)


@pytest.mark.parametrize(
    ("theta", "target"),
    [(0.5, math.pi / 4), (2.0, 3 * math.pi / 4), (-0.3, -math.pi / 4)],
)
def test_nearest_minimizer(theta: float, target: float) -> None:
    """Minimizers sit at odd multiples of pi / 4."""
    assert nearest_minimizer(theta) == pytest.approx(target)


@pytest.mark.parametrize(
    ("theta0", "target"),
    [
        (math.pi / 8, math.pi / 4),
        (3 * math.pi / 8, math.pi / 4),
        (5 * math.pi / 8, 3 * math.pi / 4),
    ],
)
def test_fixed_step_converges_to_minimizer(theta0: float, target: float) -> None:
    """Each start reaches the minimizer in its basin."""
    points = trajectory(theta0, alpha=0.1, iters=200)
    assert points[0].theta == pytest.approx(theta0, abs=1e-14)
    assert points[-1].theta == pytest.approx(target, abs=1e-8)
    objectives = [p.objective for p in points]
    assert all(b <= a + 1e-15 for a, b in zip(objectives, objectives[1:], strict=False))
    assert points[-1].objective == pytest.approx(1.0 / 3.0, abs=1e-12)


def test_linear_contraction_rate() -> None:
    """Near the minimizer the derivative shrinks by 1 - alpha * 32 / 9 per step."""
    points = trajectory(math.pi / 8, alpha=0.1, iters=30)
    assert len(points) == 31
    expected = 1.0 - 0.1 * 32.0 / 9.0
    assert contraction_ratio(points, tail=10) == pytest.approx(expected, abs=1e-3)


def test_contraction_ratio_without_progress() -> None:
    """A single point gives no ratio."""
    points = trajectory(math.pi / 8, alpha=0.1, iters=0)
    assert math.isnan(contraction_ratio(points))
