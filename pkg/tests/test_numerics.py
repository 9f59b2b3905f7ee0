import math

import numpy as np
import pytest

from app.core.exceptions import (
    BracketError,
    ConvergenceError,
    InsufficientDataError,
    InvalidParameterError,
    ZeroPivotError,
)
from app.schemas.grid import RadialGrid, TridiagonalSymmetric
from app.services.numerics import Numerics, bisect_event, fit_loglog, ldl_inertia


def test_cumulative_trapezoid_is_exact_for_linear_samples():
    grid = RadialGrid.geometric(2.0, 50, 1.05)
    out = Numerics.cumulative_trapezoid(2.0 * grid.nodes, grid)
    np.testing.assert_allclose(out, grid.nodes ** 2, rtol=1e-12, atol=1e-14)


def test_cumulative_trapezoid_rejects_length_mismatch():
    grid = RadialGrid.uniform(1.0, 10)
    with pytest.raises(InvalidParameterError):
        Numerics.cumulative_trapezoid(np.ones(5), grid)


def test_rk4_step_matches_taylor_polynomial_of_exponential():
    h = 0.1
    out = Numerics.rk4_step(np.array([1.0]), lambda y, s: s, 0.0, h)
    assert out[0] == pytest.approx(1 + h + h ** 2 / 2 + h ** 3 / 6 + h ** 4 / 24, rel=1e-14)


def test_rk4_step_rejects_bad_step_and_nan():
    with pytest.raises(InvalidParameterError):
        Numerics.rk4_step(np.array([1.0]), lambda y, s: s, 0.0, 0.0)
    with pytest.raises(ConvergenceError):
        Numerics.rk4_step(np.array([1.0]), lambda y, s: np.array([np.nan]), 0.0, 0.1)


def test_bisect_event_finds_sqrt2():
    root = bisect_event(lambda x: x * x - 2.0, 0.0, 2.0, 1e-14)
    assert root == pytest.approx(math.sqrt(2.0), abs=1e-13)


def test_bisect_event_returns_exact_endpoint():
    assert bisect_event(lambda x: x - 1.0, 1.0, 3.0, 1e-12) == 1.0
    assert bisect_event(lambda x: x - 3.0, 1.0, 3.0, 1e-12) == 3.0


def test_bisect_event_requires_sign_change():
    with pytest.raises(BracketError):
        bisect_event(lambda x: x * x + 1.0, -1.0, 1.0, 1e-12)
    with pytest.raises(InvalidParameterError):
        bisect_event(lambda x: x, -1.0, 1.0, 0.0)


def test_ldl_inertia_counts_negative_eigenvalues():
    rng = np.random.default_rng(7)
    for _ in range(5):
        matrix = TridiagonalSymmetric(diagonal=rng.standard_normal(40), off_diagonal=rng.standard_normal(39))
        _, negatives = ldl_inertia(matrix)
        assert negatives == int(np.sum(np.linalg.eigvalsh(matrix.dense()) < 0))


def test_ldl_inertia_reconstructs_matrix():
    matrix = TridiagonalSymmetric(diagonal=[4.0, 5.0, 6.0, 7.0], off_diagonal=[1.0, -2.0, 0.5])
    factor, negatives = ldl_inertia(matrix)
    lower = np.eye(4) + np.diag(factor.multipliers, -1)
    np.testing.assert_allclose(lower @ np.diag(factor.pivots) @ lower.T, matrix.dense(), atol=1e-12)
    assert negatives == 0


def test_ldl_inertia_reports_zero_pivot():
    with pytest.raises(ZeroPivotError) as info:
        ldl_inertia(TridiagonalSymmetric(diagonal=[0.0, 1.0], off_diagonal=[1.0]))
    assert info.value.index == 0


def test_fit_loglog_recovers_power_law():
    x = np.geomspace(1.0, 1e4, 9)
    slope, intercept, residual = fit_loglog(zip(x, 3.0 * x ** 1.5))
    assert slope == pytest.approx(1.5, abs=1e-12)
    assert intercept == pytest.approx(math.log(3.0), abs=1e-10)
    assert residual < 1e-10


def test_fit_loglog_sees_logarithmic_correction():
    x = np.geomspace(1e4, 1e6, 9)
    slope, _, residual = fit_loglog(zip(x, x / np.log(x)))
    assert 0.9 < slope < 0.93
    assert residual < 1e-2


def test_fit_loglog_needs_positive_data():
    with pytest.raises(InsufficientDataError):
        fit_loglog([(1.0, 1.0)])
    with pytest.raises(InvalidParameterError):
        fit_loglog([(1.0, 1.0), (2.0, -1.0)])


def test_parabolic_peak_is_exact_for_parabola():
    x = np.linspace(0.0, 1.0, 11)
    values = 2.0 - (x - 0.33) ** 2
    peak, where = Numerics.parabolic_peak(x, values, int(np.argmax(values)))
    assert where == pytest.approx(0.33, abs=1e-12)
    assert peak == pytest.approx(2.0, abs=1e-12)


def test_geometric_ratio_hits_first_spacing():
    ratio = Numerics.geometric_ratio(1.0, 100, 1e-4)
    grid = RadialGrid.geometric(1.0, 100, ratio)
    assert ratio > 1.0
    assert grid.widths[0] == pytest.approx(1e-4, rel=1e-8)
    assert grid.radius == 1.0


def test_geometric_ratio_falls_back_to_uniform():
    assert Numerics.geometric_ratio(1.0, 10, 0.5) == 1.0
    with pytest.raises(InvalidParameterError):
        Numerics.geometric_ratio(1.0, 10, 2.0)


def test_hermite_resample_is_fourth_order():
    dense = np.linspace(0.0, 1.0, 301)
    errors = []
    for n in (16, 32):
        x = np.linspace(0.0, 1.0, n + 1)
        out = Numerics.hermite_resample(x, np.exp(-5.0 * x), -5.0 * np.exp(-5.0 * x), dense)
        errors.append(np.max(np.abs(out - np.exp(-5.0 * dense))))
    assert errors[1] < 5e-6
    assert errors[0] / errors[1] > 12.0
    assert np.isnan(Numerics.hermite_resample(x, x, np.ones_like(x), np.array([1.5])))[0]
