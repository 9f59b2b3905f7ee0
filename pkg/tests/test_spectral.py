import math

import numpy as np
import pytest
from scipy.linalg import eigh

from app.core.exceptions import InvalidParameterError
from app.schemas.grid import RadialGrid
from app.services import spectral
from app.services.scaling import compute_C1
from app.services.spectral import (
    SpectralSolver,
    clamped_center_shift,
    exponent_window,
    interior_sign_changes,
    robin_defect,
    six_fifths_closed_forms,
)
from app.services.steady_state import solve_liquid_star


def _dense_spectrum(pencil):
    return eigh(pencil.stiffness.dense(), pencil.mass.dense(), eigvals_only=True)


def test_lowest_eigenvalue_matches_dense_solver(small_pencil):
    mode = SpectralSolver.lowest_eigenpair(small_pencil, count=3)
    reference = _dense_spectrum(small_pencil)
    scale = max(1.0, abs(reference[0]))
    assert mode.mu_star == pytest.approx(reference[0], abs=1e-8 * scale)
    assert mode.mu_lo <= reference[0] + 1e-8 * scale
    assert mode.mu_hi >= reference[0] - 1e-8 * scale
    np.testing.assert_allclose(mode.higher_eigenvalues, reference[1:3], rtol=1e-7)


def test_eigenfunction_is_normalized_and_oriented(small_pencil):
    mode = SpectralSolver.lowest_eigenpair(small_pencil)
    assert small_pencil.mass.quadratic_form(mode.chi) == pytest.approx(1.0, rel=1e-10)
    assert mode.chi[-1] >= 0
    assert mode.residual <= 1e-8 * max(1.0, abs(mode.mu_star))
    assert mode.nodeless


def test_variational_bound(small_pencil):
    mode = SpectralSolver.lowest_eigenpair(small_pencil)
    rng = np.random.default_rng(11)
    slack = 1e-12 * max(1.0, abs(mode.mu_star))
    trials = [np.ones(small_pencil.size)] + [rng.standard_normal(small_pencil.size) for _ in range(100)]
    for v in trials:
        assert mode.mu_star <= SpectralSolver.rayleigh_quotient(small_pencil, v) + slack


def test_rayleigh_quotient_rejects_bad_input(small_pencil):
    with pytest.raises(InvalidParameterError):
        SpectralSolver.rayleigh_quotient(small_pencil, np.ones(3))
    with pytest.raises(InvalidParameterError):
        SpectralSolver.rayleigh_quotient(small_pencil, np.zeros(small_pencil.size))


def test_count_below_agrees_with_dense(small_pencil):
    reference = _dense_spectrum(small_pencil)
    for sigma in (reference[0] - 1.0, 0.5 * (reference[2] + reference[3])):
        assert SpectralSolver.count_below(small_pencil, sigma) == int(np.sum(reference < sigma))


def test_constant_test_function_matches_closed_form():
    kappa = 100.0
    pencil = SpectralSolver.assemble(solve_liquid_star(1.2, kappa, 2048))
    ones = np.ones(pencil.size)
    closed = six_fifths_closed_forms(kappa)
    scale = 3.0 * 1.2 * closed["radius"] ** 3
    assert pencil.stiffness.quadratic_form(ones) == pytest.approx(closed["form_L11"], abs=1e-5 * scale)
    assert pencil.mass.quadratic_form(ones) == pytest.approx(closed["weight_11"], rel=1e-5)


def test_six_fifths_form_limits():
    closed = six_fifths_closed_forms(1e4)
    assert closed["form_L11"] < closed["form_bound"] < 0
    assert closed["form_L11"] == pytest.approx(closed["form_limit"], rel=0.15)


def test_stability_transition_in_kappa():
    low = SpectralSolver.growth_rate_of(solve_liquid_star(1.2, 2.0, 512))
    high = SpectralSolver.growth_rate_of(solve_liquid_star(1.2, 1e4, 512))
    assert low.mu_star > 0 and low.growth_rate is None
    assert high.mu_star < 0
    assert high.growth_rate == pytest.approx(math.sqrt(-high.mu_star))


def test_exponent_window():
    lo, hi = exponent_window(1.1)
    assert lo == pytest.approx(8.0 / 9.0, abs=1e-12)
    assert hi == pytest.approx(math.sqrt(6.0 - 4.0 / 0.9), abs=1e-12)
    assert exponent_window(1.1, 0.0, 0.99) is None
    with pytest.raises(InvalidParameterError):
        exponent_window(1.2)


def test_power_law_test_function_needs_resolved_breakpoint():
    profile = solve_liquid_star(1.1, 100.0, 64)
    with pytest.raises(InvalidParameterError):
        spectral.SpectralSolver.test_function_444(profile, 1e-9, 1.0)
    with pytest.raises(InvalidParameterError):
        spectral.SpectralSolver.test_function_444(profile, 4.0, -1.0)
    assert np.isfinite(spectral.SpectralSolver.test_function_444(profile, 0.5, 1.0))


def test_interior_sign_changes():
    assert interior_sign_changes(np.array([1.0, -1.0, 1.0])) == 2
    assert interior_sign_changes(np.array([1.0, 1e-14, -1e-14, 2.0])) == 0


def test_robin_defect_vanishes_for_exact_linear_mode():
    grid = RadialGrid.uniform(1.0, 20)
    chi = grid.nodes - 4.0 / 3.0
    assert robin_defect(chi, grid) < 1e-12


def test_clamping_the_center_barely_moves_the_eigenvalue():
    pencil = SpectralSolver.assemble(solve_liquid_star(1.2, 100.0, 256))
    assert clamped_center_shift(pencil) < 1e-3


def test_c1_argmax_closed_form_is_consistent():
    kappa = 1e4
    _, where = compute_C1(solve_liquid_star(1.2, kappa, 2048))
    assert where == pytest.approx(six_fifths_closed_forms(kappa)["c1_argmax"], rel=0.02)
