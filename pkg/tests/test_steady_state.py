import math

import numpy as np
import pytest
from scipy.integrate import quad, solve_ivp, trapezoid

from app.core.exceptions import InvalidParameterError
from app.schemas.star import EquationOfState
from app.services.steady_state import (
    SteadyStateSolver,
    case3_far_field_constants,
    explicit_profile_six_fifths,
    far_field_deviation,
    solve_gaseous_reference,
    solve_liquid_star,
    taylor_sign_margin,
)


@pytest.mark.parametrize("kappa", [2.0, 10.0, 100.0, 1e4])
def test_six_fifths_matches_closed_form(kappa):
    profile = solve_liquid_star(1.2, kappa, 2048)
    _, radius = explicit_profile_six_fifths(kappa, 0.0)
    exact, _ = explicit_profile_six_fifths(kappa, np.minimum(profile.nodes, radius))
    assert profile.radius == pytest.approx(radius, rel=1e-8)
    assert np.max(np.abs(profile.rho - exact) / exact) < 1e-6


def test_radius_converges_at_second_order_or_better():
    _, radius = explicit_profile_six_fifths(10.0, 0.0)
    errors = [abs(solve_liquid_star(1.2, 10.0, n, tol=1e-15).radius - radius) / radius for n in (16, 32, 64)]
    assert errors[0] > errors[1] > errors[2]
    assert errors[0] / errors[1] > 3.4
    assert errors[1] / errors[2] > 3.4


def test_nearly_uniform_star_has_vanishing_radius():
    kappa = 1.0 + 1e-6
    profile = solve_liquid_star(1.2, kappa, 64)
    _, radius = explicit_profile_six_fifths(kappa, 0.0)
    assert profile.radius < 1e-3
    assert profile.radius == pytest.approx(radius, rel=1e-6)
    assert np.all(np.diff(profile.rho) < 0)


def test_hydrostatic_residual_is_second_order():
    def residual(n):
        profile = solve_liquid_star(1.25, 100.0, n)
        y, rho, h = profile.nodes, profile.rho, profile.radius / n
        pressure = rho ** 1.25
        gravity = profile.mass[1:-1] / y[1:-1] ** 2
        defect = gravity + (pressure[2:] - pressure[:-2]) / (2.0 * h * rho[1:-1])
        return np.max(np.abs(defect)) / np.max(gravity)

    coarse, fine = residual(128), residual(256)
    assert coarse < 1e-3
    assert coarse / fine > 3.5


def test_profile_invariants_hold():
    profile = solve_liquid_star(1.1, 50.0, 256)
    assert profile.rho[0] == 50.0
    assert profile.rho[-1] == 1.0
    assert np.all(np.diff(profile.rho) < 0)
    assert profile.mass[0] == 0.0
    assert np.all(np.diff(profile.mass) >= 0)
    assert profile.n == 256


@pytest.mark.parametrize("gamma, kappa", [(1.1, 50.0), (1.25, 10.0)])
def test_matches_adaptive_ode_oracle(gamma, kappa):
    profile = solve_liquid_star(gamma, kappa, 2048)
    y0 = 1e-6
    sol = solve_ivp(
        SteadyStateSolver.rhs(gamma), (y0, profile.radius), SteadyStateSolver.series_start(gamma, kappa, y0),
        method="DOP853", rtol=1e-13, atol=1e-14, dense_output=True,
    )
    inner = profile.nodes[1:]
    reference = sol.sol(inner)
    np.testing.assert_allclose(profile.rho[1:], reference[0], rtol=1e-8)
    outer = inner >= 0.1 * profile.radius
    np.testing.assert_allclose(profile.mass[1:][outer], reference[1][outer], rtol=1e-8)


def test_mass_is_integral_of_density():
    profile = solve_liquid_star(1.25, 100.0, 1024)
    y = profile.nodes
    integral = 4.0 * math.pi * trapezoid(y ** 2 * profile.rho, y)
    assert profile.total_mass == pytest.approx(integral, rel=1e-4)


def test_isothermal_star_is_supported():
    profile = solve_liquid_star(1.0, 20.0, 256)
    assert profile.rho[-1] == 1.0
    assert np.all(np.diff(profile.rho) < 0)


@pytest.mark.parametrize("gamma, kappa, n", [(1.2, 1.0, 64), (1.2, 0.5, 64), (4.0 / 3.0, 10.0, 64),
                                             (0.9, 10.0, 64), (1.2, 10.0, 8)])
def test_rejects_bad_parameters(gamma, kappa, n):
    with pytest.raises(InvalidParameterError):
        solve_liquid_star(gamma, kappa, n)


def test_taylor_sign_margin_is_boundary_gravity():
    profile = solve_liquid_star(1.2, 10.0, 128)
    assert taylor_sign_margin(profile) == pytest.approx(profile.total_mass / profile.radius ** 2)
    assert taylor_sign_margin(profile) > 0


def test_geometric_grid_keeps_endpoints():
    profile = SteadyStateSolver.solve_liquid_star(1.2, 100.0, 128, geometric_ratio=1.02)
    uniform = solve_liquid_star(1.2, 100.0, 128)
    assert profile.grid.spacing == "geometric"
    assert profile.radius == pytest.approx(uniform.radius, rel=1e-12)
    assert profile.rho[-1] == 1.0


def test_gaseous_reference_far_field():
    reference = solve_gaseous_reference(1.1, 2048, 1e-10)
    assert reference.kappa == 1.0
    assert reference.boundary_density == 1e-10
    assert not reference.compact_support
    assert far_field_deviation(reference) < 0.05


def test_gaseous_reference_compact_support():
    reference = solve_gaseous_reference(1.25, 512, 1e-8)
    assert reference.compact_support
    assert reference.support_radius >= reference.radius


def test_far_field_constants_are_positive():
    v1, v2, r_inf = case3_far_field_constants(1.1)
    assert v1 > 0 and v2 > 0 and r_inf > 0


def test_scaled_profile_reproduces_direct_solve():
    reference = solve_gaseous_reference(1.1, 2048, 1e-8)
    scaled = SteadyStateSolver.scaled_profile(reference, 100.0, 512)
    direct = solve_liquid_star(1.1, 100.0, 512)
    assert scaled.radius == pytest.approx(direct.radius, rel=1e-3)
    np.testing.assert_allclose(scaled.rho, direct.rho, rtol=1e-3)


def test_scaled_profile_matches_closed_form_at_six_fifths():
    reference = solve_gaseous_reference(1.2, 2048, 1e-8)
    scaled = SteadyStateSolver.scaled_profile(reference, 100.0, 512)
    _, radius = explicit_profile_six_fifths(100.0, 0.0)
    exact, _ = explicit_profile_six_fifths(100.0, np.minimum(scaled.nodes, radius))
    assert scaled.kappa == 100.0
    assert scaled.radius == pytest.approx(radius, rel=1e-7)
    assert np.max(np.abs(scaled.rho - exact) / exact) < 1e-6


def test_gaseous_reference_matches_closed_form_at_six_fifths():
    reference = solve_gaseous_reference(1.2, 1024, 1e-6)
    y = reference.nodes
    exact = (1.0 + (2.0 * math.pi / 9.0) * y ** 2) ** -2.5
    assert np.max(np.abs(reference.rho - exact) / exact) < 1e-6
    edge = math.sqrt((1e-6 ** -0.4 - 1.0) * 9.0 / (2.0 * math.pi))
    assert reference.radius == pytest.approx(edge, rel=1e-8)


def test_scaled_profile_at_unit_kappa_is_identity_truncation():
    liquid = solve_liquid_star(1.2, 10.0, 256)
    same = SteadyStateSolver.scaled_profile(liquid, 1.0, 256)
    assert same.kappa == 10.0
    assert same.radius == liquid.radius
    np.testing.assert_allclose(same.rho, liquid.rho, rtol=1e-12)
    np.testing.assert_allclose(same.mass, liquid.mass, rtol=1e-12)


def test_scaled_profile_needs_deep_enough_reference():
    reference = solve_gaseous_reference(1.1, 256, 1e-2)
    with pytest.raises(InvalidParameterError):
        SteadyStateSolver.scaled_profile(reference, 1e4, 64)
    # unit central density maps to a zero-radius star
    with pytest.raises(InvalidParameterError):
        SteadyStateSolver.scaled_profile(reference, 1.0, 64)
    with pytest.raises(InvalidParameterError):
        SteadyStateSolver.scaled_profile(reference, 0.5, 64)


def test_explicit_profile_domain():
    density, radius = explicit_profile_six_fifths(10.0, 0.0)
    assert density == pytest.approx(10.0)
    with pytest.raises(InvalidParameterError):
        explicit_profile_six_fifths(10.0, 2.0 * radius)
    boundary, _ = explicit_profile_six_fifths(10.0, radius)
    assert boundary == pytest.approx(1.0, rel=1e-12)


@pytest.mark.parametrize("gamma", [1.0, 1.1, 1.25])
def test_equation_of_state_derivatives(gamma):
    eos = EquationOfState(gamma=gamma)
    rho, h = 3.0, 1e-6
    de = (eos.internal_energy(rho + h) - eos.internal_energy(rho - h)) / (2 * h)
    dh = (eos.enthalpy(rho + h) - eos.enthalpy(rho - h)) / (2 * h)
    assert de == pytest.approx(eos.pressure(rho) / rho ** 2, rel=1e-7)
    assert dh == pytest.approx(eos.sound_speed_sq(rho) / rho, rel=1e-7)
    weight, _ = quad(lambda r: eos.sound_speed_sq(r) / r, 1.0, rho)
    assert eos.enthalpy(rho) - eos.enthalpy(1.0) == pytest.approx(weight, rel=1e-10)
