import math

import numpy as np
import pytest
from scipy.integrate import trapezoid

from app.core.exceptions import CellInversionError, CFLViolationError, InvalidParameterError
from app.schemas.dynamics import Diagnostics, LinearState
from app.schemas.grid import RadialGrid
from app.schemas.star import StarProfile
from app.services import dynamics
from app.services.dynamics import (
    LagrangianDynamics,
    LagrangianScheme,
    LinearDynamics,
    LinearizedOperator,
    balanced_density,
    linear_energy,
    mass_averaged_density,
    measure_growth_rate,
    sound_crossing_time,
)
from app.services.spectral import SpectralSolver, robin_defect
from app.services.steady_state import solve_liquid_star


def _gravity_scale(profile):
    y = profile.nodes[1:]
    return float(np.max(profile.mass[1:] / y ** 2))


# ============================================================================
# Equilibrium
# ============================================================================

def test_equilibrium_has_zero_perturbation_norm():
    profile = solve_liquid_star(1.2, 100.0, 100)
    state = dynamics.init_equilibrium(profile)
    assert dynamics.perturbation_norm(state, profile) < 1e-12 * profile.total_mass
    assert state.cell_mass.sum() == pytest.approx(profile.total_mass, rel=1e-12)


def test_mass_averaged_equilibrium_residual_shrinks_with_grid():
    residuals = []
    for n in (100, 200):
        profile = solve_liquid_star(1.2, 100.0, n)
        acc = dynamics.acceleration(dynamics.init_equilibrium(profile), profile)
        residuals.append(np.max(np.abs(acc)) / _gravity_scale(profile))
    assert residuals[1] < residuals[0] / 1.5
    assert residuals[1] < 5e-2


def test_balanced_equilibrium_is_exact_fixed_point():
    profile = solve_liquid_star(1.2, 100.0, 200)
    state = dynamics.init_equilibrium(profile, balanced=True)
    acc = dynamics.acceleration(state, profile)
    assert np.max(np.abs(acc)) < 1e-9 * _gravity_scale(profile)
    np.testing.assert_allclose(state.cell_rho0, mass_averaged_density(profile), rtol=1e-2)
    assert np.all(balanced_density(profile) > 0)


def test_mass_averaged_density_of_uniform_star():
    grid = RadialGrid.uniform(1.0, 50)
    y = grid.nodes
    profile = StarProfile(gamma=1.2, kappa=1.0, grid=grid, rho=np.ones_like(y),
                          mass=4.0 * math.pi / 3.0 * y ** 3)
    np.testing.assert_allclose(mass_averaged_density(profile), 1.0, rtol=1e-12)


def test_mass_averaged_density_lies_between_node_densities():
    profile = solve_liquid_star(1.2, 100.0, 200)
    average = mass_averaged_density(profile)
    assert average[0] <= profile.kappa
    assert np.all(average <= profile.rho[:-1])
    assert np.all(average >= profile.rho[1:])


def test_perturbation_norm_of_homologous_velocity():
    grid = RadialGrid.uniform(1.0, 200)
    y = grid.nodes
    profile = StarProfile(gamma=1.2, kappa=1.0, grid=grid, rho=np.ones_like(y),
                          mass=4.0 * math.pi / 3.0 * y ** 3)
    state = dynamics.init_equilibrium(profile).model_copy(update={"vel": y.copy()})
    assert dynamics.perturbation_norm(state, profile) == pytest.approx(math.sqrt(4.0 * math.pi / 5.0), rel=1e-3)


def test_total_energy_matches_quadrature():
    profile = solve_liquid_star(1.2, 100.0, 200)
    fine = solve_liquid_star(1.2, 100.0, 2000)
    y, rho, m = fine.nodes, fine.rho, fine.mass
    eos = fine.eos
    gravity = np.zeros_like(y)
    gravity[1:] = m[1:] / y[1:]
    internal = trapezoid(4.0 * math.pi * y ** 2 * rho * eos.internal_energy(rho), y)
    potential = trapezoid(4.0 * math.pi * y ** 2 * rho * gravity, y)
    discrete = dynamics.total_energy(dynamics.init_equilibrium(profile), profile)
    assert discrete == pytest.approx(internal - potential, abs=1e-3 * (abs(internal) + abs(potential)))


# ============================================================================
# Seeding and stepping
# ============================================================================

def test_seed_mode_validation(stable_star, unstable_star):
    profile, mode = stable_star
    with pytest.raises(InvalidParameterError):
        dynamics.seed_mode(profile, mode, 1e-3)
    profile, mode = unstable_star
    with pytest.raises(InvalidParameterError):
        dynamics.seed_mode(profile, mode, float("nan"))
    with pytest.raises(InvalidParameterError):
        dynamics.seed_mode(solve_liquid_star(1.2, 1e3, 64), mode, 1e-3)
    with pytest.raises(InvalidParameterError):
        dynamics.seed_mode(profile, mode, -1e8)


def test_seeded_norm_is_linear_in_delta(unstable_star):
    profile, mode = unstable_star
    small = dynamics.perturbation_norm(dynamics.seed_mode(profile, mode, 1e-6, balanced=True), profile)
    large = dynamics.perturbation_norm(dynamics.seed_mode(profile, mode, 2e-6, balanced=True), profile)
    assert small == pytest.approx(1e-6, rel=1e-2)
    assert large / small == pytest.approx(2.0, rel=1e-4)


def test_step_with_zero_dt_is_identity(unstable_star):
    profile, mode = unstable_star
    state = dynamics.seed_mode(profile, mode, 1e-4, balanced=True)
    assert dynamics.step(state, profile, 0.0) is state
    with pytest.raises(InvalidParameterError):
        dynamics.step(state, profile, -1e-3)


def test_step_enforces_cfl_limit(unstable_star):
    profile, _ = unstable_star
    state = dynamics.init_equilibrium(profile, balanced=True)
    dt = LagrangianDynamics.choose_dt(state, profile)
    stepped = dynamics.step(state, profile, dt)
    assert stepped.time == pytest.approx(dt)
    with pytest.raises(CFLViolationError):
        dynamics.step(state, profile, 10.0 * dt)


def test_crossing_cells_raise_inversion(unstable_star):
    profile, _ = unstable_star
    state = dynamics.init_equilibrium(profile, balanced=True)
    dt = 0.1 * LagrangianDynamics.choose_dt(state, profile)
    y = profile.nodes
    vel = state.vel.copy()
    vel[5] = -2.0 * (y[5] - y[4]) / dt
    with pytest.raises(CellInversionError) as info:
        dynamics.step(state.model_copy(update={"vel": vel}), profile, dt)
    assert info.value.time == pytest.approx(dt)


def test_evolve_reports_disruption(unstable_star):
    profile, _ = unstable_star
    state = dynamics.init_equilibrium(profile, balanced=True)
    dt = 0.1 * LagrangianDynamics.choose_dt(state, profile)
    y = profile.nodes
    vel = state.vel.copy()
    vel[5] = -2.0 * (y[5] - y[4]) / dt
    diagnostics = dynamics.evolve(state.model_copy(update={"vel": vel}), profile, 10 * dt, dt, dt=dt)
    assert diagnostics.status == "disrupted"
    assert diagnostics.steps == 0


def test_artificial_viscosity_acts_only_in_compression(unstable_star):
    profile, _ = unstable_star
    scheme = LagrangianScheme(profile, mass_averaged_density(profile), artificial_viscosity=True)
    f = scheme.cell_rho0
    expanding = scheme.viscosity(f, profile.nodes)
    compressing = scheme.viscosity(f, -profile.nodes)
    assert np.all(expanding == 0.0)
    assert np.all(compressing > 0.0)


def test_batched_acceleration_matches_single(unstable_star):
    profile, mode = unstable_star
    scheme = LagrangianScheme(profile, balanced_density(profile))
    states = [dynamics.seed_mode(profile, mode, d, balanced=True) for d in (0.0, 1e-3, -1e-3)]
    batch = scheme.acceleration(np.stack([s.eta for s in states]), np.stack([s.vel for s in states]))
    for row, state in zip(batch, states):
        np.testing.assert_allclose(row, scheme.acceleration(state.eta, state.vel), rtol=1e-13, atol=1e-13)


def test_linearized_acceleration_is_directional_derivative(unstable_star):
    profile, mode = unstable_star
    scheme = LagrangianScheme(profile, balanced_density(profile), artificial_viscosity=False)
    y = profile.nodes
    direction = y * mode.chi
    eps = 1e-7
    central = (scheme.acceleration(y + eps * direction) - scheme.acceleration(y - eps * direction)) / (2.0 * eps)
    tangent = scheme.linearized_acceleration(y, direction)
    assert np.max(np.abs(tangent - central)) < 1e-5 * np.max(np.abs(tangent))
    density = scheme.linearized_density(y, direction)
    np.testing.assert_allclose(density, -scheme.cell_rho0 * 3.0 * np.diff(y ** 3 * mode.chi) / np.diff(y ** 3),
                               rtol=1e-10)


def test_seeded_acceleration_matches_linearized_operator(unstable_star):
    profile, mode = unstable_star
    state = dynamics.seed_mode(profile, mode, 1e-6, balanced=True)
    scheme = LagrangianScheme(profile, state.cell_rho0, artificial_viscosity=False)
    y = profile.nodes
    response = scheme.acceleration(state.eta) - scheme.acceleration(y)
    zeta = np.zeros_like(y)
    zeta[1:] = (state.eta[1:] - y[1:]) / y[1:]

    # same scheme: the remainder is O(delta)
    tangent = scheme.linearized_acceleration(y, state.eta - y)
    assert np.max(np.abs(response - tangent)) < 1e-4 * np.max(np.abs(tangent))

    # centered differences of the linearized equations: y zeta_tt = y K zeta, up to O(h^2)
    predicted = y[1:-1] * LinearizedOperator(profile).apply(zeta[1:-1])
    weight = scheme.node_mass[1:-2]
    error = np.sqrt(np.sum(weight * (response[1:-2] - predicted[:-1]) ** 2))
    assert error < 5e-2 * np.sqrt(np.sum(weight * predicted[:-1] ** 2))


def test_linear_remainder_is_quadratic_in_delta(unstable_star):
    profile, mode = unstable_star
    big, small, ratio = dynamics.delta_squared_ratio(profile, mode, 1e-3, t_end=1.0 / mode.growth_rate)
    assert 0.0 < small < big
    assert ratio == pytest.approx(4.0, abs=0.1)


# ============================================================================
# Evolution
# ============================================================================

def test_equilibrium_drift_converges():
    drifts = []
    for n in (100, 200):
        profile = solve_liquid_star(1.2, 100.0, n)
        t_end = sound_crossing_time(profile)
        diagnostics = dynamics.evolve(dynamics.init_equilibrium(profile), profile, t_end, t_end / 20.0)
        assert diagnostics.status == "ok"
        assert diagnostics.t[-1] == pytest.approx(t_end)
        drifts.append(max(diagnostics.norm) / profile.total_mass)
    assert drifts[1] < drifts[0] / 2.0
    assert drifts[1] < 1e-2


def test_balanced_equilibrium_stays_put(unstable_star):
    profile, _ = unstable_star
    t_end = 0.5 * sound_crossing_time(profile)
    diagnostics = dynamics.evolve(dynamics.init_equilibrium(profile, balanced=True), profile, t_end, t_end / 10.0)
    assert max(diagnostics.norm) < 1e-9 * profile.total_mass


def test_energy_is_conserved(unstable_star):
    profile, mode = unstable_star
    t_end = sound_crossing_time(profile)
    # one percent peak displacement
    delta = 1e-2 / (np.max(np.abs(mode.chi)) * dynamics.seed_amplitude(profile, mode, 1.0))
    state = dynamics.seed_mode(profile, mode, delta, balanced=True)
    diagnostics = dynamics.evolve(state, profile, t_end, t_end / 20.0, artificial_viscosity=False)
    energy = np.asarray(diagnostics.energy)
    assert np.max(np.abs(energy - energy[0])) / abs(energy[0]) < 1e-5


def test_evolve_validates_times(unstable_star):
    profile, _ = unstable_star
    state = dynamics.init_equilibrium(profile)
    with pytest.raises(InvalidParameterError):
        dynamics.evolve(state, profile, 0.0, 0.1)
    with pytest.raises(InvalidParameterError):
        dynamics.evolve(state, profile, 1.0, 0.0)


def test_evolve_stops_at_threshold(unstable_star):
    profile, mode = unstable_star
    state = dynamics.seed_mode(profile, mode, 1e-4, balanced=True)
    start = dynamics.perturbation_norm(state, profile)
    diagnostics = dynamics.evolve(state, profile, 20.0 / mode.growth_rate, 1.0, stop_norm=2.0 * start)
    assert diagnostics.status == "escaped"
    assert diagnostics.norm[-1] >= 2.0 * start
    assert diagnostics.t[-1] == pytest.approx(math.log(2.0) / mode.growth_rate, rel=0.1)


# ============================================================================
# Linearized system
# ============================================================================

def test_linear_sigma_of_uniform_dilation():
    y = np.linspace(0.0, 1.0, 11)
    np.testing.assert_allclose(LinearDynamics.sigma(np.full_like(y, 0.01), y), -0.03, rtol=1e-12)


def test_linear_eigenmode_grows_exponentially(unstable_star):
    profile, mode = unstable_star
    t_end = 1.0 / mode.growth_rate
    diagnostics, final = dynamics.evolve_linearized(profile, LinearDynamics.seed(mode, 1e-6), t_end, method="pencil")
    expected = 1e-6 * math.e * mode.chi
    assert np.max(np.abs(final.zeta - expected)) < 1e-2 * np.max(np.abs(expected))
    assert final.time == pytest.approx(t_end)
    assert measure_growth_rate(diagnostics, lo=0.0, hi=math.inf) == pytest.approx(mode.growth_rate, rel=1e-2)


def test_linear_energy_is_conserved(unstable_star):
    profile, mode = unstable_star
    pencil = SpectralSolver.assemble(profile)
    initial = LinearState(grid=profile.grid, zeta=mode.chi, zeta_t=np.zeros_like(mode.chi))
    assert linear_energy(pencil, initial) == pytest.approx(0.5 * mode.mu_star, rel=1e-8)
    diagnostics, _ = dynamics.evolve_linearized(profile, initial, 0.5 / mode.growth_rate, pencil=pencil,
                                                method="pencil")
    energy = np.asarray(diagnostics.energy)
    assert np.max(np.abs(energy - energy[0])) < 1e-4 * abs(energy[0])


def test_finite_difference_growth_matches_eigenvalue(unstable_star):
    profile, mode = unstable_star
    t_end = 3.0 / mode.growth_rate
    diagnostics, final = dynamics.evolve_linearized(profile, LinearDynamics.seed(mode, 1e-6), t_end,
                                                    sample_dt=t_end / 60.0)
    assert measure_growth_rate(diagnostics, lo=0.0, hi=math.inf) == pytest.approx(mode.growth_rate, rel=2e-2)
    shape = final.zeta / final.zeta[np.argmax(np.abs(final.zeta))]
    chi = mode.chi / mode.chi[np.argmax(np.abs(mode.chi))]
    assert np.max(np.abs(shape - chi)) < 5e-2


def test_finite_difference_agrees_with_pencil(unstable_star):
    profile, mode = unstable_star
    t_end = 1.0 / mode.growth_rate
    _, fd = dynamics.evolve_linearized(profile, LinearDynamics.seed(mode, 1e-6), t_end)
    _, fem = dynamics.evolve_linearized(profile, LinearDynamics.seed(mode, 1e-6), t_end, method="pencil")
    assert np.max(np.abs(fd.zeta - fem.zeta)) < 5e-2 * np.max(np.abs(fem.zeta))


@pytest.mark.parametrize("n", [100, 200])
def test_finite_difference_keeps_robin_relation(n):
    profile = solve_liquid_star(1.2, 1e3, n)
    mode = SpectralSolver.growth_rate_of(profile)
    _, final = dynamics.evolve_linearized(profile, LinearDynamics.seed(mode, 1e-6), 1.0 / mode.growth_rate)
    zeta, h = final.zeta, profile.radius / n
    defect = robin_defect(zeta, profile.grid)
    curvature = abs(zeta[-1] - 2.0 * zeta[-2] + zeta[-3]) / (2.0 * h * np.max(np.abs(zeta)))
    # the closure is second order, so the one-sided defect is the O(h) curvature term
    assert defect == pytest.approx(profile.radius * curvature, rel=1e-6)
    assert defect < 0.05 * 200 / n


def test_finite_difference_robin_defect_is_first_order():
    defects = []
    for n in (100, 200):
        profile = solve_liquid_star(1.2, 1e3, n)
        mode = SpectralSolver.growth_rate_of(profile)
        _, final = dynamics.evolve_linearized(profile, LinearDynamics.seed(mode, 1e-6), 1.0 / mode.growth_rate)
        defects.append(robin_defect(final.zeta, profile.grid))
    assert 1.5 < defects[0] / defects[1] < 2.7


def test_finite_difference_energy_is_conserved(unstable_star):
    profile, mode = unstable_star
    initial = LinearState(grid=profile.grid, zeta=mode.chi, zeta_t=np.zeros_like(mode.chi))
    diagnostics, _ = dynamics.evolve_linearized(profile, initial, 0.5 / mode.growth_rate)
    energy = np.asarray(diagnostics.energy)
    assert np.max(np.abs(energy - energy[0])) < 1e-2 * abs(energy[0])


def test_finite_difference_integrates_sigma(unstable_star):
    profile, mode = unstable_star
    _, final = dynamics.evolve_linearized(profile, LinearDynamics.seed(mode, 1e-6), 1.0 / mode.growth_rate)
    derived = LinearDynamics.sigma(final.zeta, profile.nodes)
    np.testing.assert_allclose(final.sigma, derived, rtol=1e-8, atol=1e-12 * np.max(np.abs(derived)))


def test_linearized_operator_closures():
    profile = solve_liquid_star(1.2, 100.0, 64)
    operator = LinearizedOperator(profile)
    full = operator.extend(np.linspace(1.0, 2.0, 63))
    h, radius = profile.radius / 64, profile.radius
    assert 3.0 * full[-1] + radius * (3.0 * full[-1] - 4.0 * full[-2] + full[-3]) / (2.0 * h) == \
        pytest.approx(0.0, abs=1e-9)
    assert -3.0 * full[0] + 4.0 * full[1] - full[2] == pytest.approx(0.0, abs=1e-12)
    symmetric = (operator.matrix.toarray().T * operator.weight).T
    np.testing.assert_allclose(symmetric, symmetric.T, rtol=1e-10, atol=1e-12 * np.max(np.abs(symmetric)))


def test_linear_seed_with_profile_has_requested_norm(unstable_star):
    profile, mode = unstable_star
    initial = LinearDynamics.seed(mode, 1e-3, profile)
    norm = LinearDynamics.perturbation_norm(profile, initial.zeta, initial.zeta_t)
    assert norm == pytest.approx(1e-3, rel=1e-12)


def test_linear_cfl_violation(unstable_star):
    profile, mode = unstable_star
    with pytest.raises(CFLViolationError):
        dynamics.evolve_linearized(profile, LinearDynamics.seed(mode), 1.0, dt=1.0)


def test_linear_seed_requires_unstable_mode(stable_star):
    _, mode = stable_star
    with pytest.raises(InvalidParameterError):
        LinearDynamics.seed(mode)


def test_measure_growth_rate_on_exponential():
    diagnostics = Diagnostics()
    for t in np.linspace(0.0, 5.0, 51):
        diagnostics.record(t, 1e-6 * math.exp(2.0 * t), 0.0, 1.0, 0.0)
    assert measure_growth_rate(diagnostics, hi=1.0) == pytest.approx(2.0, rel=1e-10)


def test_crossing_time_interpolates_in_log():
    t = [0.0, 1.0, 2.0]
    norm = [1e-4, 1e-3, 1e-2]
    assert dynamics._crossing_time(t, norm, 10 ** -2.5) == pytest.approx(1.5)
    assert dynamics._crossing_time(t, norm, 1.0) is None


# ============================================================================
# Nonlinear growth and escape
# ============================================================================

@pytest.mark.slow
def test_nonlinear_growth_rate_matches_eigenvalue(unstable_star):
    profile, mode = unstable_star
    t_end = 3.0 / mode.growth_rate
    state = dynamics.seed_mode(profile, mode, 1e-6, balanced=True)
    diagnostics = dynamics.evolve(state, profile, t_end, t_end / 60.0)
    rate = measure_growth_rate(diagnostics, lo=0.0, hi=math.inf)
    assert rate == pytest.approx(mode.growth_rate, rel=0.05)


@pytest.mark.slow
def test_delta_squared_correction(unstable_star):
    profile, mode = unstable_star
    _, _, ratio = dynamics.delta_squared_ratio(profile, mode, 1e-4)
    assert ratio == pytest.approx(4.0, abs=0.5)


@pytest.mark.slow
def test_escape_experiment(unstable_star):
    profile, mode = unstable_star
    result = dynamics.escape_experiment(profile, mode, [1e-4, 1e-5, 1e-6], theta0=1e-2, jobs=1)
    assert [r.status for r in result.runs] == ["ok", "ok", "ok"]
    assert result.relative_slope_error < 0.05
    assert result.predicted_slope == pytest.approx(1.0 / mode.growth_rate)
    assert result.delta_sq_ratios and abs(result.delta_sq_ratios[0] - 1.0) < 0.2


def test_escape_experiment_validation(stable_star, unstable_star):
    profile, mode = stable_star
    with pytest.raises(InvalidParameterError):
        dynamics.escape_experiment(profile, mode, [1e-4, 1e-5])
    profile, mode = unstable_star
    with pytest.raises(InvalidParameterError):
        dynamics.escape_experiment(profile, mode, [1e-1, 1e-5], theta0=1e-2)
    with pytest.raises(InvalidParameterError):
        dynamics.delta_squared_ratio(profile, mode, 1e-2, theta0=1e-2)
    with pytest.raises(InvalidParameterError):
        dynamics.delta_squared_ratio(profile, mode, 1e-4, small_delta=1e-4)
