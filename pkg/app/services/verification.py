"""
Verification Service.
The acceptance suite behind `verify`: every criterion at desk scale, each
tolerance multiplied by a common scale (0 forces failures).
"""

import math
import time
import logging
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from app.core.exceptions import InvalidParameterError, LaneEmdenException
from app.schemas.scaling import ScalingRecord
from app.schemas.spectral import ModeResult
from app.schemas.star import StarProfile
from app.schemas.verification import CriterionResult, VerificationReport
from app.services import dynamics
from app.services.scaling import case1_form_asymptotics, default_grid_size, kappa_grid, sweep, verify_regime
from app.services.spectral import SpectralSolver, exponent_window
from app.services.steady_state import SIX_FIFTHS, SteadyStateSolver, explicit_profile_six_fifths

logger = logging.getLogger(__name__)

# Desk-scale sizes
ORACLE_N = 2048
PENCIL_N = 512
SWEEP_N = 512
DYNAMICS_N = 400
DYNAMICS_KAPPA = 1e3
PRESERVATION_KAPPA = 1e2


class AcceptanceSuite:
    """Runs the criteria, sharing profiles, modes and sweeps between them"""

    def __init__(self, tolerance_scale: float = 1.0, jobs: int = 1):
        self.scale = tolerance_scale
        self.jobs = jobs
        self._sweeps: Dict[float, List[ScalingRecord]] = {}
        self._star: Optional[Tuple[StarProfile, ModeResult]] = None

    # ========================================================================
    # Shared fixtures
    # ========================================================================

    def _sweep(self, gamma: float) -> List[ScalingRecord]:
        if gamma not in self._sweeps:
            if gamma < SIX_FIFTHS:
                kappas, n = kappa_grid(1e2, 1e4, 3), None
            else:
                kappas, n = kappa_grid(1e2, 1e5, 3), SWEEP_N
            self._sweeps[gamma] = sweep(gamma, kappas, n=n, jobs=self.jobs)
        return self._sweeps[gamma]

    def _unstable_star(self) -> Tuple[StarProfile, ModeResult]:
        if self._star is None:
            profile = SteadyStateSolver.solve_liquid_star(SIX_FIFTHS, DYNAMICS_KAPPA, DYNAMICS_N)
            self._star = profile, SpectralSolver.growth_rate_of(profile)
        return self._star

    # ========================================================================
    # Criteria
    # ========================================================================

    def ac1(self) -> CriterionResult:
        worst_rho, worst_radius = 0.0, 0.0
        for kappa in (2.0, 10.0, 100.0, 1e4):
            profile = SteadyStateSolver.solve_liquid_star(SIX_FIFTHS, kappa, ORACLE_N)
            _, radius = explicit_profile_six_fifths(kappa, 0.0)
            exact, _ = explicit_profile_six_fifths(kappa, np.minimum(profile.nodes, radius))
            worst_rho = max(worst_rho, float(np.max(np.abs(profile.rho - exact) / exact)))
            worst_radius = max(worst_radius, abs(profile.radius - radius) / radius)
        passed = worst_rho <= 1e-6 * self.scale and worst_radius <= 1e-8 * self.scale
        return CriterionResult(
            id="AC1", title="gamma=6/5 closed-form oracle", passed=passed,
            measured=f"rho {worst_rho:.2e}, R {worst_radius:.2e}",
            target=f"rho <= {1e-6 * self.scale:.1e}, R <= {1e-8 * self.scale:.1e}",
        )

    def ac2(self) -> CriterionResult:
        rng = np.random.default_rng(2024)
        worst_gap, worst_residual, passed = math.inf, 0.0, True
        for gamma, kappa in ((SIX_FIFTHS, 1e4), (1.25, 1e3), (1.1, 1e2)):
            pencil = SpectralSolver.assemble(SteadyStateSolver.solve_liquid_star(gamma, kappa, PENCIL_N))
            mode = SpectralSolver.lowest_eigenpair(pencil)
            trials = [np.ones(pencil.size)] + [rng.standard_normal(pencil.size) for _ in range(100)]
            lowest_q = min(SpectralSolver.rayleigh_quotient(pencil, v) for v in trials)
            slack = 1e-12 * max(1.0, abs(mode.mu_star))
            worst_gap = min(worst_gap, lowest_q - mode.mu_star)
            relative = mode.residual / max(1.0, abs(mode.mu_star))
            worst_residual = max(worst_residual, relative)
            passed = passed and mode.mu_star <= lowest_q + slack and relative <= 1e-8 * self.scale
        return CriterionResult(
            id="AC2", title="variational bound and eigen-residual", passed=passed,
            measured=f"min(q - mu*) {worst_gap:.3e}, residual {worst_residual:.2e}",
            target=f"q - mu* >= 0, residual <= {1e-8 * self.scale:.1e}",
        )

    def ac3(self) -> CriterionResult:
        low = SpectralSolver.growth_rate_of(SteadyStateSolver.solve_liquid_star(SIX_FIFTHS, 2.0, PENCIL_N))
        high = SpectralSolver.growth_rate_of(SteadyStateSolver.solve_liquid_star(SIX_FIFTHS, 1e4, PENCIL_N))
        return CriterionResult(
            id="AC3", title="stability transition in kappa", passed=low.mu_star > 0 > high.mu_star,
            measured=f"mu*(2) {low.mu_star:.4g}, mu*(1e4) {high.mu_star:.4g}",
            target="mu*(2) > 0 > mu*(1e4)",
        )

    def ac4(self) -> CriterionResult:
        gamma = 1.25
        records = self._sweep(gamma)
        verdict = verify_regime(gamma, records, slope_tol=0.1 * self.scale)
        form = case1_form_asymptotics(gamma, records)
        form_ok = abs(form.form_slope - form.expected_form_slope) <= 0.05 * self.scale
        return CriterionResult(
            id="AC4", title="case 1 scaling (gamma=1.25)", passed=verdict.passed and form_ok,
            measured=(f"mu0 {verdict.slopes['mu0']:.3f}, C1 {verdict.slopes['C1']:.3f}, "
                      f"<L1,1> {form.form_slope:.3f}"),
            target=(f"1 +/- {0.1 * self.scale:.2g}, {gamma / 2:.3f} +/- {0.1 * self.scale:.2g}, "
                    f"{form.expected_form_slope:.3f} +/- {0.05 * self.scale:.2g}"),
        )

    def ac5(self) -> CriterionResult:
        records = self._sweep(SIX_FIFTHS)
        verdict = verify_regime(SIX_FIFTHS, records, slope_tol=0.1 * self.scale)
        variation = verdict.residuals["mu0_log_variation"]
        top = max((r for r in records if r.unstable), key=lambda r: r.kappa)
        expected = 3.0 / (2.0 * math.sqrt(math.pi)) * top.kappa ** -0.4
        argmax_error = abs(top.C1_argmax - expected) / expected
        passed = (variation < 0.25 * self.scale and argmax_error <= 0.02 * self.scale
                  and verdict.checks["C1_slope"])
        return CriterionResult(
            id="AC5", title="case 2 scaling (gamma=6/5)", passed=passed,
            measured=(f"variation {variation:.3f}, argmax err {argmax_error:.2%}, "
                      f"C1 {verdict.slopes['C1']:.3f}"),
            target=(f"< {0.25 * self.scale:.2g}, <= {0.02 * self.scale:.1%}, "
                    f"0.6 +/- {0.1 * self.scale:.2g}"),
        )

    def ac6(self) -> CriterionResult:
        gamma = 1.1
        verdict = verify_regime(gamma, self._sweep(gamma), slope_tol=0.1 * self.scale)
        window = exponent_window(gamma, 0.0, 0.0)
        window_ok = window is not None and abs(window[0] - 8.0 / 9.0) <= 1e-12 and \
            abs(window[1] - math.sqrt(6.0 - 4.0 / 0.9)) <= 1e-12
        a = 0.5 * (window[0] + window[1]) if window else 1.0
        scaled = []
        for kappa in (1e3, 1e4, 1e5):
            profile = SteadyStateSolver.solve_liquid_star(gamma, kappa, default_grid_size(kappa))
            value = SpectralSolver.test_function_444(profile, 4.0, a)
            scaled.append(value / kappa ** (gamma / 2.0))
        growing = all(v < 0 for v in scaled) and all(abs(b) > abs(a_) for a_, b in zip(scaled, scaled[1:]))
        return CriterionResult(
            id="AC6", title="case 3 scaling (gamma=1.1)", passed=verdict.passed and window_ok and growing,
            measured=(f"mu0 {verdict.slopes['mu0']:.3f}, C1 {verdict.slopes['C1']:.3f}, "
                      f"q/kappa^(g/2) {', '.join(f'{v:.3g}' for v in scaled)}"),
            target=f">= {gamma / 2 + 0.1:.2f}, {gamma / 2:.2f} +/- {0.1 * self.scale:.2g}, negative and growing",
        )

    def _equilibrium_drift(self, n: int) -> Tuple[float, float]:
        profile = SteadyStateSolver.solve_liquid_star(SIX_FIFTHS, PRESERVATION_KAPPA, n)
        t_end = dynamics.sound_crossing_time(profile)
        state = dynamics.init_equilibrium(profile)
        diagnostics = dynamics.evolve(state, profile, t_end, sample_dt=t_end / 50.0)
        return max(diagnostics.norm), profile.total_mass

    def ac7(self) -> CriterionResult:
        coarse, _ = self._equilibrium_drift(DYNAMICS_N // 2)
        fine, mass = self._equilibrium_drift(DYNAMICS_N)
        order = math.log2(coarse / fine) if fine > 0 else math.inf
        passed = fine <= 1e-4 * self.scale * mass and abs(order - 2.0) <= 0.3 * self.scale
        return CriterionResult(
            id="AC7", title="equilibrium preservation", passed=passed,
            measured=f"norm {fine:.2e} (mass {mass:.3g}), order {order:.2f}",
            target=f"<= {1e-4 * self.scale:.1e} x mass, order 2 +/- {0.3 * self.scale:.2g}",
        )

    def ac8(self) -> CriterionResult:
        profile, mode = self._unstable_star()
        rate = mode.growth_rate
        t_end = 3.0 / rate
        linear, _ = dynamics.evolve_linearized(profile, dynamics.LinearDynamics.seed(mode, 1e-6), t_end,
                                               sample_dt=t_end / 60.0)
        linear_rate = dynamics.measure_growth_rate(linear, lo=0.0, hi=math.inf)
        state = dynamics.seed_mode(profile, mode, 1e-6, balanced=True)
        nonlinear = dynamics.evolve(state, profile, t_end, sample_dt=t_end / 60.0)
        nonlinear_rate = dynamics.measure_growth_rate(nonlinear, lo=0.0, hi=math.inf)
        errors = [abs(linear_rate - rate) / rate, abs(nonlinear_rate - rate) / rate]
        return CriterionResult(
            id="AC8", title="linear growth rate", passed=max(errors) <= 0.02 * self.scale,
            measured=f"sqrt(mu0) {rate:.5g}: linear {errors[0]:.2%}, nonlinear {errors[1]:.2%}",
            target=f"<= {0.02 * self.scale:.1%}",
        )

    def ac9(self) -> CriterionResult:
        profile, mode = self._unstable_star()
        result = dynamics.escape_experiment(profile, mode, [1e-4, 1e-5, 1e-6], theta0=1e-2,
                                            jobs=self.jobs, delta_sq=False)
        error = result.relative_slope_error
        passed = error is not None and error <= 0.05 * self.scale
        return CriterionResult(
            id="AC9", title="escape-time law", passed=passed,
            measured=f"slope {result.slope}, predicted {result.predicted_slope:.5g}, error {error}",
            target=f"<= {0.05 * self.scale:.1%}",
        )

    def ac10(self) -> CriterionResult:
        profile, mode = self._unstable_star()
        _, _, ratio = dynamics.delta_squared_ratio(profile, mode, 1e-4)
        return CriterionResult(
            id="AC10", title="delta^2 nonlinear correction", passed=abs(ratio - 4.0) <= 0.5 * self.scale,
            measured=f"ratio {ratio:.3f}", target=f"4 +/- {0.5 * self.scale:.2g}",
        )

    def _energy_drift(self, profile: StarProfile, mode: ModeResult, cfl: float, t_end: float) -> float:
        state = dynamics.seed_mode(profile, mode, 1e-2, balanced=True)
        diagnostics = dynamics.evolve(state, profile, t_end, sample_dt=t_end / 100.0, cfl=cfl,
                                      artificial_viscosity=False)
        energy = np.asarray(diagnostics.energy)
        return float(np.max(np.abs(energy - energy[0])) / abs(energy[0]))

    def ac11(self) -> CriterionResult:
        profile, mode = self._unstable_star()
        t_end = dynamics.sound_crossing_time(profile)
        drift = self._energy_drift(profile, mode, 0.4, t_end)
        finer = self._energy_drift(profile, mode, 0.2, t_end)
        order = math.log2(drift / finer) if finer > 0 else math.inf
        passed = drift <= 1e-5 * self.scale and order >= 2.0 - 0.3 * self.scale
        return CriterionResult(
            id="AC11", title="energy conservation", passed=passed,
            measured=f"drift {drift:.2e}, order {order:.2f}",
            target=f"<= {1e-5 * self.scale:.1e}, order >= {2.0 - 0.3 * self.scale:.2g}",
        )

    def ac12(self) -> CriterionResult:
        if not self._sweeps:
            self._sweep(1.25)
        records = [r for recs in self._sweeps.values() for r in recs if r.ok]
        margins = [r.taylor_margin for r in records]
        passed = bool(margins) and all(m is not None and m > 0 for m in margins)
        return CriterionResult(
            id="AC12", title="Taylor sign along sweeps", passed=passed,
            measured=f"min margin {min(margins):.3g} over {len(margins)} profiles" if margins else "no profiles",
            target="> 0",
        )


CRITERIA: Dict[str, Callable[[AcceptanceSuite], CriterionResult]] = {
    "AC1": AcceptanceSuite.ac1,
    "AC2": AcceptanceSuite.ac2,
    "AC3": AcceptanceSuite.ac3,
    "AC4": AcceptanceSuite.ac4,
    "AC5": AcceptanceSuite.ac5,
    "AC6": AcceptanceSuite.ac6,
    "AC7": AcceptanceSuite.ac7,
    "AC8": AcceptanceSuite.ac8,
    "AC9": AcceptanceSuite.ac9,
    "AC10": AcceptanceSuite.ac10,
    "AC11": AcceptanceSuite.ac11,
    "AC12": AcceptanceSuite.ac12,
}


def run_verification(
    tolerance_scale: float = 1.0,
    only: Optional[Sequence[str]] = None,
    jobs: int = 1,
) -> VerificationReport:
    """Run the selected criteria (all by default); a criterion that raises counts as failed"""
    selected = [c.upper() for c in only] if only else list(CRITERIA)
    unknown = [c for c in selected if c not in CRITERIA]
    if unknown:
        raise InvalidParameterError(f"unknown criteria {unknown}; choose from {list(CRITERIA)}")

    suite = AcceptanceSuite(tolerance_scale, jobs)
    report = VerificationReport(tolerance_scale=tolerance_scale)
    for criterion in selected:
        started = time.perf_counter()
        try:
            result = CRITERIA[criterion](suite)
        except LaneEmdenException as e:
            logger.error(f"❌ {criterion} raised: {e.detail}")
            result = CriterionResult(id=criterion, title="raised", passed=False, detail=e.detail)
        result.seconds = time.perf_counter() - started
        logger.info(f"{'✅' if result.passed else '❌'} {criterion}: {result.measured} ({result.seconds:.1f}s)")
        report.results.append(result)
    return report


def format_table(report: VerificationReport) -> str:
    """Fixed-width pass/fail table"""
    frame = pd.DataFrame([
        {
            "id": r.id,
            "criterion": r.title,
            "status": "PASS" if r.passed else "FAIL",
            "measured": r.measured or r.detail or "",
            "target": r.target or "",
            "seconds": f"{r.seconds:.1f}",
        }
        for r in report.results
    ])
    return frame.to_string(index=False)
