"""
Steady State Service.
Liquid Lane-Emden equilibria, gaseous reference stars, the self-similar family
and the closed-form gamma = 6/5 oracle.
"""

import math
import logging
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from app.core.config import settings
from app.core.exceptions import BracketError, InvalidParameterError, ProfileInvariantError
from app.schemas.grid import RadialGrid
from app.schemas.star import EquationOfState, StarProfile
from app.services.numerics import Numerics

logger = logging.getLogger(__name__)

SIX_FIFTHS = 1.2
GAMMA_MAX = 4.0 / 3.0


def _check_gamma(gamma: float):
    if not (1.0 <= gamma < GAMMA_MAX):
        raise InvalidParameterError(f"gamma must lie in [1, 4/3), got {gamma}")


def _check_kappa(kappa: float):
    if not kappa > 1.0:
        raise InvalidParameterError(
            f"kappa must be > 1 (central density above the boundary density 1), got {kappa}"
        )


class SteadyStateSolver:
    """Integrates d rho/dy = -rho m/(y^2 c_s^2), dm/dy = 4 pi y^2 rho outwards from the center"""

    @staticmethod
    def rhs(gamma: float) -> Callable[[float, np.ndarray], np.ndarray]:
        """
        Right-hand side in the form rho/c_s^2 = rho^(2-gamma)/gamma, which stays
        finite as rho -> 0 at the edge of a compact gaseous star.
        """
        if gamma == 1.0:
            def derivative(y: float, state: np.ndarray) -> np.ndarray:
                rho, m = state
                return np.array([-rho * m / (y * y), 4.0 * math.pi * y * y * rho])
        else:
            def derivative(y: float, state: np.ndarray) -> np.ndarray:
                rho = max(state[0], 0.0)
                m = state[1]
                return np.array([
                    -rho ** (2.0 - gamma) * m / (gamma * y * y),
                    4.0 * math.pi * y * y * rho,
                ])
        return derivative

    @staticmethod
    def core_scale(gamma: float, kappa: float, stop_density: float = 0.0) -> float:
        """
        Width of the central core, sqrt(3 c^2 / (2 pi kappa)), shrunk to the
        series estimate of the boundary radius when the star is nearly uniform.
        """
        c2 = float(EquationOfState(gamma=gamma).sound_speed_sq(kappa))
        ell = math.sqrt(3.0 * c2 / (2.0 * math.pi * kappa))
        if stop_density > 0 and kappa > stop_density:
            curvature = (2.0 * math.pi / 3.0) * kappa ** 2 / c2
            ell = min(ell, math.sqrt((kappa - stop_density) / curvature))
        return ell

    @staticmethod
    def series_start(gamma: float, kappa: float, y: float) -> np.ndarray:
        """Regular expansion at the center: (rho, m) to second order in rho"""
        c2 = float(EquationOfState(gamma=gamma).sound_speed_sq(kappa))
        a = (2.0 * math.pi / 3.0) * kappa ** 2 / c2
        rho = kappa - a * y ** 2
        m = (4.0 * math.pi / 3.0) * kappa * y ** 3 - (8.0 * math.pi ** 2 / 15.0) * (kappa ** 2 / c2) * y ** 5
        return np.array([rho, m])

    @staticmethod
    def integrate(
        gamma: float,
        kappa: float,
        stop_density: float,
        n: int,
        tol: float,
        step_scale: Optional[float] = None,
        max_radius_factor: Optional[float] = None,
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Integrate from the center until rho = stop_density.

        Steps are h = alpha * max(y, core scale) with alpha = step_scale / n, so
        the integration error follows the requested grid size; at step_scale 1 no
        step is wider than the output spacing R/n (the core scale is capped by the
        series estimate of R).

        Returns:
            (y, rho, m) at the accepted steps; the last sample is the event
            rho = stop_density located by bisection
        """
        step_scale = step_scale if step_scale is not None else settings.ode_step_scale
        max_radius_factor = max_radius_factor if max_radius_factor is not None else settings.max_radius_factor

        derivative = SteadyStateSolver.rhs(gamma)
        ell = SteadyStateSolver.core_scale(gamma, kappa, stop_density)
        alpha = step_scale / n
        max_radius = max_radius_factor * SteadyStateSolver.core_scale(gamma, kappa)

        y = alpha * ell
        state = SteadyStateSolver.series_start(gamma, kappa, y)
        ys = [0.0, y]
        rhos = [kappa, state[0]]
        ms = [0.0, state[1]]

        while True:
            h = alpha * max(y, ell)
            trial = Numerics.rk4_step(state, derivative, y, h)
            if trial[0] < stop_density:
                base_y, base_state = y, state

                def excess(s: float) -> float:
                    if s == 0.0:
                        return base_state[0] - stop_density
                    return Numerics.rk4_step(base_state, derivative, base_y, s)[0] - stop_density

                s = Numerics.bisect_event(excess, 0.0, h, tol)
                if s > 0.0:
                    final = Numerics.rk4_step(base_state, derivative, base_y, s)
                else:
                    final = base_state
                y_event = base_y + s
                # drop a sample that would sit on top of the event
                if s < 1e-3 * h and len(ys) > 2:
                    ys.pop()
                    rhos.pop()
                    ms.pop()
                ys.append(y_event)
                rhos.append(stop_density)
                ms.append(final[1])
                logger.debug(f"event rho={stop_density:.3g} at y={y_event:.15g} after {len(ys)} samples")
                break
            y += h
            state = trial
            ys.append(y)
            rhos.append(state[0])
            ms.append(state[1])
            if y > max_radius:
                raise BracketError(
                    f"density {stop_density:.3g} not reached before y={max_radius:.3g} "
                    f"(gamma={gamma}, kappa={kappa:.6g})"
                )

        return np.array(ys), np.array(rhos), np.array(ms)

    @staticmethod
    def slopes(gamma: float, ys: np.ndarray, rhos: np.ndarray, ms: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Exact (d rho/dy, dm/dy) at integrator samples; both vanish at the center"""
        drho = np.zeros_like(ys)
        inner = ys > 0
        rho, m, y = np.maximum(rhos[inner], 0.0), ms[inner], ys[inner]
        if gamma == 1.0:
            drho[inner] = -rho * m / y ** 2
        else:
            drho[inner] = -rho ** (2.0 - gamma) * m / (gamma * y ** 2)
        return drho, 4.0 * math.pi * ys ** 2 * rhos

    @staticmethod
    def resample(
        gamma: float,
        ys: np.ndarray,
        rhos: np.ndarray,
        ms: np.ndarray,
        grid: RadialGrid,
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Cubic Hermite resampling on the exact derivatives; end values are copied exactly"""
        drho, dm = SteadyStateSolver.slopes(gamma, ys, rhos, ms)
        rho = Numerics.hermite_resample(ys, rhos, drho, grid.nodes)
        mass = Numerics.hermite_resample(ys, ms, dm, grid.nodes)
        rho[0], rho[-1] = rhos[0], rhos[-1]
        mass[0], mass[-1] = 0.0, ms[-1]
        return rho, mass

    @staticmethod
    def solve_liquid_star(
        gamma: float,
        kappa: float,
        n: Optional[int] = None,
        tol: Optional[float] = None,
        geometric_ratio: Optional[float] = None,
    ) -> StarProfile:
        """
        Liquid star with central density kappa and boundary density 1.

        Args:
            gamma: Adiabatic index in [1, 4/3)
            kappa: Central density, > 1
            n: Number of grid cells (N + 1 nodes)
            tol: Bisection tolerance for the boundary event
            geometric_ratio: Optional cell growth ratio for a graded grid

        Returns:
            StarProfile on [0, R]
        """
        n = n if n is not None else settings.grid_size
        tol = tol if tol is not None else settings.bisection_tol
        _check_gamma(gamma)
        _check_kappa(kappa)
        if n < 16:
            raise InvalidParameterError(f"grid size N must be >= 16, got {n}")

        ys, rhos, ms = SteadyStateSolver.integrate(gamma, kappa, 1.0, n, tol)
        radius = float(ys[-1])
        if geometric_ratio is not None and geometric_ratio != 1.0:
            grid = RadialGrid.geometric(radius, n, geometric_ratio)
        else:
            grid = RadialGrid.uniform(radius, n)
        rho, mass = SteadyStateSolver.resample(gamma, ys, rhos, ms, grid)

        profile = StarProfile(gamma=gamma, kappa=kappa, grid=grid, rho=rho, mass=mass)
        profile.check_invariants()
        logger.info(f"⭐ Liquid star solved: gamma={gamma}, kappa={kappa:.6g}, N={n}, R={radius:.12g}")
        return profile

    @staticmethod
    def solve_gaseous_reference(
        gamma: float,
        n: Optional[int] = None,
        rho_floor: Optional[float] = None,
        tol: Optional[float] = None,
    ) -> StarProfile:
        """
        Gaseous star of central density 1, truncated where rho = rho_floor.

        Stars with gamma > 6/5 have compact support; their edge is estimated by
        extrapolating rho^(gamma-1), which vanishes linearly there.
        """
        n = n if n is not None else settings.grid_size
        rho_floor = rho_floor if rho_floor is not None else settings.gas_rho_floor
        tol = tol if tol is not None else settings.bisection_tol
        _check_gamma(gamma)
        if not (0.0 < rho_floor < 1.0):
            raise InvalidParameterError(f"rho_floor must lie in (0, 1), got {rho_floor}")
        if n < 16:
            raise InvalidParameterError(f"grid size N must be >= 16, got {n}")

        ys, rhos, ms = SteadyStateSolver.integrate(gamma, 1.0, rho_floor, n, tol)
        radius = float(ys[-1])
        grid = geometric_grid(radius, n, SteadyStateSolver.core_scale(gamma, 1.0) / 32.0)
        # resample in log density: the tail spans many decades
        drho, _ = SteadyStateSolver.slopes(gamma, ys, rhos, ms)
        log_rho = Numerics.hermite_resample(ys, np.log(rhos), drho / rhos, grid.nodes)
        _, mass = SteadyStateSolver.resample(gamma, ys, rhos, ms, grid)
        rho = np.exp(log_rho)
        rho[0], rho[-1] = 1.0, rho_floor

        compact = gamma > SIX_FIFTHS
        support_radius = None
        if compact:
            w1, w2 = rhos[-2] ** (gamma - 1.0), rhos[-1] ** (gamma - 1.0)
            support_radius = float(ys[-1] + w2 * (ys[-1] - ys[-2]) / (w1 - w2))

        profile = StarProfile(
            gamma=gamma,
            kappa=1.0,
            grid=grid,
            rho=rho,
            mass=mass,
            boundary_density=rho_floor,
            compact_support=compact,
            support_radius=support_radius,
        )
        profile.check_invariants()
        logger.info(
            f"🌫️  Gaseous reference solved: gamma={gamma}, N={n}, floor={rho_floor:.1e}, "
            f"R={radius:.8g}, compact={compact}"
        )
        return profile

    @staticmethod
    def scaled_profile(reference: StarProfile, kappa: float, n: Optional[int] = None) -> StarProfile:
        """
        Liquid star from the self-similar family rho_k(y) = k rho_*(k^(1 - gamma/2) y),
        truncated where rho_* = 1/k.

        With the gaseous reference (rho_*(0) = 1) k is the central density;
        k = 1 is the identity map, truncated at the reference's density-1 radius.
        """
        n = n if n is not None else settings.grid_size
        if not kappa >= 1.0:
            raise InvalidParameterError(f"kappa must be >= 1, got {kappa}")
        central = kappa * reference.kappa
        if not central > 1.0:
            raise InvalidParameterError(
                f"scaled central density {central:.6g} must exceed the boundary density 1 (zero-radius star)"
            )
        gamma = reference.gamma
        target = 1.0 / kappa
        if reference.rho[-1] > target:
            raise InvalidParameterError(
                f"reference reaches density {reference.rho[-1]:.3g} only; kappa={kappa:.6g} needs {target:.3g}"
            )

        s = reference.nodes
        inner = s > 0
        dlog_rho = np.zeros_like(s)
        dlog_rho[inner] = -reference.mass[inner] / (s[inner] ** 2 * reference.eos.sound_speed_sq(reference.rho[inner]))
        dmass = 4.0 * math.pi * s ** 2 * reference.rho
        log_rho = CubicHermiteSpline(s, np.log(reference.rho), dlog_rho)
        mass_star = CubicHermiteSpline(s, reference.mass, dmass)

        j = int(np.argmax(reference.rho < target))
        if j == 0:
            s_edge = float(s[-1])
        else:
            s_edge = Numerics.bisect_event(
                lambda x: float(log_rho(x)) - math.log(target), float(s[j - 1]), float(s[j]),
                settings.bisection_tol,
            )
        b = kappa ** (1.0 - gamma / 2.0)
        radius = s_edge / b
        grid = RadialGrid.uniform(radius, n)
        scaled = grid.nodes * b
        scaled[-1] = s_edge
        rho = kappa * np.exp(log_rho(scaled))
        mass = kappa * b ** -3 * mass_star(scaled)
        rho[0], rho[-1] = central, 1.0
        mass[0] = 0.0

        profile = StarProfile(gamma=gamma, kappa=central, grid=grid, rho=rho, mass=mass)
        profile.check_invariants()
        logger.info(f"Scaled profile: gamma={gamma}, kappa={central:.6g}, N={n}, R={radius:.12g}")
        return profile


# ============================================================================
# Closed forms and diagnostics
# ============================================================================

def explicit_profile_six_fifths(kappa: float, y) -> Tuple[np.ndarray, float]:
    """
    Density (k^(-2/5) + (2 pi/9) k^(2/5) y^2)^(-5/2) of the gamma = 6/5 liquid
    star and its radius (3/sqrt(2 pi)) k^(-2/5) (k^(2/5) - 1)^(1/2).
    """
    _check_kappa(kappa)
    radius = 3.0 / math.sqrt(2.0 * math.pi) * kappa ** -0.4 * math.sqrt(kappa ** 0.4 - 1.0)
    y = np.asarray(y, dtype=float)
    if np.any(y < 0) or np.any(y > radius * (1.0 + 1e-12)):
        raise InvalidParameterError(f"y must lie in [0, R_kappa={radius:.12g}]")
    density = (kappa ** -0.4 + (2.0 * math.pi / 9.0) * kappa ** 0.4 * y ** 2) ** -2.5
    return density, radius


def taylor_sign_margin(profile: StarProfile) -> float:
    """-d_y P at the boundary, rho(R) m(R) / R^2; strictly positive for a valid star"""
    margin = float(profile.rho[-1] * profile.mass[-1] / profile.radius ** 2)
    if not margin > 0:
        raise ProfileInvariantError(
            f"nonpositive Taylor sign margin {margin!r} (gamma={profile.gamma}, kappa={profile.kappa})"
        )
    return margin


def case3_far_field_constants(gamma: float) -> Tuple[float, float, float]:
    """
    Far-field constants of the gaseous star for gamma < 4/3:
    rho ~ v1 r^(-2/(2-gamma)), m ~ v2 r^((2-3 gamma)/(2-gamma)) and R_inf.
    """
    _check_gamma(gamma)
    base = (1.0 / (2.0 * math.pi)) * gamma * (4.0 - 3.0 * gamma) / (2.0 - gamma) ** 2
    v1 = base ** (1.0 / (2.0 - gamma))
    v2 = (2.0 * gamma / (2.0 - gamma)) * base ** ((gamma - 1.0) / (2.0 - gamma))
    return v1, v2, math.sqrt(base)


def far_field_deviation(profile: StarProfile) -> float:
    """|r^(2/(2-gamma)) rho(r) - v1| / v1 at the outermost node"""
    v1, _, _ = case3_far_field_constants(profile.gamma)
    r = profile.radius
    return abs(r ** (2.0 / (2.0 - profile.gamma)) * profile.rho[-1] - v1) / v1


def geometric_grid(radius: float, n: int, first_spacing: float) -> RadialGrid:
    """Graded grid on [0, radius] whose first cell is about `first_spacing` wide"""
    ratio = Numerics.geometric_ratio(radius, n, first_spacing)
    return RadialGrid.geometric(radius, n, ratio)


def solve_liquid_star(gamma: float, kappa: float, n: Optional[int] = None, tol: Optional[float] = None,
                      geometric_ratio: Optional[float] = None) -> StarProfile:
    return SteadyStateSolver.solve_liquid_star(gamma, kappa, n, tol, geometric_ratio)


def solve_gaseous_reference(gamma: float, n: Optional[int] = None, rho_floor: Optional[float] = None) -> StarProfile:
    return SteadyStateSolver.solve_gaseous_reference(gamma, n, rho_floor)


def scaled_profile(reference: StarProfile, kappa: float, n: Optional[int] = None) -> StarProfile:
    return SteadyStateSolver.scaled_profile(reference, kappa, n)
