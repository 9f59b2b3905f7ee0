"""
Dynamics Service.
Free-boundary Lagrangian evolution of a spherical liquid star (nonlinear),
the linearized perturbation system, growing-mode seeding and the escape-time
experiment.

Layout: positions eta and velocities v live on the label nodes y_i; density,
pressure and Jacobians live in the cells [y_i, y_{i+1}]. Cell masses are fixed,
so mass is conserved identically, and the force on node i is
-4 pi eta_i^2 (P_right - P_left) - m(y_i) dm_i / eta_i^2 with a P = 0 ghost cell
beyond the boundary node. The semi-discrete system conserves
sum 1/2 dm v^2 + sum dM e(f) - sum m dm / eta exactly.
"""

import math
import logging
import multiprocessing as mp
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import solve_banded
from scipy.sparse import diags

from app.core.config import settings
from app.core.exceptions import (
    CellInversionError,
    CFLViolationError,
    InvalidParameterError,
)
from app.schemas.dynamics import Diagnostics, EscapeResult, EscapeRun, LagrangianState, LinearMethod, LinearState
from app.schemas.spectral import AssembledPencil, ModeResult
from app.schemas.star import StarProfile
from app.services.numerics import Numerics
from app.services.scaling import escape_time
from app.services.spectral import SpectralSolver, robin_defect

logger = logging.getLogger(__name__)

FOUR_PI = 4.0 * math.pi


# ============================================================================
# Nonlinear scheme
# ============================================================================

class LagrangianScheme:
    """
    Semi-discrete operators for one profile and one set of cell densities.
    Every method accepts a single state (shape (N+1,)) or a batch (shape (B, N+1)).
    """

    def __init__(
        self,
        profile: StarProfile,
        cell_rho0: np.ndarray,
        artificial_viscosity: Optional[bool] = None,
        av_quadratic: Optional[float] = None,
        av_linear: Optional[float] = None,
        cfl_limit: Optional[float] = None,
    ):
        self.gamma = profile.gamma
        self.labels = profile.nodes
        self.cell_volume0 = np.diff(self.labels ** 3) / 3.0
        self.cell_rho0 = np.asarray(cell_rho0, dtype=float)
        self.cell_mass = FOUR_PI * self.cell_rho0 * self.cell_volume0
        self.node_mass = np.zeros_like(self.labels)
        self.node_mass[:-1] += 0.5 * self.cell_mass
        self.node_mass[1:] += 0.5 * self.cell_mass
        self.enclosed = profile.mass
        self.artificial_viscosity = (
            artificial_viscosity if artificial_viscosity is not None else settings.artificial_viscosity
        )
        self.av_quadratic = av_quadratic if av_quadratic is not None else settings.av_quadratic
        self.av_linear = av_linear if av_linear is not None else settings.av_linear
        self.cfl_limit = cfl_limit if cfl_limit is not None else settings.cfl_limit

    def density(self, eta: np.ndarray) -> np.ndarray:
        return self.cell_mass / (FOUR_PI * np.diff(eta ** 3, axis=-1) / 3.0)

    def pressure(self, f: np.ndarray) -> np.ndarray:
        return f ** self.gamma - 1.0

    def sound_speed(self, f: np.ndarray) -> np.ndarray:
        if self.gamma == 1.0:
            return np.ones_like(f)
        return np.sqrt(self.gamma * f ** (self.gamma - 1.0))

    def internal_energy(self, f: np.ndarray) -> np.ndarray:
        if self.gamma == 1.0:
            return np.log(f) + 1.0 / f
        return f ** (self.gamma - 1.0) / (self.gamma - 1.0) + 1.0 / f

    def viscosity(self, f: np.ndarray, vel: np.ndarray) -> np.ndarray:
        """Von Neumann-Richtmyer q in compressing cells"""
        dv = np.diff(vel, axis=-1)
        q = f * (self.av_quadratic * dv ** 2 + self.av_linear * self.sound_speed(f) * np.abs(dv))
        return np.where(dv < 0.0, q, 0.0)

    def acceleration(self, eta: np.ndarray, vel: Optional[np.ndarray] = None) -> np.ndarray:
        f = self.density(eta)
        p = self.pressure(f)
        if self.artificial_viscosity and vel is not None:
            p = p + self.viscosity(f, vel)
        ghost = np.zeros(p.shape[:-1] + (1,))
        p_ext = np.concatenate([p, ghost], axis=-1)
        e = eta[..., 1:]
        acc = np.zeros_like(eta)
        acc[..., 1:] = (
            -FOUR_PI * e ** 2 * (p_ext[..., 1:] - p_ext[..., :-1]) / self.node_mass[1:]
            - self.enclosed[1:] / e ** 2
        )
        return acc

    def linearized_acceleration(self, eta: np.ndarray, direction: np.ndarray, step: float = 1e-30) -> np.ndarray:
        """Derivative of the inviscid acceleration at eta along direction, by complex step"""
        return np.imag(self.acceleration(eta + 1j * step * direction)) / step

    def linearized_density(self, eta: np.ndarray, direction: np.ndarray, step: float = 1e-30) -> np.ndarray:
        return np.imag(self.density(eta + 1j * step * direction)) / step

    def stable_dt(self, eta: np.ndarray) -> float:
        """min over cells of (cell width / sound speed)"""
        f = self.density(eta)
        return float(np.min(np.diff(eta, axis=-1) / self.sound_speed(f)))

    def kick_drift_kick(
        self, eta: np.ndarray, vel: np.ndarray, acc: np.ndarray, dt: float, time: float
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        limit = self.cfl_limit * self.stable_dt(eta)
        if dt > limit:
            raise CFLViolationError(f"dt={dt:.3e} exceeds the acoustic limit {limit:.3e} at t={time:.6g}")
        half = vel + 0.5 * dt * acc
        half[..., 0] = 0.0
        eta_new = eta + dt * half
        eta_new[..., 0] = 0.0
        if np.any(np.diff(eta_new, axis=-1) <= 0.0):
            raise CellInversionError("Lagrangian cells crossed", time + dt)
        acc_new = self.acceleration(eta_new, half)
        vel_new = half + 0.5 * dt * acc_new
        vel_new[..., 0] = 0.0
        return eta_new, vel_new, acc_new

    def perturbation_norm(self, eta: np.ndarray, vel: np.ndarray) -> np.ndarray:
        """sqrt(4 pi sum [avg v^2 + (f - rho0)^2] (eta_+^3 - eta_-^3)/3) per state"""
        f = self.density(eta)
        volume = np.diff(eta ** 3, axis=-1) / 3.0
        v2 = 0.5 * (vel[..., :-1] ** 2 + vel[..., 1:] ** 2)
        return np.sqrt(FOUR_PI * np.sum((v2 + (f - self.cell_rho0) ** 2) * volume, axis=-1))

    def total_energy(self, eta: np.ndarray, vel: np.ndarray) -> np.ndarray:
        kinetic = 0.5 * np.sum(self.node_mass * vel ** 2, axis=-1)
        internal = np.sum(self.cell_mass * self.internal_energy(self.density(eta)), axis=-1)
        gravity = -np.sum(self.enclosed[1:] * self.node_mass[1:] / eta[..., 1:], axis=-1)
        return kinetic + internal + gravity

    def max_jacobian_dev(self, eta: np.ndarray) -> float:
        jacobian = np.diff(eta ** 3, axis=-1) / (3.0 * self.cell_volume0)
        return float(np.max(np.abs(jacobian - 1.0)))


def _scheme_for(state: LagrangianState, profile: StarProfile, artificial_viscosity: Optional[bool] = None) -> LagrangianScheme:
    if state.grid.size != profile.grid.size or not np.array_equal(state.labels, profile.nodes):
        raise InvalidParameterError("state labels do not match the profile grid")
    return LagrangianScheme(profile, state.cell_rho0, artificial_viscosity=artificial_viscosity)


def sound_crossing_time(profile: StarProfile) -> float:
    """sum over cells of width / sound speed at the mass-averaged density"""
    scheme = LagrangianScheme(profile, mass_averaged_density(profile))
    f = scheme.cell_rho0
    return float(np.sum(np.diff(profile.nodes) / scheme.sound_speed(f)))


def mass_averaged_density(profile: StarProfile) -> np.ndarray:
    """Cell densities (m(y_{i+1}) - m(y_i)) / (4 pi/3 (y_{i+1}^3 - y_i^3))"""
    return np.diff(profile.mass) / (FOUR_PI * np.diff(profile.nodes ** 3) / 3.0)


def balanced_density(profile: StarProfile, max_newton: int = 50) -> np.ndarray:
    """
    Cell densities for which eta = y is an exact fixed point of the discrete
    momentum equation, marched inwards from the P = 0 ghost cell. Each cell
    needs one scalar Newton solve of rho^gamma - 1 - alpha rho = rhs.
    """
    gamma = profile.gamma
    y = profile.nodes
    volume0 = np.diff(y ** 3) / 3.0
    guess = mass_averaged_density(profile)
    n = y.size - 1
    rho = np.empty(n)
    p_right = 0.0
    mass_right = 0.0
    for i in range(n, 0, -1):
        k = profile.mass[i] / (FOUR_PI * y[i] ** 4)
        alpha = 2.0 * math.pi * k * volume0[i - 1]
        rhs = p_right + 0.5 * k * mass_right
        r = guess[i - 1]
        for _ in range(max_newton):
            g = r ** gamma - 1.0 - alpha * r - rhs
            step = g / (gamma * r ** (gamma - 1.0) - alpha)
            r -= step
            if abs(step) <= 4e-16 * r:
                break
        rho[i - 1] = r
        p_right = r ** gamma - 1.0
        mass_right = FOUR_PI * r * volume0[i - 1]
    return rho


def seed_amplitude(profile: StarProfile, mode: ModeResult, delta: float) -> float:
    """Mode amplitude whose growing-branch seed has perturbation norm delta to linear order"""
    if mode.mu0 is None:
        raise InvalidParameterError(f"mode is stable (mu*={mode.mu_star:.6g}); nothing to seed")
    unit = LinearDynamics.perturbation_norm(profile, mode.chi, math.sqrt(mode.mu0) * mode.chi)
    return delta / unit


class LagrangianDynamics:
    """Nonlinear free-boundary evolution"""

    @staticmethod
    def init_equilibrium(profile: StarProfile, balanced: bool = False) -> LagrangianState:
        """
        eta = y, v = 0. Cell densities are the mass averages of the profile, a
        fixed point up to O(h^2); with `balanced` they are corrected so the
        fixed point is exact for the discrete scheme.
        """
        cell_rho0 = balanced_density(profile) if balanced else mass_averaged_density(profile)
        y = profile.nodes
        return LagrangianState(grid=profile.grid, eta=y.copy(), vel=np.zeros_like(y), cell_rho0=cell_rho0)

    @staticmethod
    def seed_mode(profile: StarProfile, mode: ModeResult, delta: float, balanced: bool = False) -> LagrangianState:
        """
        Pure growing branch: eta = y (1 + a chi), v = y a sqrt(mu0) chi, with the
        amplitude a chosen so the seeded perturbation has norm delta to linear order.
        """
        if not np.isfinite(delta):
            raise InvalidParameterError(f"delta must be finite, got {delta}")
        if mode.chi.size != profile.grid.size:
            raise InvalidParameterError("mode and profile grids differ")
        base = LagrangianDynamics.init_equilibrium(profile, balanced=balanced)
        eta, vel = _seeded_arrays(profile, mode, delta)
        if np.any(np.diff(eta) <= 0):
            raise InvalidParameterError(f"delta={delta:.3g} is too large: seeded positions are not monotone")
        return base.model_copy(update={"eta": eta, "vel": vel})

    @staticmethod
    def acceleration(state: LagrangianState, profile: StarProfile, artificial_viscosity: Optional[bool] = None) -> np.ndarray:
        if not state.monotone:
            raise CellInversionError("eta is not strictly increasing", state.time)
        scheme = _scheme_for(state, profile, artificial_viscosity)
        return scheme.acceleration(state.eta, state.vel)

    @staticmethod
    def step(state: LagrangianState, profile: StarProfile, dt: float,
             artificial_viscosity: Optional[bool] = None) -> LagrangianState:
        """One kick-drift-kick step"""
        if dt < 0:
            raise InvalidParameterError(f"dt must be nonnegative, got {dt}")
        if dt == 0.0:
            return state
        scheme = _scheme_for(state, profile, artificial_viscosity)
        acc = scheme.acceleration(state.eta, state.vel)
        eta, vel, _ = scheme.kick_drift_kick(state.eta, state.vel, acc, dt, state.time)
        return state.model_copy(update={"eta": eta, "vel": vel, "time": state.time + dt})

    @staticmethod
    def choose_dt(state: LagrangianState, profile: StarProfile, cfl: Optional[float] = None) -> float:
        cfl = cfl if cfl is not None else settings.cfl
        return cfl * _scheme_for(state, profile).stable_dt(state.eta)

    @staticmethod
    def evolve(
        state: LagrangianState,
        profile: StarProfile,
        t_end: float,
        sample_dt: float,
        dt: Optional[float] = None,
        cfl: Optional[float] = None,
        artificial_viscosity: Optional[bool] = None,
        stop_norm: Optional[float] = None,
        observer: Optional[Callable[[LagrangianState], None]] = None,
    ) -> Diagnostics:
        """
        Leapfrog from state.time to t_end with a fixed dt chosen from the initial
        CFL condition. Diagnostics are sampled every sample_dt (rounded to whole
        steps). Cell inversion ends the run with status "disrupted"; reaching
        stop_norm ends it with status "escaped".
        """
        if not t_end > state.time:
            raise InvalidParameterError(f"t_end={t_end} must exceed the start time {state.time}")
        if not sample_dt > 0:
            raise InvalidParameterError(f"sample_dt must be positive, got {sample_dt}")
        scheme = _scheme_for(state, profile, artificial_viscosity)
        if dt is None:
            cfl = cfl if cfl is not None else settings.cfl
            dt = cfl * scheme.stable_dt(state.eta)
        n_steps = max(1, math.ceil((t_end - state.time) / dt - 1e-9))
        dt = (t_end - state.time) / n_steps
        stride = max(1, int(round(sample_dt / dt)))

        diagnostics = Diagnostics(dt=dt)
        eta, vel, t = state.eta.copy(), state.vel.copy(), state.time
        acc = scheme.acceleration(eta, vel)

        def sample():
            norm = float(scheme.perturbation_norm(eta, vel))
            diagnostics.record(t, norm, float(scheme.total_energy(eta, vel)), float(eta[-1]),
                               scheme.max_jacobian_dev(eta))
            if observer is not None:
                observer(state.model_copy(update={"eta": eta.copy(), "vel": vel.copy(), "time": t}))
            return norm

        sample()
        logger.info(f"Evolving: N={eta.size - 1}, dt={dt:.3e}, steps={n_steps}, t_end={t_end:.6g}")
        for k in range(1, n_steps + 1):
            try:
                eta, vel, acc = scheme.kick_drift_kick(eta, vel, acc, dt, t)
            except CellInversionError as e:
                logger.warning(f"⚠️  Star disrupted: {e.detail}")
                diagnostics.status = "disrupted"
                break
            t = state.time + k * dt
            diagnostics.steps = k
            if k % stride == 0 or k == n_steps or stop_norm is not None:
                norm = sample()
                if stop_norm is not None and norm >= stop_norm:
                    diagnostics.status = "escaped"
                    break
        return diagnostics


# ============================================================================
# Linearized system
# ============================================================================

class LinearizedOperator:
    """
    Centered differences for the linearized momentum equation written as

        zeta_tt = (1/(y^4 rho)) d_y(gamma y^4 P d_y zeta) + (4 - 3 gamma) (m/y^3) zeta,

    P = rho^gamma, where the potential term comes from the analytic
    d_y P = -rho m/y^2. The unknowns are the interior nodes 1..N-1. The
    boundary node follows from the Robin relation 3 zeta + R d_y zeta = 0 with a
    three-point one-sided derivative, the center node from d_y zeta = 0.
    Control volumes carry the exact integral of y^4, so the flux through the
    central half-cell (order h^5) is dropped.
    """

    def __init__(self, profile: StarProfile):
        y = profile.nodes
        gamma = profile.gamma
        n = profile.n
        self.nodes = y
        self.radius = profile.radius

        pressure = profile.rho ** gamma
        mid = 0.5 * (y[:-1] + y[1:])
        flux = gamma * mid ** 4 * 0.5 * (pressure[:-1] + pressure[1:]) / np.diff(y)
        flux[0] = 0.0
        edges = np.concatenate([[0.0], mid, [y[-1]]])
        self.weight = (profile.rho * np.diff(edges ** 5) / 5.0)[1:n]

        potential = (4.0 - 3.0 * gamma) * profile.mass[1:n] / y[1:n] ** 3
        left, right = flux[:n - 1], flux[1:n]
        diagonal = -(left + right) / self.weight + potential
        lower = left[1:] / self.weight[1:]
        upper = right[:-1] / self.weight[:-1]

        # zeta_N = outer[0] zeta_{N-1} + outer[1] zeta_{N-2}
        h1, h2 = y[n - 1] - y[n - 2], y[n] - y[n - 1]
        a, b, c = h2 / (h1 * (h1 + h2)), -(h1 + h2) / (h1 * h2), (h1 + 2.0 * h2) / (h2 * (h1 + h2))
        denominator = 3.0 + self.radius * c
        self.outer = (-self.radius * b / denominator, -self.radius * a / denominator)
        # zeta_0 = inner[0] zeta_1 + inner[1] zeta_2
        h1, h2 = y[1], y[2] - y[1]
        a0, a1, a2 = -(2.0 * h1 + h2) / (h1 * (h1 + h2)), (h1 + h2) / (h1 * h2), -h1 / (h2 * (h1 + h2))
        self.inner = (-a1 / a0, -a2 / a0)

        coupling = right[-1] / self.weight[-1]
        diagonal[-1] += coupling * self.outer[0]
        lower[-1] += coupling * self.outer[1]
        # diagonal weights with weight * K symmetric: the control volumes, corrected at the closed row
        self.weight[-1] = self.weight[-2] * upper[-1] / lower[-1]
        self.matrix = diags([lower, diagonal, upper], [-1, 0, 1], format="csr")

    def apply(self, interior: np.ndarray) -> np.ndarray:
        return self.matrix @ interior

    def extend(self, interior: np.ndarray) -> np.ndarray:
        """Full nodal vector with both closures applied"""
        full = np.empty(interior.size + 2)
        full[1:-1] = interior
        full[0] = self.inner[0] * interior[0] + self.inner[1] * interior[1]
        full[-1] = self.outer[0] * interior[-1] + self.outer[1] * interior[-2]
        return full

    def stable_dt(self) -> float:
        """Leapfrog limit 2/sqrt(rho(K)), with rho(K) bounded by the Gershgorin row sums"""
        bound = float(np.max(np.asarray(abs(self.matrix).sum(axis=1))))
        return 2.0 / math.sqrt(bound)

    def energy(self, zeta: np.ndarray, zeta_t: np.ndarray) -> float:
        """1/2 sum w zeta_t^2 - 1/2 zeta . w K zeta over the interior nodes"""
        return 0.5 * float(np.sum(self.weight * zeta_t ** 2)) - 0.5 * float(zeta @ (self.weight * self.apply(zeta)))


class LinearDynamics:
    """Growing-mode seeds and leapfrog integration of the linearized system"""

    @staticmethod
    def max_eigenvalue(pencil: AssembledPencil, rel_tol: float = 1e-3) -> float:
        """Upper end of a bracket of the largest generalized eigenvalue"""
        n = pencil.size
        ratio = np.abs(pencil.stiffness.diagonal) / pencil.mass.diagonal
        hi = 2.0 * float(np.max(ratio)) + 1.0
        while SpectralSolver.count_below(pencil, hi) < n:
            hi *= 2.0
        lo = pencil.lower_bound if pencil.lower_bound is not None else -hi
        _, top = SpectralSolver._bisect_eigenvalue(pencil, n, lo, hi, rel_tol)
        return top

    @staticmethod
    def seed(mode: ModeResult, delta: float = 1.0, profile: Optional[StarProfile] = None) -> LinearState:
        """
        zeta = a chi, dzeta/dt = a sqrt(mu0) chi (growing branch). a = delta, or
        with a profile the amplitude whose perturbation norm is delta.
        """
        if mode.mu0 is None:
            raise InvalidParameterError(f"mode is stable (mu*={mode.mu_star:.6g}); nothing to seed")
        amplitude = seed_amplitude(profile, mode, delta) if profile is not None else delta
        return LinearState(grid=mode.grid, zeta=amplitude * mode.chi,
                           zeta_t=amplitude * math.sqrt(mode.mu0) * mode.chi)

    @staticmethod
    def sigma(zeta: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Cell values of log(rho/rho_bar) = -(1/y^2) d_y(y^3 zeta)"""
        return -3.0 * np.diff(y ** 3 * zeta) / np.diff(y ** 3)

    @staticmethod
    def perturbation_norm(profile: StarProfile, zeta: np.ndarray, zeta_t: np.ndarray) -> float:
        y = profile.nodes
        vel = y * zeta_t
        v2 = 0.5 * (vel[:-1] ** 2 + vel[1:] ** 2)
        rho_cell = mass_averaged_density(profile)
        drho = rho_cell * LinearDynamics.sigma(zeta, y)
        return math.sqrt(FOUR_PI * float(np.sum((v2 + drho ** 2) * np.diff(y ** 3) / 3.0)))

    @staticmethod
    def evolve_linearized(
        profile: StarProfile,
        initial: LinearState,
        t_end: float,
        dt: Optional[float] = None,
        sample_dt: Optional[float] = None,
        cfl: Optional[float] = None,
        pencil: Optional[AssembledPencil] = None,
        method: LinearMethod = "finite_difference",
    ) -> Tuple[Diagnostics, LinearState]:
        """
        Leapfrog on the linearized equations.

        "finite_difference" steps the centered differences of LinearizedOperator,
        slaving the boundary node to the Robin relation at every step and
        integrating sigma from d_t sigma = -(1/y^2) d_y(y^3 d_t zeta).
        "pencil" steps M zeta'' = -A zeta on the finite-element pencil, where the
        Robin relation is the natural boundary condition; it is kept for
        comparison. The energy column is the quadratic form each discretization
        conserves in continuous time.
        """
        if not t_end > initial.time:
            raise InvalidParameterError(f"t_end={t_end} must exceed the start time {initial.time}")
        if initial.grid.size != profile.grid.size:
            raise InvalidParameterError("initial state and profile grids differ")
        if method == "finite_difference":
            return LinearDynamics._evolve_finite_difference(profile, initial, t_end, dt, sample_dt, cfl)
        if method == "pencil":
            return LinearDynamics._evolve_pencil(profile, initial, t_end, dt, sample_dt, cfl, pencil)
        raise InvalidParameterError(f"unknown linear method {method!r}")

    @staticmethod
    def _time_step(span: float, stable: float, dt: Optional[float], cfl: Optional[float],
                   sample_dt: Optional[float]) -> Tuple[float, int, int]:
        cfl = cfl if cfl is not None else settings.cfl
        if dt is None:
            dt = cfl * stable
        elif dt > settings.cfl_limit * stable:
            raise CFLViolationError(f"dt={dt:.3e} exceeds the leapfrog limit {settings.cfl_limit * stable:.3e}")
        n_steps = max(1, math.ceil(span / dt - 1e-9))
        dt = span / n_steps
        return dt, n_steps, max(1, int(round((sample_dt or dt) / dt)))

    @staticmethod
    def _evolve_finite_difference(
        profile: StarProfile,
        initial: LinearState,
        t_end: float,
        dt: Optional[float],
        sample_dt: Optional[float],
        cfl: Optional[float],
    ) -> Tuple[Diagnostics, LinearState]:
        operator = LinearizedOperator(profile)
        dt, n_steps, stride = LinearDynamics._time_step(t_end - initial.time, operator.stable_dt(), dt, cfl, sample_dt)

        y = profile.nodes
        zeta, zeta_t = initial.zeta[1:-1].copy(), initial.zeta_t[1:-1].copy()
        if np.any(initial.zeta):
            logger.debug(f"Robin defect of the initial state: {robin_defect(initial.zeta, profile.grid):.3e}")
        sigma = initial.sigma.copy() if initial.sigma is not None else \
            LinearDynamics.sigma(operator.extend(zeta), y)
        acc = operator.apply(zeta)
        t = initial.time
        diagnostics = Diagnostics(dt=dt)

        def sample():
            full = operator.extend(zeta)
            diagnostics.record(
                t,
                LinearDynamics.perturbation_norm(profile, full, operator.extend(zeta_t)),
                operator.energy(zeta, zeta_t),
                profile.radius * (1.0 + full[-1]),
                float(np.max(np.abs(sigma))),
            )

        sample()
        for k in range(1, n_steps + 1):
            half = zeta_t + 0.5 * dt * acc
            sigma = sigma + dt * LinearDynamics.sigma(operator.extend(half), y)
            zeta = zeta + dt * half
            acc = operator.apply(zeta)
            zeta_t = half + 0.5 * dt * acc
            t = initial.time + k * dt
            if k % stride == 0 or k == n_steps:
                sample()
        diagnostics.steps = n_steps

        final = LinearState(grid=initial.grid, zeta=operator.extend(zeta), zeta_t=operator.extend(zeta_t),
                            sigma=sigma, time=t)
        if np.any(final.zeta):
            logger.debug(f"Robin defect at t={t:.6g}: {robin_defect(final.zeta, profile.grid):.3e}")
        return diagnostics, final

    @staticmethod
    def _evolve_pencil(
        profile: StarProfile,
        initial: LinearState,
        t_end: float,
        dt: Optional[float],
        sample_dt: Optional[float],
        cfl: Optional[float],
        pencil: Optional[AssembledPencil],
    ) -> Tuple[Diagnostics, LinearState]:
        pencil = pencil if pencil is not None else SpectralSolver.assemble(profile)
        omega_max = math.sqrt(max(LinearDynamics.max_eigenvalue(pencil), 0.0))
        dt, n_steps, stride = LinearDynamics._time_step(t_end - initial.time, 2.0 / omega_max, dt, cfl, sample_dt)

        mass_banded = pencil.mass.banded()

        def accel(zeta):
            return -solve_banded((1, 1), mass_banded, pencil.stiffness.matvec(zeta))

        y = profile.nodes
        zeta, zeta_t, t = initial.zeta.copy(), initial.zeta_t.copy(), initial.time
        acc = accel(zeta)
        diagnostics = Diagnostics(dt=dt)

        def sample():
            sig = LinearDynamics.sigma(zeta, y)
            diagnostics.record(
                t,
                LinearDynamics.perturbation_norm(profile, zeta, zeta_t),
                _linear_energy(pencil, zeta, zeta_t),
                profile.radius * (1.0 + zeta[-1]),
                float(np.max(np.abs(sig))),
            )

        sample()
        for k in range(1, n_steps + 1):
            half = zeta_t + 0.5 * dt * acc
            zeta = zeta + dt * half
            acc = accel(zeta)
            zeta_t = half + 0.5 * dt * acc
            t = initial.time + k * dt
            if k % stride == 0 or k == n_steps:
                sample()
        diagnostics.steps = n_steps

        if np.any(zeta):
            logger.debug(f"Robin defect at t={t:.6g}: {robin_defect(zeta, profile.grid):.3e}")
        final = LinearState(grid=initial.grid, zeta=zeta, zeta_t=zeta_t,
                            sigma=LinearDynamics.sigma(zeta, y), time=t)
        return diagnostics, final


def linear_energy(pencil: AssembledPencil, state: LinearState) -> float:
    """1/2 zeta_t^T M zeta_t + 1/2 zeta^T A zeta"""
    return _linear_energy(pencil, state.zeta, state.zeta_t)


def _linear_energy(pencil: AssembledPencil, zeta: np.ndarray, zeta_t: np.ndarray) -> float:
    return 0.5 * pencil.mass.quadratic_form(zeta_t) + 0.5 * pencil.stiffness.quadratic_form(zeta)


def measure_growth_rate(diagnostics: Diagnostics, lo: Optional[float] = None, hi: Optional[float] = None) -> float:
    """
    Slope of log(norm) against t over samples with lo <= norm <= hi
    (default window: ten times the initial norm up to settings.theta0/10).
    """
    t = np.asarray(diagnostics.t)
    norm = np.asarray(diagnostics.norm)
    lo = lo if lo is not None else 10.0 * norm[0]
    hi = hi if hi is not None else settings.theta0 / 10.0
    window = (norm >= lo) & (norm <= hi)
    slope, _, _ = Numerics.fit_linear(t[window], np.log(norm[window]))
    return slope


# ============================================================================
# Escape experiment
# ============================================================================

def _crossing_time(t: Sequence[float], norm: Sequence[float], level: float) -> Optional[float]:
    """First time the norm reaches `level`, interpolated in log(norm)"""
    for k in range(1, len(norm)):
        if norm[k] >= level > norm[k - 1]:
            a, b = math.log(norm[k - 1]), math.log(norm[k])
            return t[k - 1] + (t[k] - t[k - 1]) * (math.log(level) - a) / (b - a)
    if norm and norm[0] >= level:
        return t[0]
    return None


def _escape_run(task) -> Dict:
    """Evolve one seeded star until its norm passes the highest threshold"""
    profile, state, dt, levels, t_max, artificial_viscosity = task
    diagnostics = LagrangianDynamics.evolve(
        state, profile, t_max, sample_dt=dt, dt=dt,
        artificial_viscosity=artificial_viscosity, stop_norm=max(levels),
    )
    crossings = {}
    for level in levels:
        time = _crossing_time(diagnostics.t, diagnostics.norm, level)
        if time is not None:
            crossings[level] = time
    return {"status": diagnostics.status, "crossings": crossings}


def _linear_remainders(
    scheme: LagrangianScheme,
    eta: np.ndarray,
    vel: np.ndarray,
    direction: np.ndarray,
    direction_vel: np.ndarray,
    deltas: Sequence[float],
    dt: float,
    n_steps: int,
) -> List[float]:
    """
    Run the batch [0, d_1, d_2, ...] in lockstep with the linearized trajectory
    L started from (direction, direction_vel), and track for each d the largest
    norm of s(d) - s(0) - d L. L is the tangent flow of the same scheme about
    the equilibrium, so the remainder is the leading nonlinear correction.
    """
    labels = scheme.labels
    acc = scheme.acceleration(eta, vel)
    xi, xi_vel = direction.copy(), direction_vel.copy()
    xi_acc = scheme.linearized_acceleration(labels, xi)
    volume0 = scheme.cell_volume0
    worst = [0.0] * len(deltas)
    t = 0.0
    for k in range(1, n_steps + 1):
        eta, vel, acc = scheme.kick_drift_kick(eta, vel, acc, dt, t)
        half = xi_vel + 0.5 * dt * xi_acc
        xi = xi + dt * half
        xi_acc = scheme.linearized_acceleration(labels, xi)
        xi_vel = half + 0.5 * dt * xi_acc
        t = k * dt
        f = scheme.density(eta)
        f_lin = scheme.linearized_density(labels, xi)
        for j, d in enumerate(deltas):
            f_rem = f[j + 1] - f[0] - d * f_lin
            v_rem = vel[j + 1] - vel[0] - d * xi_vel
            v2 = 0.5 * (v_rem[:-1] ** 2 + v_rem[1:] ** 2)
            value = math.sqrt(FOUR_PI * float(np.sum((v2 + f_rem ** 2) * volume0)))
            worst[j] = max(worst[j], value)
    return worst


def delta_squared_ratio(
    profile: StarProfile,
    mode: ModeResult,
    delta: float,
    small_delta: Optional[float] = None,
    t_end: Optional[float] = None,
    cfl: Optional[float] = None,
    theta0: Optional[float] = None,
) -> Tuple[float, float, float]:
    """
    Largest of |nonlinear - delta * linearized| over [0, t_end] for delta and
    small_delta (default delta/2) and their ratio, about (delta/small_delta)^2.
    t_end defaults to the time the delta run needs to reach theta0/10.
    """
    small_delta = small_delta if small_delta is not None else 0.5 * delta
    theta0 = theta0 if theta0 is not None else settings.theta0
    if mode.mu0 is None:
        raise InvalidParameterError(f"mode is stable (mu*={mode.mu_star:.6g}); no correction to measure")
    if not (0.0 < small_delta < delta):
        raise InvalidParameterError(f"need 0 < small_delta < delta, got {small_delta} and {delta}")
    base = LagrangianDynamics.init_equilibrium(profile, balanced=True)
    scheme = LagrangianScheme(profile, base.cell_rho0, artificial_viscosity=False)
    dt = (cfl if cfl is not None else settings.cfl) * scheme.stable_dt(base.eta)
    if t_end is None:
        if not delta < theta0 / 10.0:
            raise InvalidParameterError(f"delta={delta:.3g} must stay below theta0/10={theta0 / 10.0:.3g}")
        t_end = escape_time(delta, theta0 / 10.0, mode.mu0)
    n_steps = max(1, math.ceil(t_end / dt))

    states = [_seeded_arrays(profile, mode, d) for d in (0.0, delta, small_delta)]
    eta = np.stack([s[0] for s in states])
    vel = np.stack([s[1] for s in states])
    y = profile.nodes
    unit = seed_amplitude(profile, mode, delta) / delta
    direction, direction_vel = y * unit * mode.chi, y * unit * math.sqrt(mode.mu0) * mode.chi
    big, small = _linear_remainders(scheme, eta, vel, direction, direction_vel, (delta, small_delta), dt, n_steps)
    ratio = big / small if small > 0 else float("inf")
    logger.info(f"delta^2 check: delta={delta:.3g}, correction={big:.3e}, "
                f"delta'={small_delta:.3g}, correction={small:.3e}, ratio={ratio:.3f}")
    return big, small, ratio


def _seeded_arrays(profile: StarProfile, mode: ModeResult, delta: float) -> Tuple[np.ndarray, np.ndarray]:
    y = profile.nodes
    amplitude = seed_amplitude(profile, mode, delta)
    return y * (1.0 + amplitude * mode.chi), y * amplitude * math.sqrt(mode.mu0) * mode.chi


def escape_experiment(
    profile: StarProfile,
    mode: ModeResult,
    deltas: Sequence[float],
    theta0: Optional[float] = None,
    jobs: Optional[int] = None,
    cfl: Optional[float] = None,
    artificial_viscosity: Optional[bool] = None,
    delta_sq: bool = True,
) -> EscapeResult:
    """
    For each delta, seed the growing mode, evolve until the perturbation norm
    reaches theta0 and record the crossing time. The times are fitted against
    log(1/delta); the predicted slope is 1/sqrt(mu0). Runs that disrupt first
    are flagged and left out of the fit.
    """
    theta0 = theta0 if theta0 is not None else settings.theta0
    jobs = jobs or settings.jobs
    if mode.mu0 is None:
        raise InvalidParameterError(f"mode is stable (mu*={mode.mu_star:.6g}); no escape to measure")
    deltas = sorted({float(d) for d in deltas}, reverse=True)
    if any(not (0.0 < d < theta0) for d in deltas):
        raise InvalidParameterError(f"every delta must satisfy 0 < delta < theta0={theta0}")

    base = LagrangianDynamics.init_equilibrium(profile, balanced=True)
    scheme = LagrangianScheme(profile, base.cell_rho0, artificial_viscosity=artificial_viscosity)
    dt = (cfl if cfl is not None else settings.cfl) * scheme.stable_dt(base.eta)
    levels = [theta0 / 10.0, theta0, theta0 * 10.0]

    tasks = []
    for d in deltas:
        state = LagrangianDynamics.seed_mode(profile, mode, d, balanced=True)
        t_max = 3.0 * escape_time(d, theta0, mode.mu0) + 10.0 * dt
        tasks.append((profile, state, dt, levels, t_max, artificial_viscosity))
    logger.info(f"🚀 Escape experiment: {len(deltas)} deltas, theta0={theta0:.3g}, dt={dt:.3e}, jobs={jobs}")
    if jobs > 1 and len(tasks) > 1:
        with mp.Pool(processes=min(jobs, len(tasks))) as pool:
            outcomes = pool.map(_escape_run, tasks)
    else:
        outcomes = [_escape_run(task) for task in tasks]

    runs: List[EscapeRun] = []
    for d, outcome in zip(deltas, outcomes):
        measured = outcome["crossings"].get(theta0)
        status = "ok" if measured is not None else (
            "disrupted" if outcome["status"] == "disrupted" else "unreached"
        )
        if status != "ok":
            logger.warning(f"⚠️  delta={d:.3g}: {status} before reaching theta0; excluded from the fit")
        runs.append(EscapeRun(
            delta=d,
            measured_time=measured,
            predicted_time=escape_time(d, theta0, mode.mu0),
            status=status,
            crossings={f"{level:.6g}": time for level, time in outcome["crossings"].items()},
        ))

    predicted_slope = 1.0 / math.sqrt(mode.mu0)
    result = EscapeResult(theta0=theta0, mu0=mode.mu0, runs=runs, predicted_slope=predicted_slope)
    usable = [r for r in runs if r.status == "ok"]
    if len(usable) >= 2:
        slope, intercept, _ = Numerics.fit_linear(
            [math.log(1.0 / r.delta) for r in usable], [r.measured_time for r in usable]
        )
        result.slope, result.intercept = slope, intercept
        result.relative_slope_error = abs(slope - predicted_slope) / predicted_slope
        logger.info(f"Escape fit: slope={slope:.6g}, predicted={predicted_slope:.6g}, "
                    f"relative error={result.relative_slope_error:.2%}")
    else:
        logger.warning("⚠️  fewer than two runs reached theta0; no escape-time fit")

    for level in (levels[0], levels[2]):
        key = f"{level:.6g}"
        points = [(math.log(1.0 / r.delta), r.crossings[key]) for r in runs if key in r.crossings]
        if len(points) >= 2:
            s, _, _ = Numerics.fit_linear([p[0] for p in points], [p[1] for p in points])
            result.theta0_sensitivity[key] = s

    if delta_sq:
        for big, small in zip(deltas, deltas[1:]):
            run = next(r for r in runs if r.delta == big)
            window = run.crossings.get(f"{levels[0]:.6g}")
            if window is None:
                continue
            c_big, c_small, ratio = delta_squared_ratio(profile, mode, big, small, t_end=window, cfl=cfl, theta0=theta0)
            result.delta_sq_ratios.append(ratio / (big / small) ** 2)
    return result


# ============================================================================
# Convenience functions
# ============================================================================

def init_equilibrium(profile: StarProfile, balanced: bool = False) -> LagrangianState:
    return LagrangianDynamics.init_equilibrium(profile, balanced)


def seed_mode(profile: StarProfile, mode: ModeResult, delta: float, balanced: bool = False) -> LagrangianState:
    return LagrangianDynamics.seed_mode(profile, mode, delta, balanced)


def acceleration(state: LagrangianState, profile: StarProfile, artificial_viscosity: Optional[bool] = None) -> np.ndarray:
    return LagrangianDynamics.acceleration(state, profile, artificial_viscosity)


def step(state: LagrangianState, profile: StarProfile, dt: float) -> LagrangianState:
    return LagrangianDynamics.step(state, profile, dt)


def evolve(state: LagrangianState, profile: StarProfile, t_end: float, sample_dt: float, **kwargs) -> Diagnostics:
    return LagrangianDynamics.evolve(state, profile, t_end, sample_dt, **kwargs)


def evolve_linearized(profile: StarProfile, initial: LinearState, t_end: float, dt: Optional[float] = None,
                      **kwargs) -> Tuple[Diagnostics, LinearState]:
    return LinearDynamics.evolve_linearized(profile, initial, t_end, dt, **kwargs)


def perturbation_norm(state: LagrangianState, profile: StarProfile) -> float:
    return float(_scheme_for(state, profile).perturbation_norm(state.eta, state.vel))


def total_energy(state: LagrangianState, profile: StarProfile) -> float:
    return float(_scheme_for(state, profile).total_energy(state.eta, state.vel))
