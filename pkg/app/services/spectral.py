"""
Spectral Service.
P1 finite-element discretization of the radial Sturm-Liouville operator with
its Robin boundary term, Rayleigh quotients and the lowest eigenpair by
inertia bisection followed by inverse iteration.
"""

import math
import logging
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.integrate import quad
from scipy.linalg import LinAlgError, solve_banded

from app.core.config import settings
from app.core.exceptions import (
    BracketError,
    ConvergenceError,
    InvalidParameterError,
    ProfileInvariantError,
    ZeroPivotError,
)
from app.schemas.grid import RadialGrid, TridiagonalSymmetric
from app.schemas.spectral import AssembledPencil, ModeResult
from app.schemas.star import StarProfile
from app.services.numerics import Numerics
from app.services.steady_state import SIX_FIFTHS, explicit_profile_six_fifths

logger = logging.getLogger(__name__)

M_NORM_FLOOR = 1e-300


def _linear_weight_element(h: np.ndarray, qa: np.ndarray, qb: np.ndarray):
    """
    Element matrices of int q phi_i phi_j for q linear on the element:
    h/12 [[3qa + qb, qa + qb], [qa + qb, qa + 3qb]].
    """
    diag_a = h * (3.0 * qa + qb) / 12.0
    diag_b = h * (qa + 3.0 * qb) / 12.0
    off = h * (qa + qb) / 12.0
    return diag_a, diag_b, off


def _assemble_tridiagonal(n_nodes: int, diag_a, diag_b, off, boundary: float = 0.0) -> TridiagonalSymmetric:
    diagonal = np.zeros(n_nodes)
    diagonal[:-1] += diag_a
    diagonal[1:] += diag_b
    diagonal[-1] += boundary
    return TridiagonalSymmetric(diagonal=diagonal, off_diagonal=off)


class SpectralSolver:
    """Generalized symmetric tridiagonal eigenproblem A chi = mu M chi"""

    @staticmethod
    def assemble(profile: StarProfile) -> AssembledPencil:
        """
        Stiffness from gamma rho^gamma y^4 (chi')^2 (trapezoid per element),
        potential (4 - 3 gamma) y^3 d_y(rho^gamma) = -(4 - 3 gamma) y rho m and
        weight y^4 rho (exact for their linear interpolants), plus 3 gamma R^3 at
        the boundary node.
        """
        profile.check_invariants(strict=False)
        gamma = profile.gamma
        y = profile.nodes
        h = profile.grid.widths
        rho, m = profile.rho, profile.mass
        n_nodes = y.size

        g = gamma * rho ** gamma * y ** 4
        k = 0.5 * (g[:-1] + g[1:]) / h
        q = -(4.0 - 3.0 * gamma) * y * rho * m
        w = y ** 4 * rho

        qa, qb, qo = _linear_weight_element(h, q[:-1], q[1:])
        wa, wb, wo = _linear_weight_element(h, w[:-1], w[1:])

        robin = 3.0 * gamma * profile.radius ** 3
        stiffness = _assemble_tridiagonal(n_nodes, k + qa, k + qb, -k + qo, boundary=robin)
        mass = _assemble_tridiagonal(n_nodes, wa, wb, wo)

        try:
            _, negatives = Numerics.ldl_inertia(mass)
        except ZeroPivotError as e:
            raise ProfileInvariantError(f"mass matrix is singular (row {e.index})")
        if negatives:
            raise ProfileInvariantError(f"mass matrix is not positive definite ({negatives} negative pivots)")

        # q/w = -(4 - 3 gamma) m/y^3 >= -(4 - 3 gamma)(4 pi/3) max(rho) node by node
        lower_bound = -(4.0 - 3.0 * gamma) * (4.0 * math.pi / 3.0) * float(np.max(rho)) * 1.01 - 1.0

        logger.debug(f"Assembled pencil: gamma={gamma}, kappa={profile.kappa:.6g}, N={n_nodes - 1}")
        return AssembledPencil(
            stiffness=stiffness,
            mass=mass,
            grid=profile.grid,
            gamma=gamma,
            robin_coefficient=robin,
            lower_bound=lower_bound,
        )

    @staticmethod
    def rayleigh_quotient(pencil: AssembledPencil, chi: np.ndarray) -> float:
        """(chi^T A chi) / (chi^T M chi)"""
        chi = np.asarray(chi, dtype=float)
        if chi.shape != (pencil.size,):
            raise InvalidParameterError(f"chi must have {pencil.size} samples, got {chi.shape}")
        denom = pencil.mass.quadratic_form(chi)
        if not denom > M_NORM_FLOOR:
            raise InvalidParameterError(f"chi is M-null (chi^T M chi = {denom!r})")
        return pencil.stiffness.quadratic_form(chi) / denom

    @staticmethod
    def count_below(pencil: AssembledPencil, sigma: float, attempts: int = 8) -> int:
        """Number of eigenvalues below sigma; perturbs sigma on an exact zero pivot"""
        shift = sigma
        for k in range(attempts):
            try:
                _, negatives = Numerics.ldl_inertia(pencil.stiffness.shifted(shift, pencil.mass))
                return negatives
            except ZeroPivotError:
                shift = sigma + (k + 1) * 4.0 * np.finfo(float).eps * max(1.0, abs(sigma))
                logger.debug(f"zero pivot at shift {sigma!r}, retrying at {shift!r}")
        raise BracketError(f"repeated zero pivots near shift {sigma!r}")

    @staticmethod
    def _bisect_eigenvalue(pencil: AssembledPencil, index: int, lo: float, hi: float, tol: float) -> Tuple[float, float]:
        """Shrink [lo, hi] around the index-th eigenvalue (1-based) until its width meets tol"""
        for _ in range(400):
            mid = 0.5 * (lo + hi)
            if hi - lo <= tol * max(1.0, abs(mid)) or mid <= lo or mid >= hi:
                break
            if SpectralSolver.count_below(pencil, mid) >= index:
                hi = mid
            else:
                lo = mid
        logger.debug(f"eigenvalue #{index} bracketed in [{lo!r}, {hi!r}]")
        return lo, hi

    @staticmethod
    def _lower_bracket(pencil: AssembledPencil, start: float) -> float:
        lo = start
        scale = max(1.0, abs(start))
        for k in range(settings.max_bracket_expansions):
            if SpectralSolver.count_below(pencil, lo) == 0:
                return lo
            lo = start - 2.0 ** (k + 1) * scale
        raise BracketError(f"no lower eigenvalue bracket found down to {lo:.6g}")

    @staticmethod
    def _upper_bracket(pencil: AssembledPencil, start: float, index: int) -> float:
        hi = start
        scale = max(1.0, abs(start))
        for k in range(settings.max_bracket_expansions):
            if SpectralSolver.count_below(pencil, hi) >= index:
                return hi
            hi = start + 2.0 ** k * scale
        raise BracketError(f"no upper bracket for eigenvalue #{index} up to {hi:.6g}")

    @staticmethod
    def _inverse_iteration(pencil: AssembledPencil, sigma: float, iterations: int, start: np.ndarray) -> np.ndarray:
        shifted = pencil.stiffness.shifted(sigma, pencil.mass).banded()
        x = start
        for _ in range(iterations):
            try:
                x = solve_banded((1, 1), shifted, pencil.mass.matvec(x))
            except (LinAlgError, ValueError) as e:
                raise ConvergenceError(f"inverse iteration failed at shift {sigma!r}: {e}")
            x = x / math.sqrt(pencil.mass.quadratic_form(x))
        return x

    @staticmethod
    def lowest_eigenpair(
        pencil: AssembledPencil,
        tol: Optional[float] = None,
        count: int = 1,
        iterations: Optional[int] = None,
    ) -> ModeResult:
        """
        Lowest eigenpair of A chi = mu M chi.

        The eigenvalue is bracketed by Sylvester inertia of A - sigma M (lower end
        from the pencil's potential bound, upper end from the Rayleigh quotient
        of chi = 1), bisected to tol * max(1, |mu|) and polished by inverse
        iteration. chi is M-normalized with chi(R) >= 0.
        """
        tol = tol if tol is not None else settings.eig_tol
        iterations = iterations if iterations is not None else settings.inverse_iterations
        n = pencil.size
        ones = np.ones(n)

        q1 = SpectralSolver.rayleigh_quotient(pencil, ones)
        hi = SpectralSolver._upper_bracket(pencil, q1 + 1e-8 * max(1.0, abs(q1)), 1)
        start = pencil.lower_bound if pencil.lower_bound is not None else q1 - max(1.0, abs(q1))
        lo = SpectralSolver._lower_bracket(pencil, min(start, hi - 1.0))
        mu_lo, mu_hi = SpectralSolver._bisect_eigenvalue(pencil, 1, lo, hi, tol)

        # just below the spectrum: A - sigma M stays positive definite
        sigma = mu_lo - max(mu_hi - mu_lo, tol * max(1.0, abs(mu_lo)))
        chi = SpectralSolver._inverse_iteration(pencil, sigma, iterations, ones / math.sqrt(pencil.mass.quadratic_form(ones)))
        mu_star = SpectralSolver.rayleigh_quotient(pencil, chi)
        residual = SpectralSolver.eigen_residual(pencil, chi, mu_star)
        limit = settings.residual_tol * max(1.0, abs(mu_star))
        extra = 0
        while residual > limit and extra < 3:
            chi = SpectralSolver._inverse_iteration(pencil, sigma, 1, chi)
            mu_star = SpectralSolver.rayleigh_quotient(pencil, chi)
            residual = SpectralSolver.eigen_residual(pencil, chi, mu_star)
            extra += 1
        if residual > limit:
            raise ConvergenceError(f"eigen-residual {residual:.3e} above {limit:.3e} after polishing")

        if chi[-1] < 0:
            chi = -chi
        changes = interior_sign_changes(chi)
        if changes:
            logger.warning(f"⚠️  lowest eigenfunction has {changes} interior sign change(s)")

        higher: List[float] = []
        for index in range(2, count + 1):
            top = SpectralSolver._upper_bracket(pencil, mu_hi + 1e-8 * max(1.0, abs(mu_hi)), index)
            a, b = SpectralSolver._bisect_eigenvalue(pencil, index, mu_lo, top, tol)
            higher.append(0.5 * (a + b))

        unstable = mu_star < 0
        result = ModeResult(
            mu_star=mu_star,
            mu0=-mu_star if unstable else None,
            growth_rate=math.sqrt(-mu_star) if unstable else None,
            chi=chi,
            grid=pencil.grid,
            residual=residual,
            mu_lo=mu_lo,
            mu_hi=mu_hi,
            sign_changes=changes,
            higher_eigenvalues=higher,
        )
        logger.info(
            f"Lowest eigenpair: mu*={mu_star:.12g} in [{mu_lo:.12g}, {mu_hi:.12g}], "
            f"residual={residual:.2e}, unstable={unstable}"
        )
        return result

    @staticmethod
    def eigen_residual(pencil: AssembledPencil, chi: np.ndarray, mu: float) -> float:
        """||A chi - mu M chi|| / ||M chi||"""
        m_chi = pencil.mass.matvec(chi)
        return float(np.linalg.norm(pencil.stiffness.matvec(chi) - mu * m_chi) / np.linalg.norm(m_chi))

    @staticmethod
    def growth_rate_of(profile: StarProfile, tol: Optional[float] = None, count: int = 1) -> ModeResult:
        """assemble -> lowest_eigenpair"""
        return SpectralSolver.lowest_eigenpair(SpectralSolver.assemble(profile), tol=tol, count=count)

    @staticmethod
    def test_function_444(profile: StarProfile, nu: float, a: float) -> float:
        """
        Rayleigh quotient of chi = b^-a on [0, b] and y^-a beyond, with
        b = nu kappa^-(1 - gamma/2).
        """
        if not (nu > 0 and a > 0):
            raise InvalidParameterError(f"nu and a must be positive, got nu={nu}, a={a}")
        y = profile.nodes
        b = nu * profile.kappa ** -(1.0 - profile.gamma / 2.0)
        if b < y[1]:
            raise InvalidParameterError(
                f"breakpoint {b:.3g} lies below the first grid node {y[1]:.3g}; refine the grid"
            )
        chi = np.where(y <= b, b ** -a, np.maximum(y, b) ** -a)
        return SpectralSolver.rayleigh_quotient(SpectralSolver.assemble(profile), chi)


# ============================================================================
# Diagnostics and closed forms
# ============================================================================

def interior_sign_changes(chi: np.ndarray, rel_floor: float = 1e-10) -> int:
    """Sign changes of chi, ignoring samples below rel_floor * max|chi|"""
    scale = float(np.max(np.abs(chi)))
    signs = np.sign(chi[np.abs(chi) > rel_floor * scale])
    return int(np.count_nonzero(signs[1:] != signs[:-1]))


def exponent_window(gamma: float, eps1: float = 0.0, eps2: float = 0.0) -> Optional[Tuple[float, float]]:
    """
    Exponents a for which the y^-a test function drives the quotient below
    -kappa^(gamma/2): 2 - 1/(2 - gamma) < a < sqrt((1-e2)^2/(1+e1)^gamma (6 - 4/(2 - gamma))).
    None when the window is empty.
    """
    if not (1.0 <= gamma < SIX_FIFTHS):
        raise InvalidParameterError(f"exponent window needs gamma in [1, 6/5), got {gamma}")
    if eps1 < 0 or eps2 < 0:
        raise InvalidParameterError("eps1 and eps2 must be nonnegative")
    a_lo = 2.0 - 1.0 / (2.0 - gamma)
    inner = (1.0 - eps2) ** 2 / (1.0 + eps1) ** gamma * (6.0 - 4.0 / (2.0 - gamma))
    a_hi = math.sqrt(inner) if inner > 0 else 0.0
    if a_lo >= a_hi:
        return None
    return a_lo, a_hi


def robin_defect(chi: np.ndarray, grid: RadialGrid) -> float:
    """|3 chi(R) + R chi'(R)| / max|chi| with a one-sided derivative"""
    derivative = (chi[-1] - chi[-2]) / grid.widths[-1]
    return float(abs(3.0 * chi[-1] + grid.radius * derivative) / np.max(np.abs(chi)))


def clamped_center_shift(pencil: AssembledPencil, tol: Optional[float] = None) -> float:
    """Relative change of mu* when the center node is removed (clamped to 0)"""
    free = SpectralSolver.lowest_eigenpair(pencil, tol=tol)
    clamped_pencil = AssembledPencil(
        stiffness=pencil.stiffness.submatrix(1),
        mass=pencil.mass.submatrix(1),
        grid=pencil.grid,
        gamma=pencil.gamma,
        robin_coefficient=pencil.robin_coefficient,
        lower_bound=pencil.lower_bound,
    )
    clamped = _lowest_on_submatrix(clamped_pencil, tol)
    return abs(clamped - free.mu_star) / max(1.0, abs(free.mu_star))


def _lowest_on_submatrix(pencil: AssembledPencil, tol: Optional[float]) -> float:
    tol = tol if tol is not None else settings.eig_tol
    ones = np.ones(pencil.size)
    q1 = pencil.stiffness.quadratic_form(ones) / pencil.mass.quadratic_form(ones)
    hi = SpectralSolver._upper_bracket(pencil, q1 + 1e-8 * max(1.0, abs(q1)), 1)
    start = pencil.lower_bound if pencil.lower_bound is not None else q1 - max(1.0, abs(q1))
    lo = SpectralSolver._lower_bracket(pencil, min(start, hi - 1.0))
    a, b = SpectralSolver._bisect_eigenvalue(pencil, 1, lo, hi, tol)
    return 0.5 * (a + b)


def six_fifths_closed_forms(kappa: float) -> Dict[str, float]:
    """
    Reference values of the gamma = 6/5 family from the explicit profile:
    <L1,1> and <1, y^4 rho 1> by adaptive quadrature, the large-kappa limit
    of <L1,1>, the bound it stays below, and the maximizer of m/y^2.
    """
    gamma = SIX_FIFTHS
    _, radius = explicit_profile_six_fifths(kappa, 0.0)
    a = kappa ** -0.4
    b = (2.0 * math.pi / 9.0) * kappa ** 0.4

    def rho(y: float) -> float:
        return (a + b * y * y) ** -2.5

    def d_rho_gamma(y: float) -> float:
        u = a + b * y * y
        return gamma * rho(y) ** (gamma - 1.0) * (-2.5 * u ** -3.5 * 2.0 * b * y)

    potential, _ = quad(lambda y: (4.0 - 3.0 * gamma) * y ** 3 * d_rho_gamma(y), 0.0, radius,
                        epsabs=0.0, epsrel=1e-13, limit=200)
    weight, _ = quad(lambda y: y ** 4 * rho(y), 0.0, radius, epsabs=0.0, epsrel=1e-13, limit=200)
    form = potential + 3.0 * gamma * radius ** 3
    return {
        "kappa": kappa,
        "radius": radius,
        "form_L11": form,
        "weight_11": weight,
        "q_const": form / weight,
        "form_limit": -3.0 * (4.0 - 3.0 * gamma) * (9.0 / (2.0 * math.pi)) ** 1.5 * math.pi / 16.0,
        "form_bound": -2.0 * (4.0 - 3.0 * gamma) * (9.0 / (8.0 * math.pi)) ** 1.5,
        "c1_argmax": 3.0 / (2.0 * math.sqrt(math.pi)) * kappa ** -0.4,
    }


# ============================================================================
# Convenience functions
# ============================================================================

def assemble(profile: StarProfile) -> AssembledPencil:
    return SpectralSolver.assemble(profile)


def rayleigh_quotient(pencil: AssembledPencil, chi) -> float:
    return SpectralSolver.rayleigh_quotient(pencil, chi)


def lowest_eigenpair(pencil: AssembledPencil, tol: Optional[float] = None, count: int = 1) -> ModeResult:
    return SpectralSolver.lowest_eigenpair(pencil, tol=tol, count=count)


def growth_rate_of(profile: StarProfile, tol: Optional[float] = None, count: int = 1) -> ModeResult:
    return SpectralSolver.growth_rate_of(profile, tol=tol, count=count)


def test_function_444(profile: StarProfile, nu: float, a: float) -> float:
    return SpectralSolver.test_function_444(profile, nu, a)
