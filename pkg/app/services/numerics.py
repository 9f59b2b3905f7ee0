"""
Numerical Kernels Service.
Quadrature, RK4 stepping, event bisection, tridiagonal inertia and log-log fits
shared by every solver. All functions are pure.
"""

import math
import logging
from typing import Callable, List, NamedTuple, Sequence, Tuple

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from app.core.exceptions import (
    BracketError,
    ConvergenceError,
    InsufficientDataError,
    InvalidParameterError,
    ZeroPivotError,
)
from app.schemas.grid import RadialGrid, TridiagonalSymmetric

logger = logging.getLogger(__name__)


class LDLFactor(NamedTuple):
    """A = L D L^T with unit lower bidiagonal L"""
    pivots: np.ndarray
    multipliers: np.ndarray


class Numerics:
    """Deterministic kernels; stateless"""

    @staticmethod
    def cumulative_trapezoid(samples: np.ndarray, grid: RadialGrid) -> np.ndarray:
        """Running trapezoid integral of `samples` over the grid, starting at 0"""
        samples = np.asarray(samples, dtype=float)
        if samples.shape != grid.nodes.shape:
            raise InvalidParameterError(
                f"samples length {samples.size} does not match grid length {grid.size}"
            )
        out = np.zeros_like(samples)
        out[1:] = np.cumsum(0.5 * grid.widths * (samples[1:] + samples[:-1]))
        return out

    @staticmethod
    def rk4_step(
        state: np.ndarray,
        derivative: Callable[[float, np.ndarray], np.ndarray],
        y: float,
        h: float,
    ) -> np.ndarray:
        """Classical fourth-order Runge-Kutta update from y to y + h"""
        if not h > 0:
            raise InvalidParameterError(f"step must be positive, got h={h}")
        state = np.asarray(state, dtype=float)
        k1 = np.asarray(derivative(y, state), dtype=float)
        k2 = np.asarray(derivative(y + 0.5 * h, state + 0.5 * h * k1), dtype=float)
        k3 = np.asarray(derivative(y + 0.5 * h, state + 0.5 * h * k2), dtype=float)
        k4 = np.asarray(derivative(y + h, state + h * k3), dtype=float)
        if not (np.all(np.isfinite(k1)) and np.all(np.isfinite(k2))
                and np.all(np.isfinite(k3)) and np.all(np.isfinite(k4))):
            raise ConvergenceError(f"non-finite derivative in RK4 step at y={y:.6g}, h={h:.3g}")
        return state + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    @staticmethod
    def bisect_event(f: Callable[[float], float], lo: float, hi: float, tol: float) -> float:
        """
        Root of f in [lo, hi] by bisection.

        Args:
            f: Scalar function with opposite signs at lo and hi
            lo, hi: Bracket ends
            tol: Absolute width at which bisection stops

        Returns:
            Midpoint of the final bracket (exact endpoint if f vanishes there)
        """
        if not tol > 0:
            raise InvalidParameterError(f"bisection tolerance must be positive, got {tol}")
        f_lo = f(lo)
        f_hi = f(hi)
        if f_lo == 0.0:
            return lo
        if f_hi == 0.0:
            return hi
        if np.sign(f_lo) == np.sign(f_hi):
            raise BracketError(
                f"no sign change on [{lo:.6g}, {hi:.6g}]: f(lo)={f_lo:.3g}, f(hi)={f_hi:.3g}"
            )
        # float bisection terminates after at most ~1100 halvings
        for _ in range(2000):
            if hi - lo <= tol:
                break
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            f_mid = f(mid)
            if f_mid == 0.0:
                return mid
            if np.sign(f_mid) == np.sign(f_lo):
                lo, f_lo = mid, f_mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    @staticmethod
    def ldl_inertia(matrix: TridiagonalSymmetric) -> Tuple[LDLFactor, int]:
        """
        LDL^T of a symmetric tridiagonal matrix without pivoting.

        The number of negative pivots equals the number of negative eigenvalues
        (Sylvester's law of inertia). Raises ZeroPivotError on an exact zero
        pivot; callers perturb their shift and retry.
        """
        a = matrix.diagonal.tolist()
        b = matrix.off_diagonal.tolist()
        n = len(a)
        pivots = [0.0] * n
        multipliers = [0.0] * max(n - 1, 0)
        negatives = 0
        d = a[0]
        for i in range(n):
            if i > 0:
                l = b[i - 1] / pivots[i - 1]
                multipliers[i - 1] = l
                d = a[i] - l * b[i - 1]
            if d == 0.0:
                raise ZeroPivotError(f"zero pivot at row {i}", index=i)
            if d < 0.0:
                negatives += 1
            pivots[i] = d
        return LDLFactor(np.array(pivots), np.array(multipliers)), negatives

    @staticmethod
    def fit_loglog(points: Sequence[Tuple[float, float]]) -> Tuple[float, float, float]:
        """
        Least-squares line through (log x, log y).

        Returns:
            (slope, intercept, residual) with natural-log intercept and RMS residual
        """
        points = list(points)
        if len(points) < 2:
            raise InsufficientDataError(f"need at least 2 points for a fit, got {len(points)}")
        data = np.asarray(points, dtype=float)
        if np.any(data <= 0) or not np.all(np.isfinite(data)):
            raise InvalidParameterError("log-log fit needs strictly positive finite data")
        return Numerics.fit_linear(np.log(data[:, 0]), np.log(data[:, 1]))

    @staticmethod
    def fit_linear(x: np.ndarray, y: np.ndarray) -> Tuple[float, float, float]:
        """Least-squares line y = slope * x + intercept with RMS residual"""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.size < 2 or np.ptp(x) == 0.0:
            raise InsufficientDataError("need at least 2 distinct abscissae for a fit")
        slope, intercept = np.polyfit(x, y, 1)
        residual = math.sqrt(float(np.mean((y - (slope * x + intercept)) ** 2)))
        return float(slope), float(intercept), residual

    @staticmethod
    def hermite_resample(x: np.ndarray, values: np.ndarray, slopes: np.ndarray, x_new: np.ndarray) -> np.ndarray:
        """
        Cubic Hermite interpolation through samples with known derivatives.
        Fourth-order accurate when the slopes are exact; outside [x0, xn] gives nan.
        """
        return CubicHermiteSpline(x, values, slopes, extrapolate=False)(x_new)

    @staticmethod
    def parabolic_peak(x: np.ndarray, values: np.ndarray, i: int) -> Tuple[float, float]:
        """Vertex of the parabola through the samples around index i"""
        if i <= 0 or i >= len(values) - 1:
            return float(values[i]), float(x[i])
        x0, x1, x2 = x[i - 1], x[i], x[i + 1]
        f0, f1, f2 = values[i - 1], values[i], values[i + 1]
        denom = (x0 - x1) * (x0 - x2) * (x1 - x2)
        a = (x2 * (f1 - f0) + x1 * (f0 - f2) + x0 * (f2 - f1)) / denom
        b = (x2 ** 2 * (f0 - f1) + x1 ** 2 * (f2 - f0) + x0 ** 2 * (f1 - f2)) / denom
        if a >= 0:
            return float(f1), float(x1)
        xv = -b / (2 * a)
        if not (x0 <= xv <= x2):
            return float(f1), float(x1)
        c = f1 - a * x1 ** 2 - b * x1
        return float(a * xv ** 2 + b * xv + c), float(xv)

    @staticmethod
    def geometric_ratio(radius: float, n: int, first_spacing: float, tol: float = 1e-14) -> float:
        """
        Ratio q of a geometric grid of n cells on [0, radius] whose first cell
        has width `first_spacing`. Returns 1 when a uniform grid is already fine enough.
        """
        if not (0 < first_spacing < radius):
            raise InvalidParameterError(f"first spacing must lie in (0, R), got {first_spacing}")
        if first_spacing >= radius / n:
            return 1.0

        # work in s = log q; spacing(s) = R expm1(s) / expm1(n s) decreases in s
        def excess(s: float) -> float:
            return (math.log(radius) + math.log(math.expm1(s))
                    - math.log(math.expm1(n * s)) - math.log(first_spacing))

        lo = 1e-12
        hi = 1.0 / n
        while excess(hi) > 0:
            hi *= 2.0
            if hi > 50.0:
                raise BracketError(f"no geometric ratio gives first spacing {first_spacing:.3g}")
        s = Numerics.bisect_event(excess, lo, hi, tol)
        return math.exp(s)


# ============================================================================
# Convenience functions
# ============================================================================

def cumulative_trapezoid(samples: np.ndarray, grid: RadialGrid) -> np.ndarray:
    return Numerics.cumulative_trapezoid(samples, grid)


def rk4_step(state, derivative, y: float, h: float) -> np.ndarray:
    return Numerics.rk4_step(state, derivative, y, h)


def bisect_event(f, lo: float, hi: float, tol: float) -> float:
    return Numerics.bisect_event(f, lo, hi, tol)


def ldl_inertia(matrix: TridiagonalSymmetric) -> Tuple[LDLFactor, int]:
    return Numerics.ldl_inertia(matrix)


def fit_loglog(points: Sequence[Tuple[float, float]]) -> Tuple[float, float, float]:
    return Numerics.fit_loglog(points)


def fit_linear(x, y) -> Tuple[float, float, float]:
    return Numerics.fit_linear(x, y)


def hermite_resample(x, values, slopes, x_new) -> np.ndarray:
    return Numerics.hermite_resample(x, values, slopes, x_new)


__all__: List[str] = [
    "Numerics",
    "LDLFactor",
    "cumulative_trapezoid",
    "rk4_step",
    "bisect_event",
    "ldl_inertia",
    "fit_loglog",
    "fit_linear",
    "hermite_resample",
]
