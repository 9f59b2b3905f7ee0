"""
Pydantic schemas for equilibria.
Equation of state and liquid / gaseous star profiles.
"""

from typing import Optional
import numpy as np
from pydantic import BaseModel, Field, field_validator

from app.core.exceptions import ProfileInvariantError
from app.schemas.grid import RadialGrid


# ============================================================================
# Equation of State
# ============================================================================

class EquationOfState(BaseModel):
    """Polytropic law P = rho^gamma - 1 (K = C = 1)"""
    gamma: float = Field(..., ge=1.0, le=2.0, description="Adiabatic index")

    @property
    def isothermal(self) -> bool:
        return self.gamma == 1.0

    def pressure(self, rho):
        return np.power(rho, self.gamma) - 1.0

    def sound_speed_sq(self, rho):
        if self.isothermal:
            return np.ones_like(np.asarray(rho, dtype=float)) if np.ndim(rho) else 1.0
        return self.gamma * np.power(rho, self.gamma - 1.0)

    def internal_energy(self, rho):
        """Specific internal energy e with de/drho = P/rho^2"""
        if self.isothermal:
            return np.log(rho) + 1.0 / rho
        return np.power(rho, self.gamma - 1.0) / (self.gamma - 1.0) + 1.0 / rho

    def enthalpy(self, rho):
        """Specific enthalpy h with dh/drho = c_s^2/rho"""
        if self.isothermal:
            return np.log(rho)
        return self.gamma / (self.gamma - 1.0) * np.power(rho, self.gamma - 1.0)

    class Config:
        frozen = True


# ============================================================================
# Star Profile
# ============================================================================

class StarProfile(BaseModel):
    """
    Equilibrium density and enclosed mass sampled on a radial grid.

    Liquid stars end where rho = 1; gaseous references end at their density
    floor (or at the edge of their compact support).
    """
    gamma: float = Field(..., ge=1.0, le=2.0, description="Adiabatic index")
    kappa: float = Field(..., gt=0, description="Central density rho(0)")
    grid: RadialGrid
    rho: np.ndarray = Field(..., description="Density samples rho(y_i)")
    mass: np.ndarray = Field(..., description="Enclosed mass m(y_i) = 4 pi int_0^y s^2 rho ds")
    boundary_density: float = Field(1.0, gt=0, description="Density at the outer node")
    compact_support: bool = Field(False, description="Gaseous reference with compact support")
    support_radius: Optional[float] = Field(None, description="Extrapolated edge of a compact gaseous star")

    @field_validator('rho', 'mass', mode='before')
    @classmethod
    def coerce_array(cls, v):
        return np.asarray(v, dtype=float)

    @property
    def eos(self) -> EquationOfState:
        return EquationOfState(gamma=self.gamma)

    @property
    def radius(self) -> float:
        return self.grid.radius

    @property
    def nodes(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def n(self) -> int:
        return self.grid.size - 1

    @property
    def total_mass(self) -> float:
        return float(self.mass[-1])

    def check_invariants(self, strict: bool = True, boundary_tol: float = 1e-9) -> "StarProfile":
        """
        Raise ProfileInvariantError unless the samples describe an equilibrium:
        positive finite density, decreasing outwards (strictly when `strict`),
        rho[0] = kappa, rho[N] = boundary density, mass starting at 0 and nondecreasing.
        """
        rho, mass = self.rho, self.mass
        if rho.shape != self.nodes.shape or mass.shape != self.nodes.shape:
            raise ProfileInvariantError("rho/mass length does not match the grid")
        if not (np.all(np.isfinite(rho)) and np.all(np.isfinite(mass))):
            raise ProfileInvariantError("profile contains non-finite samples")
        if np.any(rho <= 0):
            raise ProfileInvariantError("density must stay positive")
        drho = np.diff(rho)
        if np.any(drho > 0) or (strict and np.any(drho >= 0)):
            raise ProfileInvariantError(f"density must decrease outwards (gamma={self.gamma}, kappa={self.kappa})")
        if abs(rho[0] - self.kappa) > 1e-12 * self.kappa:
            raise ProfileInvariantError(f"rho[0]={rho[0]!r} differs from kappa={self.kappa!r}")
        if abs(rho[-1] - self.boundary_density) > boundary_tol * max(1.0, self.boundary_density):
            raise ProfileInvariantError(f"rho[N]={rho[-1]!r} differs from boundary density {self.boundary_density!r}")
        if mass[0] != 0.0 or np.any(np.diff(mass) < 0):
            raise ProfileInvariantError("enclosed mass must start at 0 and be nondecreasing")
        return self

    def pressure_gradient(self) -> np.ndarray:
        """d_y rho^gamma from the steady relation: -rho m / y^2 (0 at the center)"""
        y = self.nodes
        grad = np.zeros_like(y)
        grad[1:] = -self.rho[1:] * self.mass[1:] / y[1:] ** 2
        return grad

    class Config:
        arbitrary_types_allowed = True
        frozen = True
