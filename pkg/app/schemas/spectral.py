"""
Pydantic schemas for the Sturm-Liouville eigenproblem.
"""

from typing import List, Optional
import numpy as np
from pydantic import BaseModel, Field, field_validator

from app.schemas.grid import RadialGrid, TridiagonalSymmetric


# ============================================================================
# Assembled Pencil
# ============================================================================

class AssembledPencil(BaseModel):
    """Stiffness A (potential and Robin term included) and mass M on a grid"""
    stiffness: TridiagonalSymmetric
    mass: TridiagonalSymmetric
    grid: RadialGrid
    gamma: Optional[float] = Field(None, description="Adiabatic index of the source profile")
    robin_coefficient: float = Field(0.0, description="3 gamma R^3 added to A[N, N]")
    lower_bound: Optional[float] = Field(None, description="Rigorous lower bound of the spectrum, when known")

    @property
    def size(self) -> int:
        return self.stiffness.size

    @property
    def radius(self) -> float:
        return self.grid.radius

    class Config:
        arbitrary_types_allowed = True
        frozen = True


# ============================================================================
# Mode Result
# ============================================================================

class ModeResult(BaseModel):
    """Lowest generalized eigenpair A chi = mu M chi"""
    mu_star: float = Field(..., description="Lowest eigenvalue; negative means linearly unstable")
    mu0: Optional[float] = Field(None, description="-mu_star when unstable")
    growth_rate: Optional[float] = Field(None, description="sqrt(mu0) when unstable")
    chi: np.ndarray = Field(..., description="Eigenfunction samples, ||chi||_M = 1, chi(R) >= 0")
    grid: RadialGrid
    residual: float = Field(..., ge=0, description="||A chi - mu M chi|| / ||M chi||")
    mu_lo: float = Field(..., description="Lower end of the certified bracket")
    mu_hi: float = Field(..., description="Upper end of the certified bracket")
    sign_changes: int = Field(0, ge=0, description="Interior sign changes of chi")
    higher_eigenvalues: List[float] = Field(default_factory=list, description="Next eigenvalues when count > 1")

    @field_validator('chi', mode='before')
    @classmethod
    def coerce_chi(cls, v):
        return np.asarray(v, dtype=float)

    @property
    def unstable(self) -> bool:
        return self.mu_star < 0

    @property
    def nodeless(self) -> bool:
        return self.sign_changes == 0

    def summary(self) -> dict:
        """JSON-friendly scalar fields"""
        return {
            "mu_star": self.mu_star,
            "mu0": self.mu0,
            "growth_rate": self.growth_rate,
            "unstable": self.unstable,
            "residual": self.residual,
            "mu_lo": self.mu_lo,
            "mu_hi": self.mu_hi,
            "nodeless": self.nodeless,
            "sign_changes": self.sign_changes,
            "higher_eigenvalues": list(self.higher_eigenvalues),
            "N": self.grid.size - 1,
        }

    class Config:
        arbitrary_types_allowed = True
        frozen = True
