"""
Pydantic schemas for the time-dependent problems.
Nonlinear Lagrangian states, linearized states, diagnostics and escape results.
"""

from typing import Dict, List, Literal, Optional
import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from app.schemas.grid import RadialGrid

LinearMethod = Literal["finite_difference", "pencil"]


# ============================================================================
# Lagrangian State
# ============================================================================

class LagrangianState(BaseModel):
    """
    Flow map samples eta(y_i, t) and velocities v(y_i, t) at the labels y_i.

    Cells are [y_i, y_{i+1}]; cell_rho0 holds the equilibrium density averaged
    over each cell, so the cell masses never change.
    """
    grid: RadialGrid
    eta: np.ndarray
    vel: np.ndarray
    cell_rho0: np.ndarray = Field(..., description="Mass-averaged equilibrium density per cell")
    time: float = 0.0

    @field_validator('eta', 'vel', 'cell_rho0', mode='before')
    @classmethod
    def coerce_array(cls, v):
        return np.asarray(v, dtype=float)

    @model_validator(mode='after')
    def check_shapes(self):
        n = self.grid.size
        if self.eta.size != n or self.vel.size != n:
            raise ValueError(f"eta/vel must have {n} samples")
        if self.cell_rho0.size != n - 1:
            raise ValueError(f"cell_rho0 must have {n - 1} samples")
        if self.eta[0] != 0.0 or self.vel[0] != 0.0:
            raise ValueError("center node must stay at eta = 0 with v = 0")
        return self

    @property
    def labels(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def cell_volume0(self) -> np.ndarray:
        return np.diff(self.grid.nodes ** 3) / 3.0

    @property
    def cell_mass(self) -> np.ndarray:
        return 4.0 * np.pi * self.cell_rho0 * self.cell_volume0

    @property
    def jacobian(self) -> np.ndarray:
        """J = (eta_{i+1}^3 - eta_i^3) / (y_{i+1}^3 - y_i^3) per cell"""
        return np.diff(self.eta ** 3) / np.diff(self.grid.nodes ** 3)

    @property
    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.eta) > 0))

    class Config:
        arbitrary_types_allowed = True
        frozen = True


# ============================================================================
# Linear State
# ============================================================================

class LinearState(BaseModel):
    """zeta = (eta - y)/y, its time derivative, and the density diagnostic sigma"""
    grid: RadialGrid
    zeta: np.ndarray
    zeta_t: np.ndarray
    sigma: Optional[np.ndarray] = Field(None, description="log(rho/rho_bar) per cell")
    time: float = 0.0

    @field_validator('zeta', 'zeta_t', 'sigma', mode='before')
    @classmethod
    def coerce_array(cls, v):
        return None if v is None else np.asarray(v, dtype=float)

    @model_validator(mode='after')
    def check_shapes(self):
        n = self.grid.size
        if self.zeta.size != n or self.zeta_t.size != n:
            raise ValueError(f"zeta/zeta_t must have {n} samples")
        return self

    @property
    def velocity(self) -> np.ndarray:
        """v = y dzeta/dt"""
        return self.grid.nodes * self.zeta_t

    class Config:
        arbitrary_types_allowed = True
        frozen = True


# ============================================================================
# Diagnostics
# ============================================================================

class Diagnostics(BaseModel):
    """Time series sampled during an evolution"""
    t: List[float] = Field(default_factory=list)
    norm: List[float] = Field(default_factory=list)
    energy: List[float] = Field(default_factory=list)
    boundary_radius: List[float] = Field(default_factory=list)
    max_jacobian_dev: List[float] = Field(default_factory=list)
    status: str = Field("ok", description='"ok", "disrupted" or "escaped"')
    steps: int = 0
    dt: Optional[float] = None

    def record(self, t: float, norm: float, energy: float, boundary_radius: float, max_jacobian_dev: float):
        if self.t and t < self.t[-1]:
            raise ValueError("diagnostic time stamps must be monotone")
        self.t.append(float(t))
        self.norm.append(float(norm))
        self.energy.append(float(energy))
        self.boundary_radius.append(float(boundary_radius))
        self.max_jacobian_dev.append(float(max_jacobian_dev))

    def columns(self) -> Dict[str, List[float]]:
        return {
            "t": self.t,
            "norm": self.norm,
            "energy": self.energy,
            "boundary_radius": self.boundary_radius,
            "max_jacobian_dev": self.max_jacobian_dev,
        }


# ============================================================================
# Escape Experiment
# ============================================================================

class EscapeRun(BaseModel):
    """One delta of the escape experiment"""
    delta: float = Field(..., gt=0)
    measured_time: Optional[float] = None
    predicted_time: float
    status: str = Field("ok", description='"ok", "disrupted" or "unreached"')
    crossings: Dict[str, float] = Field(default_factory=dict, description="Crossing times of other threshold levels")


class EscapeResult(BaseModel):
    """Measured escape times and the fitted law T = slope * log(1/delta) + intercept"""
    theta0: float
    mu0: float
    runs: List[EscapeRun] = Field(default_factory=list)
    slope: Optional[float] = None
    intercept: Optional[float] = None
    predicted_slope: float
    relative_slope_error: Optional[float] = None
    delta_sq_ratios: List[float] = Field(default_factory=list, description="Correction(delta)/correction(delta/2)")
    theta0_sensitivity: Dict[str, float] = Field(default_factory=dict, description="Refitted slopes at other thresholds")
