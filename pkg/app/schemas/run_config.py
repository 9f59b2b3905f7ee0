"""
Pydantic schemas for command run configurations.

Every subcommand validates its parameters here before any computation starts;
a ValidationError names the failing field and the CLI exits with code 2.
"""

from typing import List, Literal, Optional
from pydantic import BaseModel, Field, field_validator, model_validator

from app.core.config import settings
from app.schemas.dynamics import LinearMethod


GAMMA_MAX = 4.0 / 3.0


def _check_gamma(v: float) -> float:
    if not (1.0 <= v < GAMMA_MAX):
        raise ValueError(f"gamma must lie in [1, 4/3), got {v}")
    return v


def _check_kappa(v: float) -> float:
    if not v > 1.0:
        raise ValueError(f"kappa must be > 1 (central density above the boundary density 1), got {v}")
    return v


# ============================================================================
# Shared blocks
# ============================================================================

class RunConfig(BaseModel):
    """Options every command accepts"""
    out_dir: str = Field(default_factory=lambda: settings.out_dir, description="Output root")
    out: Optional[str] = Field(None, description="Explicit output file (overrides out_dir naming)")
    jobs: int = Field(default_factory=lambda: settings.jobs, ge=1, description="Worker pool width")

    class Config:
        extra = "forbid"


class StarConfig(RunConfig):
    """A liquid star (gamma, kappa) on N + 1 nodes"""
    gamma: float
    kappa: float
    n: int = Field(default_factory=lambda: settings.grid_size, ge=16)
    geometric_ratio: Optional[float] = Field(default_factory=lambda: settings.geometric_ratio, gt=0)

    @field_validator('gamma')
    @classmethod
    def validate_gamma(cls, v):
        return _check_gamma(v)

    @field_validator('kappa')
    @classmethod
    def validate_kappa(cls, v):
        return _check_kappa(v)


# ============================================================================
# Command configs
# ============================================================================

class SteadyConfig(StarConfig):
    tol: float = Field(default_factory=lambda: settings.bisection_tol, gt=0)


class GaseousConfig(RunConfig):
    gamma: float
    n: int = Field(default_factory=lambda: settings.grid_size, ge=16)
    rho_floor: float = Field(default_factory=lambda: settings.gas_rho_floor, gt=0, lt=1)

    @field_validator('gamma')
    @classmethod
    def validate_gamma(cls, v):
        return _check_gamma(v)


class ModesConfig(RunConfig):
    """Either a profile CSV or (gamma, kappa, n)"""
    profile: Optional[str] = Field(None, description="Profile CSV written by `steady`")
    gamma: Optional[float] = None
    kappa: Optional[float] = None
    n: int = Field(default_factory=lambda: settings.grid_size, ge=16)
    geometric_ratio: Optional[float] = Field(default_factory=lambda: settings.geometric_ratio, gt=0)
    tol: float = Field(default_factory=lambda: settings.eig_tol, gt=0)
    count: int = Field(1, ge=1, le=16)

    @field_validator('gamma')
    @classmethod
    def validate_gamma(cls, v):
        return None if v is None else _check_gamma(v)

    @field_validator('kappa')
    @classmethod
    def validate_kappa(cls, v):
        return None if v is None else _check_kappa(v)

    @model_validator(mode='after')
    def check_source(self):
        if self.profile is None and (self.gamma is None or self.kappa is None):
            raise ValueError("either --profile or both --gamma and --kappa are required")
        return self


class RayleighConfig(ModesConfig):
    test: Literal["const", "444"] = Field("const", description="Test function")
    nu: float = Field(4.0, gt=0)
    a: Optional[float] = Field(None, gt=0, description="Exponent; defaults to the window midpoint")
    eps1: float = Field(0.0, ge=0)
    eps2: float = Field(0.0, ge=0)


class ScalingConfig(RunConfig):
    gamma: float
    kappa_min: float = 1e2
    kappa_max: float = 1e5
    points_per_decade: int = Field(default_factory=lambda: settings.kappa_points_per_decade, ge=1)
    n: Optional[int] = Field(None, ge=16, description="Fixed grid size; default grows with log10(kappa)")
    geometric_ratio: Optional[float] = Field(default_factory=lambda: settings.geometric_ratio, gt=0)
    tol: float = Field(default_factory=lambda: settings.eig_tol, gt=0)
    slope_tol: float = Field(default_factory=lambda: settings.slope_tol, gt=0)
    margin: float = Field(default_factory=lambda: settings.case3_margin, ge=0)

    @field_validator('gamma')
    @classmethod
    def validate_gamma(cls, v):
        return _check_gamma(v)

    @model_validator(mode='after')
    def check_range(self):
        _check_kappa(self.kappa_min)
        if self.kappa_max <= self.kappa_min:
            raise ValueError("kappa_max must exceed kappa_min")
        return self


class EvolveConfig(StarConfig):
    t_end: float = Field(1.0, gt=0)
    sample_dt: float = Field(0.01, gt=0)
    delta: float = Field(0.0, ge=0, description="Perturbation norm of the seeded growing mode; 0 evolves the equilibrium")
    cfl: float = Field(default_factory=lambda: settings.cfl, gt=0)
    artificial_viscosity: bool = Field(default_factory=lambda: settings.artificial_viscosity)


class LinearConfig(StarConfig):
    t_end: float = Field(1.0, gt=0)
    sample_dt: float = Field(0.01, gt=0)
    delta: float = Field(1.0, gt=0, description="Perturbation norm of the seeded eigenmode")
    cfl: float = Field(default_factory=lambda: settings.cfl, gt=0)
    method: LinearMethod = Field("finite_difference", description="finite_difference, or pencil for comparison")


class EscapeConfig(StarConfig):
    deltas: List[float] = Field(default_factory=lambda: [1e-4, 1e-5, 1e-6], min_length=2)
    theta0: float = Field(default_factory=lambda: settings.theta0, gt=0)
    cfl: float = Field(default_factory=lambda: settings.cfl, gt=0)
    artificial_viscosity: bool = Field(default_factory=lambda: settings.artificial_viscosity)

    @model_validator(mode='after')
    def check_deltas(self):
        if any(d <= 0 or d >= self.theta0 for d in self.deltas):
            raise ValueError(f"every delta must satisfy 0 < delta < theta0={self.theta0}")
        self.deltas = sorted(self.deltas, reverse=True)
        return self


class VerifyConfig(RunConfig):
    tolerance_scale: float = Field(1.0, ge=0, description="Multiplies every acceptance tolerance")
    only: Optional[List[str]] = Field(None, description="Subset of criterion IDs, e.g. AC1 AC3")
