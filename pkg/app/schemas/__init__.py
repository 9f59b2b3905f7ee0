"""
Schemas for the application.

This module exports the Pydantic models for the domain types and run configurations.
"""

from app.schemas.grid import RadialGrid, TridiagonalSymmetric
from app.schemas.star import EquationOfState, StarProfile
from app.schemas.spectral import AssembledPencil, ModeResult
from app.schemas.scaling import Case1FormFit, RegimeVerdict, ScalingRecord, case_for_gamma
from app.schemas.dynamics import Diagnostics, EscapeResult, EscapeRun, LagrangianState, LinearState
from app.schemas.verification import CriterionResult, VerificationReport
from app.schemas.run_config import (
    RunConfig,
    StarConfig,
    SteadyConfig,
    GaseousConfig,
    ModesConfig,
    RayleighConfig,
    ScalingConfig,
    EvolveConfig,
    LinearConfig,
    EscapeConfig,
    VerifyConfig,
)

__all__ = [
    # Containers
    "RadialGrid",
    "TridiagonalSymmetric",
    # Equilibria
    "EquationOfState",
    "StarProfile",
    # Spectral
    "AssembledPencil",
    "ModeResult",
    # Scaling
    "ScalingRecord",
    "RegimeVerdict",
    "Case1FormFit",
    "case_for_gamma",
    # Dynamics
    "LagrangianState",
    "LinearState",
    "Diagnostics",
    "EscapeRun",
    "EscapeResult",
    # Verification
    "CriterionResult",
    "VerificationReport",
    # Run configurations
    "RunConfig",
    "StarConfig",
    "SteadyConfig",
    "GaseousConfig",
    "ModesConfig",
    "RayleighConfig",
    "ScalingConfig",
    "EvolveConfig",
    "LinearConfig",
    "EscapeConfig",
    "VerifyConfig",
]
