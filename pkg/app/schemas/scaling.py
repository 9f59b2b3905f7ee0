"""
Pydantic schemas for kappa sweeps and regime verdicts.
"""

from typing import Dict, Optional
from pydantic import BaseModel, Field, model_validator


# ============================================================================
# Scaling Record
# ============================================================================

class ScalingRecord(BaseModel):
    """Per-kappa summary feeding the power-law fits"""
    kappa: float = Field(..., gt=1)
    N: int = Field(..., ge=16, description="Grid size used for this kappa")
    R_kappa: Optional[float] = Field(None, gt=0)
    mu_star: Optional[float] = None
    mu0: Optional[float] = Field(None, gt=0, description="Absent when stable")
    growth_rate: Optional[float] = None
    C1: Optional[float] = Field(None, ge=0, description="max m(y)/y^2")
    C1_argmax: Optional[float] = None
    q_const: Optional[float] = Field(None, description="Rayleigh quotient of chi = 1")
    form_L11: Optional[float] = Field(None, description="<L1, 1>")
    weight_11: Optional[float] = Field(None, description="<1, y^4 rho 1>")
    taylor_margin: Optional[float] = None
    status: str = Field("ok", description='"ok" or "failed: <detail>"')

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @property
    def unstable(self) -> bool:
        return self.ok and self.mu0 is not None


# ============================================================================
# Regime Verdict
# ============================================================================

class RegimeVerdict(BaseModel):
    """Outcome of the scaling-law checks for one gamma"""
    gamma: float
    case_id: int = Field(..., ge=1, le=3)
    slopes: Dict[str, float] = Field(default_factory=dict)
    residuals: Dict[str, float] = Field(default_factory=dict)
    checks: Dict[str, bool] = Field(default_factory=dict, description="Pass/fail per claim")
    c1_monotone: bool = True
    passed: bool = Field(False, alias="pass")

    @model_validator(mode='after')
    def check_case(self):
        if self.case_id != case_for_gamma(self.gamma):
            raise ValueError(f"case_id {self.case_id} inconsistent with gamma={self.gamma}")
        return self

    class Config:
        populate_by_name = True


class Case1FormFit(BaseModel):
    """Exponents of <L1,1> and <L1,1>/<1,y^4 rho 1> against kappa"""
    gamma: float
    form_slope: float
    form_residual: float
    expected_form_slope: float
    ratio_slope: float
    ratio_residual: float
    weight_slope: float = Field(..., description="Raw exponent of <1,y^4 rho 1>, reported only")
    negative_form: bool = Field(..., description="form_L11 < 0 at every fitted kappa")


def case_for_gamma(gamma: float) -> int:
    """1: 6/5 < gamma < 4/3, 2: gamma = 6/5, 3: 1 <= gamma < 6/5"""
    if abs(gamma - 1.2) < 1e-12:
        return 2
    return 1 if gamma > 1.2 else 3
