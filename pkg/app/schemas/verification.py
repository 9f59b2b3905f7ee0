"""
Pydantic schemas for the acceptance suite run by `verify`.
"""

from typing import List, Optional
from pydantic import BaseModel, Field


class CriterionResult(BaseModel):
    """Outcome of one acceptance criterion"""
    id: str = Field(..., description="AC1 ... AC12")
    title: str
    passed: bool
    measured: Optional[str] = Field(None, description="Measured quantity, formatted")
    target: Optional[str] = Field(None, description="Tolerance or expected value, formatted")
    detail: Optional[str] = None
    seconds: float = 0.0


class VerificationReport(BaseModel):
    tolerance_scale: float = 1.0
    results: List[CriterionResult] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.results) and all(r.passed for r in self.results)

    @property
    def failures(self) -> List[str]:
        return [r.id for r in self.results if not r.passed]
