from typing import Optional
from pydantic_settings import BaseSettings
from pydantic import Field, field_validator


class Settings(BaseSettings):
    # Application Settings
    app_name: str = Field(default="liquid-star-lab", alias="APP_NAME")
    app_version: str = Field(default="1.0.0", alias="APP_VERSION")
    debug: bool = Field(default=False, alias="DEBUG")

    # Logging Configuration
    LOG_LEVEL: str = Field(default="INFO", alias="LOG_LEVEL")
    log_format: str = Field(default="%(asctime)s - %(name)s - %(levelname)s - %(message)s", alias="LOG_FORMAT")

    # Output / Execution
    out_dir: str = Field(default="./results", alias="LSL_OUT_DIR")
    jobs: int = Field(default=1, ge=1, alias="JOBS")

    # Steady state integration
    grid_size: int = Field(default=2048, ge=16, alias="GRID_SIZE")
    ode_step_scale: float = Field(default=1.0, gt=0, alias="ODE_STEP_SCALE")
    bisection_tol: float = Field(default=1e-12, gt=0, alias="BISECTION_TOL")
    max_radius_factor: float = Field(default=1e6, gt=1, alias="MAX_RADIUS_FACTOR")
    gas_rho_floor: float = Field(default=1e-8, gt=0, lt=1, alias="GAS_RHO_FLOOR")

    # Eigen solver
    eig_tol: float = Field(default=1e-10, gt=0, alias="EIG_TOL")
    residual_tol: float = Field(default=1e-8, gt=0, alias="RESIDUAL_TOL")
    inverse_iterations: int = Field(default=3, ge=1, alias="INVERSE_ITERATIONS")
    max_bracket_expansions: int = Field(default=60, ge=1, alias="MAX_BRACKET_EXPANSIONS")

    # Time integration
    cfl: float = Field(default=0.4, gt=0, alias="CFL")
    cfl_limit: float = Field(default=0.9, gt=0, alias="CFL_LIMIT")
    theta0: float = Field(default=1e-2, gt=0, alias="THETA0")
    artificial_viscosity: bool = Field(default=False, alias="ARTIFICIAL_VISCOSITY")
    av_quadratic: float = Field(default=2.0, ge=0, alias="AV_QUADRATIC")
    av_linear: float = Field(default=0.1, ge=0, alias="AV_LINEAR")

    # Scaling laws
    kappa_points_per_decade: int = Field(default=8, ge=1, alias="KAPPA_POINTS_PER_DECADE")
    slope_tol: float = Field(default=0.1, gt=0, alias="SLOPE_TOL")
    case3_margin: float = Field(default=0.1, ge=0, alias="CASE3_MARGIN")
    geometric_ratio: Optional[float] = Field(default=None, alias="GEOMETRIC_RATIO")

    @field_validator('LOG_LEVEL', mode='before')
    @classmethod
    def normalize_log_level(cls, v):
        if isinstance(v, str):
            return v.strip().upper()
        return v

    @field_validator('geometric_ratio', mode='before')
    @classmethod
    def parse_geometric_ratio(cls, v):
        # empty string in .env means uniform grids
        if isinstance(v, str) and not v.strip():
            return None
        return v

    class Config:
        env_file = ".env"
        env_file_encoding = "utf-8"
        case_sensitive = False
        populate_by_name = True
        extra = "ignore"

# Global settings instance
settings = Settings()
