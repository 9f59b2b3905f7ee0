"""
Equilibrium commands: liquid stars and gaseous references.
"""

import logging

from app.commands.router import CommandRouter
from app.schemas.run_config import GaseousConfig, SteadyConfig
from app.services.result_writer import ResultWriter
from app.services.steady_state import (
    SIX_FIFTHS,
    SteadyStateSolver,
    far_field_deviation,
    taylor_sign_margin,
)

logger = logging.getLogger(__name__)

router = CommandRouter(tags=["Steady State"])


@router.command("steady", SteadyConfig)
def cmd_steady(config: SteadyConfig):
    """Solve a liquid star and write its profile CSV"""
    profile = SteadyStateSolver.solve_liquid_star(
        config.gamma, config.kappa, config.n, config.tol, config.geometric_ratio
    )
    logger.info(f"Taylor margin: {taylor_sign_margin(profile):.6g}")
    path = ResultWriter.output_path(config.out_dir, config.out, f"profile_g{config.gamma:g}_k{config.kappa:g}.csv")
    ResultWriter.write_profile(path, profile, config.model_dump())
    print(path)


@router.command("gaseous", GaseousConfig)
def cmd_gaseous(config: GaseousConfig):
    """Solve the gaseous reference star of central density 1"""
    profile = SteadyStateSolver.solve_gaseous_reference(config.gamma, config.n, config.rho_floor)
    if config.gamma < SIX_FIFTHS:
        logger.info(f"Far-field deviation at R={profile.radius:.6g}: {far_field_deviation(profile):.3e}")
    path = ResultWriter.output_path(config.out_dir, config.out, f"gaseous_g{config.gamma:g}.csv")
    ResultWriter.write_profile(path, profile, config.model_dump())
    print(path)
