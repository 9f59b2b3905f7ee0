"""
Spectral commands: lowest eigenmode and Rayleigh-quotient checks.
"""

import logging

import numpy as np

from app.commands.router import CommandRouter
from app.core.exceptions import InvalidParameterError
from app.schemas.run_config import ModesConfig, RayleighConfig
from app.schemas.star import StarProfile
from app.services import spectral
from app.services.result_writer import ResultWriter
from app.services.steady_state import SteadyStateSolver

logger = logging.getLogger(__name__)

router = CommandRouter(tags=["Spectral"])


def profile_from(config: ModesConfig) -> StarProfile:
    """--profile file if given, otherwise a fresh solve"""
    if config.profile:
        return ResultWriter.load_profile(config.profile)
    return SteadyStateSolver.solve_liquid_star(config.gamma, config.kappa, config.n,
                                               geometric_ratio=config.geometric_ratio)


def _label(profile: StarProfile) -> str:
    return f"g{profile.gamma:g}_k{profile.kappa:g}"


@router.command("modes", ModesConfig)
def cmd_modes(config: ModesConfig):
    """Lowest eigenpair: mode CSV plus summary JSON"""
    profile = profile_from(config)
    pencil = spectral.assemble(profile)
    mode = spectral.lowest_eigenpair(pencil, tol=config.tol, count=config.count)

    summary = mode.summary()
    summary.update({
        "gamma": profile.gamma,
        "kappa": profile.kappa,
        "R": profile.radius,
        "robin_defect": spectral.robin_defect(mode.chi, profile.grid),
        "clamped_center_shift": spectral.clamped_center_shift(pencil, tol=config.tol),
    })
    path = ResultWriter.output_path(config.out_dir, config.out, f"mode_{_label(profile)}.csv")
    ResultWriter.write_mode(path, mode, config.model_dump())
    ResultWriter.write_json(path.with_suffix(".json"), summary)
    print(path)


@router.command("rayleigh", RayleighConfig)
def cmd_rayleigh(config: RayleighConfig):
    """Rayleigh quotient of chi = 1 or of the y^-a test function"""
    profile = profile_from(config)
    result = {"test": config.test, "gamma": profile.gamma, "kappa": profile.kappa}
    if config.test == "const":
        value = spectral.rayleigh_quotient(spectral.assemble(profile), np.ones(profile.grid.size))
    else:
        a = config.a
        if a is None:
            window = spectral.exponent_window(profile.gamma, config.eps1, config.eps2)
            if window is None:
                raise InvalidParameterError(
                    f"empty exponent window for gamma={profile.gamma}, eps1={config.eps1}, eps2={config.eps2}"
                )
            a = 0.5 * (window[0] + window[1])
            result["window"] = list(window)
        value = spectral.SpectralSolver.test_function_444(profile, config.nu, a)
        result.update({"a": a, "nu": config.nu})
    result["value"] = value
    result["scaled"] = value / profile.kappa ** (profile.gamma / 2.0)
    logger.info(f"Rayleigh quotient ({config.test}): {value:.10g}")
    path = ResultWriter.output_path(config.out_dir, config.out, f"rayleigh_{config.test}_{_label(profile)}.json")
    ResultWriter.write_json(path, result)
    print(path)
