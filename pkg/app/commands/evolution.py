"""
Time-dependent commands: nonlinear evolution, linearized evolution and the
escape-time experiment.
"""

import logging

import pandas as pd

from app.commands.router import CommandRouter
from app.schemas.run_config import EscapeConfig, EvolveConfig, LinearConfig, StarConfig
from app.services import dynamics
from app.services.result_writer import ResultWriter
from app.services.spectral import SpectralSolver
from app.services.steady_state import SteadyStateSolver

logger = logging.getLogger(__name__)

router = CommandRouter(tags=["Dynamics"])


def _star(config: StarConfig):
    return SteadyStateSolver.solve_liquid_star(config.gamma, config.kappa, config.n,
                                               geometric_ratio=config.geometric_ratio)


def _label(config: StarConfig) -> str:
    return f"g{config.gamma:g}_k{config.kappa:g}"


@router.command("evolve", EvolveConfig)
def cmd_evolve(config: EvolveConfig):
    """Nonlinear evolution of the equilibrium or of a seeded growing mode"""
    profile = _star(config)
    if config.delta > 0:
        mode = SpectralSolver.growth_rate_of(profile)
        state = dynamics.seed_mode(profile, mode, config.delta, balanced=True)
    else:
        state = dynamics.init_equilibrium(profile)

    last = {}
    diagnostics = dynamics.evolve(
        state, profile, config.t_end, config.sample_dt, cfl=config.cfl,
        artificial_viscosity=config.artificial_viscosity, observer=lambda s: last.update(state=s),
    )
    path = ResultWriter.output_path(config.out_dir, config.out, f"evolve_{_label(config)}.csv")
    ResultWriter.write_diagnostics(path, diagnostics, config.model_dump())
    ResultWriter.write_state(path.with_name(path.stem + "_state.csv"), last["state"], config.model_dump())
    print(path)


@router.command("linear", LinearConfig)
def cmd_linear(config: LinearConfig):
    """Linearized evolution from the growing mode"""
    profile = _star(config)
    pencil = SpectralSolver.assemble(profile)
    mode = SpectralSolver.lowest_eigenpair(pencil)
    initial = dynamics.LinearDynamics.seed(mode, config.delta, profile)
    diagnostics, final = dynamics.evolve_linearized(profile, initial, config.t_end, sample_dt=config.sample_dt,
                                                    cfl=config.cfl, pencil=pencil, method=config.method)
    path = ResultWriter.output_path(config.out_dir, config.out, f"linear_{_label(config)}.csv")
    ResultWriter.write_diagnostics(path, diagnostics, config.model_dump())
    ResultWriter.write_state(path.with_name(path.stem + "_state.csv"), final, config.model_dump())
    print(path)


@router.command("escape", EscapeConfig)
def cmd_escape(config: EscapeConfig):
    """Escape times against log(1/delta), with the delta^2 and threshold checks"""
    profile = _star(config)
    mode = SpectralSolver.growth_rate_of(profile)
    result = dynamics.escape_experiment(profile, mode, config.deltas, theta0=config.theta0, jobs=config.jobs,
                                        cfl=config.cfl, artificial_viscosity=config.artificial_viscosity)
    frame = pd.DataFrame([
        {"delta": r.delta, "measured_time": r.measured_time, "predicted_time": r.predicted_time, "status": r.status}
        for r in result.runs
    ])
    path = ResultWriter.output_path(config.out_dir, config.out, f"escape_{_label(config)}.csv")
    meta = {"mu0": result.mu0, "theta0": result.theta0, "slope": result.slope,
            "predicted_slope": result.predicted_slope}
    ResultWriter.write_csv(path, frame, meta, config.model_dump())
    ResultWriter.write_json(path.with_suffix(".json"), result)
    print(path)
