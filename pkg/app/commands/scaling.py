"""
Scaling command: kappa sweep, regime verdict and case-1 form asymptotics.
"""

import logging

from app.commands.router import CommandRouter
from app.core.exceptions import InsufficientDataError
from app.schemas.run_config import ScalingConfig
from app.schemas.scaling import case_for_gamma
from app.services import scaling
from app.services.result_writer import ResultWriter

logger = logging.getLogger(__name__)

router = CommandRouter(tags=["Scaling"])


@router.command("scaling", ScalingConfig)
def cmd_scaling(config: ScalingConfig):
    """Sweep kappa, write the records CSV and the verdict JSON"""
    kappas = scaling.kappa_grid(config.kappa_min, config.kappa_max, config.points_per_decade)
    records = scaling.sweep(config.gamma, kappas, n=config.n, jobs=config.jobs, tol=config.tol,
                            geometric_ratio=config.geometric_ratio)
    path = ResultWriter.output_path(config.out_dir, config.out, f"sweep_g{config.gamma:g}.csv")
    ResultWriter.write_sweep(path, records, config.model_dump())

    try:
        verdict = scaling.verify_regime(config.gamma, records, config.slope_tol, config.margin)
    except InsufficientDataError:
        logger.error(f"❌ No verdict for gamma={config.gamma}: see {path}")
        raise
    summary = {"verdict": verdict, "taylor_margin_min": min(r.taylor_margin for r in records if r.ok)}
    if case_for_gamma(config.gamma) == 1:
        summary["form_fit"] = scaling.case1_form_asymptotics(config.gamma, records)
    ResultWriter.write_json(path.with_suffix(".json"), summary)
    print(path)
