"""
Verification command.
"""

from app.commands.router import CommandRouter
from app.core.exceptions import VerificationFailure
from app.schemas.run_config import VerifyConfig
from app.services.result_writer import ResultWriter
from app.services.verification import format_table, run_verification

router = CommandRouter(tags=["Verification"])


@router.command("verify", VerifyConfig)
def cmd_verify(config: VerifyConfig):
    """Run the acceptance suite at desk scale; exit 1 on any failure"""
    report = run_verification(config.tolerance_scale, config.only, config.jobs)
    print(format_table(report))
    ResultWriter.write_json(ResultWriter.output_path(config.out_dir, config.out, "verify.json"), report)
    if not report.passed:
        raise VerificationFailure(f"failed criteria: {', '.join(report.failures)}")
