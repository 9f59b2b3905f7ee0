"""
Result Writer Service.
The single emitter for every CLI output: CSV tables with a commented
provenance header, and JSON summaries. Profiles load back from their CSV.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel

from app.core.exceptions import InvalidParameterError, ProfileInvariantError
from app.schemas.dynamics import Diagnostics, LagrangianState, LinearState
from app.schemas.grid import RadialGrid
from app.schemas.scaling import ScalingRecord
from app.schemas.spectral import ModeResult
from app.schemas.star import StarProfile

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


def _plain(value: Any) -> Any:
    """numpy scalars and arrays to JSON-native values"""
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, BaseModel):
        return _plain(value.model_dump(by_alias=True))
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


class ResultWriter:
    """CSV/JSON emission with deterministic content"""

    @staticmethod
    def output_path(out_dir: str, out: Optional[str], default_name: str) -> Path:
        """Explicit `out` wins; otherwise out_dir/default_name. Parents are created."""
        path = Path(out) if out else Path(out_dir) / default_name
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    @staticmethod
    def write_csv(
        path: Path,
        frame: pd.DataFrame,
        meta: Optional[Dict[str, Any]] = None,
        config: Optional[Dict[str, Any]] = None,
    ) -> Path:
        """
        `# key=value` lines (values JSON-encoded), then `# config={...}`, then the
        table with round-trip float precision.
        """
        path = Path(path)
        lines = [f"# {key}={json.dumps(_plain(value))}" for key, value in (meta or {}).items()]
        if config is not None:
            lines.append(f"# config={json.dumps(_plain(config), sort_keys=True)}")
        body = frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        with open(path, "w", encoding="utf-8", newline="") as handle:
            for line in lines:
                handle.write(line + "\n")
            handle.write(body)
        logger.info(f"📝 Wrote {path} ({len(frame)} rows)")
        return path

    @staticmethod
    def write_json(path: Path, data: Any) -> Path:
        path = Path(path)
        with open(path, "w", encoding="utf-8", newline="") as handle:
            json.dump(_plain(data), handle, sort_keys=True, indent=2)
            handle.write("\n")
        logger.info(f"📝 Wrote {path}")
        return path

    @staticmethod
    def read_meta(path: Path) -> Dict[str, Any]:
        """Parse the `# key=value` header of a CSV written by write_csv"""
        meta = {}
        with open(path, "r", encoding="utf-8") as handle:
            for line in handle:
                if not line.startswith("#"):
                    break
                key, _, value = line[1:].strip().partition("=")
                meta[key] = json.loads(value)
        return meta

    # ========================================================================
    # Domain tables
    # ========================================================================

    @staticmethod
    def write_profile(path: Path, profile: StarProfile, config: Optional[Dict] = None) -> Path:
        frame = pd.DataFrame({"y": profile.nodes, "rho": profile.rho, "mass": profile.mass})
        meta = {
            "gamma": profile.gamma,
            "kappa": profile.kappa,
            "R": profile.radius,
            "boundary_density": profile.boundary_density,
            "compact_support": profile.compact_support,
            "support_radius": profile.support_radius,
            "spacing": profile.grid.spacing,
        }
        return ResultWriter.write_csv(path, frame, meta, config)

    @staticmethod
    def write_mode(path: Path, mode: ModeResult, config: Optional[Dict] = None) -> Path:
        frame = pd.DataFrame({"y": mode.grid.nodes, "chi": mode.chi})
        meta = {"mu_star": mode.mu_star, "growth_rate": mode.growth_rate, "residual": mode.residual}
        return ResultWriter.write_csv(path, frame, meta, config)

    @staticmethod
    def write_sweep(path: Path, records: Sequence[ScalingRecord], config: Optional[Dict] = None) -> Path:
        frame = pd.DataFrame([r.model_dump() for r in records])
        return ResultWriter.write_csv(path, frame, {"points": len(records)}, config)

    @staticmethod
    def write_diagnostics(path: Path, diagnostics: Diagnostics, config: Optional[Dict] = None) -> Path:
        frame = pd.DataFrame(diagnostics.columns())
        meta = {"status": diagnostics.status, "steps": diagnostics.steps, "dt": diagnostics.dt}
        return ResultWriter.write_csv(path, frame, meta, config)

    @staticmethod
    def write_state(path: Path, state, config: Optional[Dict] = None) -> Path:
        """Final nonlinear (y, eta, vel) or linear (y, zeta, zeta_t) state"""
        y = state.grid.nodes
        if isinstance(state, LagrangianState):
            frame = pd.DataFrame({"y": y, "eta": state.eta, "vel": state.vel})
        elif isinstance(state, LinearState):
            frame = pd.DataFrame({"y": y, "zeta": state.zeta, "zeta_t": state.zeta_t})
        else:
            raise InvalidParameterError(f"cannot write state of type {type(state).__name__}")
        return ResultWriter.write_csv(path, frame, {"time": state.time}, config)

    @staticmethod
    def load_profile(path: str) -> StarProfile:
        """Rebuild a StarProfile from write_profile output; unreadable input is a parameter error"""
        path = Path(path)
        try:
            meta = ResultWriter.read_meta(path)
            frame = pd.read_csv(path, comment="#", float_precision="round_trip")
        except (OSError, ValueError, pd.errors.ParserError) as e:
            raise InvalidParameterError(f"cannot read profile {path}: {e}")
        missing = {"y", "rho", "mass"} - set(frame.columns)
        if missing or "gamma" not in meta or "kappa" not in meta:
            raise InvalidParameterError(f"{path} is not a profile file (missing {sorted(missing) or 'gamma/kappa'})")
        try:
            profile = StarProfile(
                gamma=meta["gamma"],
                kappa=meta["kappa"],
                grid=RadialGrid(nodes=frame["y"].to_numpy(), spacing=meta.get("spacing", "uniform")),
                rho=frame["rho"].to_numpy(),
                mass=frame["mass"].to_numpy(),
                boundary_density=meta.get("boundary_density", 1.0),
                compact_support=bool(meta.get("compact_support", False)),
                support_radius=meta.get("support_radius"),
            )
        except ValueError as e:
            raise InvalidParameterError(f"invalid profile {path}: {e}")
        try:
            return profile.check_invariants(strict=False)
        except ProfileInvariantError as e:
            raise InvalidParameterError(f"invalid profile {path}: {e.detail}")


def output_path(out_dir: str, out: Optional[str], default_name: str) -> Path:
    return ResultWriter.output_path(out_dir, out, default_name)


def load_profile(path: str) -> StarProfile:
    return ResultWriter.load_profile(path)
