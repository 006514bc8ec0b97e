# hopper_stiffness/run_config.py
"""Run configuration: one YAML tree covering every command."""

from pathlib import Path

from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, NonNegativeInt, PositiveFloat, ValidationError
import yaml

from hopper_stiffness.config import DEFAULT_CONFIG_PATH, REPORTS_DIR
from hopper_stiffness.emulator import FitConfig
from hopper_stiffness.episode import EpisodeConfig
from hopper_stiffness.errors import ConfigError
from hopper_stiffness.integrator import IntegratorConfig
from hopper_stiffness.model import EnergyBudget, GroundProfile, HopperParams
from hopper_stiffness.sweep import SweepSpec


class PortraitSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid", allow_inf_nan=False)

    drop_heights: list[PositiveFloat] = Field(
        default=[0.05, 0.08, 0.11, 0.14, 0.17, 0.20], min_length=2
    )
    # orbits drawn per drop height, counted back from the last hop
    orbits: int = Field(default=3, ge=1)


class RunConfig(BaseModel):
    """Everything a command needs; defaults are the reference simulation parameters."""

    model_config = ConfigDict(frozen=True, extra="forbid", allow_inf_nan=False)

    hopper: HopperParams = HopperParams()
    ground: GroundProfile = GroundProfile()
    energy: EnergyBudget = EnergyBudget()
    episode: EpisodeConfig = EpisodeConfig()
    integrator: IntegratorConfig = IntegratorConfig()
    sweep: SweepSpec = SweepSpec()
    portrait: PortraitSpec = PortraitSpec()
    fit: FitConfig = FitConfig()
    output_dir: Path = REPORTS_DIR
    seed: NonNegativeInt = 0


def _format_validation(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        where = ".".join(str(part) for part in err["loc"]) or "<root>"
        lines.append(f"{where}: {err['msg']}")
    return "; ".join(lines)


def parse_run_config(data: dict | None, source: str = "<config>") -> RunConfig:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping, got {type(data).__name__}")
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"{source}: {_format_validation(exc)}") from exc


def load_run_config(path: Path | None = None) -> RunConfig:
    path = Path(path) if path is not None else DEFAULT_CONFIG_PATH
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")

    text = path.read_text(encoding="utf-8")
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        problem = getattr(exc, "problem", None) or str(exc)
        if mark is not None:
            raise ConfigError(f"{path}:{mark.line + 1}:{mark.column + 1}: {problem}") from exc
        raise ConfigError(f"{path}: {problem}") from exc

    cfg = parse_run_config(data, str(path))
    logger.info(f"Loaded config from {path}")
    return cfg
