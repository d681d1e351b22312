"""Pydantic schemas for experiment configuration files."""

from __future__ import annotations

import math
from enum import StrEnum
from pathlib import Path
from typing import Any

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from starm.errors import ConfigError
from starm.optim.objectives import ObjectiveKind
from starm.optim.schemas import (
    BacktrackingStep,
    FixedStep,
    OptimConfig,
    StepConfig,
    StopOn,
)
from starm.transforms import TransformSpec

__all__ = [
    "AngleSection",
    "BacktrackingStep",
    "CompressSection",
    "ExperimentConfig",
    "ExperimentKind",
    "FixedStep",
    "GenerateKind",
    "GenerateSection",
    "OptimConfig",
    "RegressionMethod",
    "RegressionSection",
    "RomSection",
    "StepConfig",
    "StopOn",
    "build_config",
    "load_config",
    "merge_overrides",
]


class ExperimentKind(StrEnum):
    """Subcommand a configuration drives."""

    TSVDM = "tsvdm"
    OPTIMIZE = "optimize"
    ANGLE = "angle"
    REGRESSION = "regression"
    ROM = "rom"
    COMPRESS = "compress"
    TRANSFORM = "transform"
    GENERATE = "generate"


class RegressionMethod(StrEnum):
    """Optimizer for the synthetic regression experiment."""

    VARPRO = "varpro"
    ALTDESC = "altdesc"
    BOTH = "both"


class GenerateKind(StrEnum):
    """Synthetic tensors the ``generate`` command writes."""

    RANDOM = "random"
    LOWRANK = "lowrank"
    WAVE = "wave"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class AngleSection(_Section):
    """Trajectories of the two-by-two rotation example."""

    theta0: list[float] = Field(
        default_factory=lambda: [math.pi / 8, 3 * math.pi / 8, 5 * math.pi / 8],
        min_length=1,
        description="Starting angles in radians",
    )
    alpha: float = Field(default=0.1, gt=0)
    iters: int = Field(default=200, ge=0)
    grid: int = Field(default=100, ge=2, description="Samples of the landscape")


class RegressionSection(_Section):
    """Synthetic slicewise linear regression."""

    d: int = Field(default=2, ge=1, le=4, description="Tube length is 2**d")
    method: RegressionMethod = RegressionMethod.BOTH
    n_points: int = Field(default=100, ge=2)


class RomSection(_Section):
    """Wave-equation snapshot generator and reduced-basis comparison."""

    n_space: int = Field(default=64, ge=3)
    n_time: int = Field(default=31, ge=2)
    n_params: int = Field(default=50, ge=1)
    speed_min: float = Field(default=0.1, gt=0)
    speed_max: float = Field(default=5.0, gt=0)
    t_final: float = Field(default=5.0, gt=0)
    cfl: float = Field(default=0.5, gt=0, le=1)
    max_iters: int = Field(
        default=100, ge=0, description="Per-start budget when optim.max_iters is unset"
    )
    inits: list[str] = Field(
        default_factory=lambda: ["identity", "dct", "data"], min_length=1
    )
    random_baseline: bool = True

    @field_validator("inits")
    @classmethod
    def _parse_inits(cls, value: list[str]) -> list[str]:
        for text in value:
            TransformSpec.parse(text)
        return value


class CompressSection(_Section):
    """Low-t-rank compression of a tensor file."""

    transfer: Path | None = None


class GenerateSection(_Section):
    """Synthetic tensor generation."""

    kind: GenerateKind = GenerateKind.RANDOM
    rank: int = Field(default=2, ge=1, description="Slice rank for lowrank")


class ExperimentConfig(BaseModel):
    """A complete, validated run description.

    Unknown keys are rejected at every level. Documents may spell ``reg``
    as ``lambda``.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    experiment: ExperimentKind
    dims: tuple[int, int, int] | None = None
    seed: int = 0
    transform: str | None = None
    objective: ObjectiveKind = ObjectiveKind.LOW_RANK
    optim: OptimConfig = Field(default_factory=OptimConfig)
    k: int | None = Field(default=None, ge=1)
    n3: int | None = Field(default=None, ge=1)
    noise: float = Field(default=0.0, ge=0)
    reg: float = Field(default=0.0, ge=0)
    input: Path | None = None
    target: Path | None = None
    output: Path = Path()

    angle: AngleSection = Field(default_factory=AngleSection)
    regression: RegressionSection = Field(default_factory=RegressionSection)
    rom: RomSection = Field(default_factory=RomSection)
    compress: CompressSection = Field(default_factory=CompressSection)
    generate: GenerateSection = Field(default_factory=GenerateSection)

    @field_validator("transform")
    @classmethod
    def _parse_transform(cls, value: str | None) -> str | None:
        if value is not None:
            TransformSpec.parse(value)
        return value

    @field_validator("dims")
    @classmethod
    def _positive_dims(
        cls, value: tuple[int, int, int] | None
    ) -> tuple[int, int, int] | None:
        if value is not None and min(value) < 1:
            msg = f"dims must be positive, got {value}"
            raise ValueError(msg)
        return value

    def transform_spec(self, default: str = "identity") -> TransformSpec:
        """Parsed ``transform``, or ``default`` when none was given."""
        return TransformSpec.parse(self.transform or default)

    def rom_optim(self) -> OptimConfig:
        """Optimizer settings for ``rom``, which has its own iteration budget.

        An explicit ``optim.max_iters`` (from ``--iters`` or a config file)
        takes precedence over ``rom.max_iters``.
        """
        if "max_iters" in self.optim.model_fields_set:
            return self.optim
        return self.optim.model_copy(update={"max_iters": self.rom.max_iters})


def _normalize(document: dict[str, Any]) -> dict[str, Any]:
    if "lambda" in document:
        document = dict(document)
        document["reg"] = document.pop("lambda")
    return document


def merge_overrides(
    base: dict[str, Any], overrides: dict[str, Any]
) -> dict[str, Any]:
    """Recursively overlay ``overrides`` onto ``base``.

    Mappings carrying a ``kind`` tag (step rules) are replaced, not merged.
    """
    merged = _normalize(dict(base))
    for key, value in _normalize(overrides).items():
        if (
            isinstance(value, dict)
            and isinstance(merged.get(key), dict)
            and "kind" not in value
        ):
            merged[key] = merge_overrides(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config(path: Path, defaults: dict[str, Any] | None = None) -> ExperimentConfig:
    """Load and validate a YAML or JSON configuration file.

    Args:
        path: Config file.
        defaults: Values the file is overlaid on (usually the CLI flags).

    Raises:
        ConfigError: If the file is missing, unparsable, or invalid.
    """
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        msg = f"cannot read config {path}: {exc.strerror}"
        raise ConfigError(msg, path=str(path)) from exc
    try:
        document = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        msg = f"config {path} is not valid YAML/JSON"
        raise ConfigError(msg, path=str(path)) from exc
    if document is None:
        document = {}
    if not isinstance(document, dict):
        msg = f"config {path} must be a mapping"
        raise ConfigError(msg, path=str(path))
    merged = merge_overrides(defaults or {}, document)
    try:
        return ExperimentConfig.model_validate(merged)
    except ValidationError as exc:
        msg = f"config {path} failed validation"
        raise ConfigError(msg, path=str(path), validation_error=exc) from exc


def build_config(values: dict[str, Any]) -> ExperimentConfig:
    """Validate a configuration assembled from command-line flags.

    Raises:
        ConfigError: If the values are invalid.
    """
    try:
        return ExperimentConfig.model_validate(_normalize(values))
    except ValidationError as exc:
        msg = "command-line options failed validation"
        raise ConfigError(msg, validation_error=exc) from exc
