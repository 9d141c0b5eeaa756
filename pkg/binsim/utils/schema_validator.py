"""
Run configuration schemas.

Every configuration file is JSON validated by the pydantic models below.
Unknown keys are rejected; a dataset path must exist when given.
"""

import hashlib
import json
import logging
import os
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .optional_imports import safe_json_dumps

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Raised when a configuration cannot be loaded or validated; ``field`` names the offending key."""

    def __init__(self, message: str, field: str = ""):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


class ValidationResult:
    """Result of schema validation."""

    def __init__(self, is_valid: bool, errors: Optional[list] = None, validated_data: Optional[Dict[str, Any]] = None):
        self.is_valid = is_valid
        self.errors = errors or []
        self.validated_data = validated_data


class TrainConfig(BaseModel):
    """Training protocol for one fitness evaluation."""
    model_config = ConfigDict(extra="forbid")

    epochs: int = Field(default=15, ge=1, description="Full-epoch budget")
    reject_epoch: int = Field(default=1, ge=1, description="Epoch after which early rejection is checked")
    batch_size: int = Field(default=128, ge=1)
    learning_rate: float = Field(default=5e-3, gt=0.0)
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    adam_eps: float = Field(default=1e-8, gt=0.0)
    seed: int = Field(default=0, ge=0)
    model: Literal["mlp", "conv"] = "mlp"
    normalize_counts: bool = Field(default=False, description="Divide counts by n before the measure")
    shuffle: bool = True
    bn_momentum: float = Field(default=0.1, gt=0.0, le=1.0)
    validation_fraction: float = Field(default=0.2, gt=0.0, lt=1.0)

    @model_validator(mode="after")
    def _check_epochs(self):
        if self.reject_epoch > self.epochs:
            raise ValueError(f"reject_epoch ({self.reject_epoch}) exceeds epochs ({self.epochs})")
        return self


class DatasetConfig(BaseModel):
    """A BNND file, or the parameters of a synthetic dataset when ``path`` is unset."""
    model_config = ConfigDict(extra="forbid")

    path: Optional[str] = None
    seed: int = Field(default=7, ge=0)
    samples: int = Field(default=1000, ge=1)
    classes: int = Field(default=10, ge=2, le=255)
    height: int = Field(default=16, ge=1, le=65535)
    width: int = Field(default=16, ge=1, le=65535)
    channels: int = Field(default=1, ge=1, le=255)
    noise: float = Field(default=0.1, ge=0.0, le=1.0)

    @field_validator("path")
    @classmethod
    def _path_exists(cls, value: Optional[str]) -> Optional[str]:
        if value is not None and not os.path.isfile(value):
            raise ValueError(f"dataset file not found: {value}")
        return value


class SearchConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    population_size: int = Field(default=30, ge=2)
    thresholds: List[float] = Field(default_factory=lambda: [0.11, 0.25, 0.35, 0.40], min_length=1)
    milestones: Optional[List[int]] = None
    max_generations: int = Field(default=500, ge=0)
    stagnation_window: int = Field(default=50, ge=1)
    init_draw_budget: int = Field(default=1000, ge=1)
    chance_ratio: float = Field(default=1.0, gt=0.0)
    auto_chance_ratio: bool = False
    stop_fitness: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    checkpoint_every: int = Field(default=10, ge=0)
    workers: int = Field(default=1, ge=1)

    @field_validator("thresholds")
    @classmethod
    def _thresholds_in_range(cls, value: List[float]) -> List[float]:
        for t in value:
            if not 0.0 <= t <= 1.0:
                raise ValueError(f"threshold {t} outside [0, 1]")
        return value

    @model_validator(mode="after")
    def _check_milestones(self):
        if self.milestones is not None:
            if len(self.milestones) != len(self.thresholds):
                raise ValueError("milestones and thresholds must have the same length")
            if self.milestones[0] != 0 or any(b < a for a, b in zip(self.milestones, self.milestones[1:])):
                raise ValueError("milestones must start at 0 and be non-decreasing")
        return self

    def resolved_milestones(self) -> List[int]:
        """Stage switch generations; defaults to even fractions of max_generations."""
        if self.milestones is not None:
            return list(self.milestones)
        stages = len(self.thresholds)
        return [(self.max_generations * i) // stages for i in range(stages)]


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    schema_version: Literal[1] = SCHEMA_VERSION
    seed: int = Field(default=0, ge=0)
    output_dir: str = "runs"
    train: TrainConfig = Field(default_factory=TrainConfig)
    dataset: DatasetConfig = Field(default_factory=DatasetConfig)
    search: SearchConfig = Field(default_factory=SearchConfig)


def _format_errors(e: ValidationError) -> List[str]:
    return [f"{'.'.join(str(p) for p in error['loc'])}: {error['msg']}" for error in e.errors()]


def validate_run_config(data: Dict[str, Any]) -> ValidationResult:
    """Validate a raw configuration mapping."""
    try:
        validated_model = RunConfig(**data)
        return ValidationResult(is_valid=True, validated_data=validated_model.model_dump())
    except ValidationError as e:
        errors = _format_errors(e)
        logger.error(f"Config validation failed: {errors}")
        return ValidationResult(is_valid=False, errors=errors)


def parse_run_config(data: Dict[str, Any]) -> RunConfig:
    try:
        return RunConfig(**data)
    except ValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(p) for p in first["loc"])
        raise ConfigError(first["msg"], field=field) from e


def load_run_config(path: str) -> RunConfig:
    """Read and validate a JSON configuration file."""
    try:
        with open(path, "r") as f:
            data = json.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}", field="config") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON at line {e.lineno}: {e.msg}", field="config") from e
    if not isinstance(data, dict):
        raise ConfigError("top level must be a JSON object", field="config")
    return parse_run_config(data)


def config_hash(config: RunConfig) -> str:
    """First 12 hex digits of SHA-256 over the canonical JSON dump."""
    canonical = safe_json_dumps(config.model_dump(mode="json"), sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]
