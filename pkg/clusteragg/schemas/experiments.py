"""
Pydantic schemas for experiment matrices and their result tables.
"""
import hashlib
import math
import tomllib
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional

import orjson
from pydantic import BaseModel, ConfigDict, Field, ValidationError as PydanticValidationError
from pydantic import field_validator, model_validator

from clusteragg.core.exceptions import ConfigurationError
from clusteragg.schemas.attacks import AttackSpec
from clusteragg.schemas.training import (
    DataConfig,
    MethodSpec,
    ModelConfig,
    ScheduleConfig,
    TrainingConfig,
)

# Keys that never influence results and stay out of the config hash
_RUNTIME_KEYS = {"output_dir", "jobs"}


def byzantine_count(rate: float, n_workers: int) -> int:
    """floor(rate * n), robust to binary representation of the rate."""
    return int(math.floor(rate * n_workers + 1e-9))


class ExperimentConfig(BaseModel):
    """A full (method x attack x rate x seed) matrix description."""
    model_config = ConfigDict(extra="forbid")

    name: str = "experiment"
    n_workers: int = Field(default=35, ge=1)
    adversarial_rates: List[float] = Field(default_factory=lambda: [0.4], min_length=1)
    methods: List[MethodSpec] = Field(min_length=1)
    attacks: List[AttackSpec] = Field(min_length=1)
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4], min_length=1)
    rounds: int = Field(default=300, ge=1)
    batch_size: int = Field(default=8, ge=1)
    eval_batch_size: int = Field(default=32, ge=1)
    momentum: float = Field(default=0.0, ge=0, lt=1)
    schedule: ScheduleConfig = Field(default_factory=ScheduleConfig)
    data: DataConfig = Field(default_factory=DataConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    record_vectors: bool = False
    output_dir: Optional[Path] = None
    jobs: Optional[int] = Field(default=None, ge=1)

    @field_validator("methods", mode="before")
    @classmethod
    def _parse_methods(cls, value: Any) -> Any:
        return [MethodSpec.parse(v) for v in value]

    @field_validator("attacks", mode="before")
    @classmethod
    def _parse_attacks(cls, value: Any) -> Any:
        return [AttackSpec.parse(v) for v in value]

    @model_validator(mode="after")
    def _check_matrix(self) -> "ExperimentConfig":
        for rate in self.adversarial_rates:
            if not 0 <= rate < 0.5:
                raise ValueError(f"adversarial rate {rate} must lie in [0, 0.5)")
            f = byzantine_count(rate, self.n_workers)
            if 2 * f >= self.n_workers:
                raise ValueError(f"rate {rate} gives f={f}, not below n/2 for n={self.n_workers}")
        names = [m.name for m in self.methods]
        if len(set(names)) != len(names):
            raise ValueError("method names must be unique")
        kinds = [a.label for a in self.attacks]
        if len(set(kinds)) != len(kinds):
            raise ValueError("attack kinds must be unique")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be unique")
        return self

    def training_config(self, method: MethodSpec, attack: AttackSpec, rate: float, seed: int) -> TrainingConfig:
        """Materialize the config of one matrix cell."""
        return TrainingConfig(
            n_workers=self.n_workers,
            byzantine=byzantine_count(rate, self.n_workers),
            rounds=self.rounds,
            batch_size=self.batch_size,
            eval_batch_size=self.eval_batch_size,
            momentum=self.momentum,
            schedule=self.schedule,
            data=self.data,
            model=self.model,
            method=method,
            attack=attack,
            seed=seed,
            record_vectors=self.record_vectors,
        )

    def config_hash(self) -> str:
        payload = self.model_dump(mode="json", exclude=_RUNTIME_KEYS)
        return hashlib.sha256(orjson.dumps(payload, option=orjson.OPT_SORT_KEYS)).hexdigest()[:16]

    @classmethod
    def from_toml(cls, path: Path, overrides: Optional[Mapping[str, Any]] = None) -> "ExperimentConfig":
        """Load a TOML config, apply dotted-key overrides, validate."""
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except FileNotFoundError:
            raise ConfigurationError(f"Config file not found: {path}", config_key=str(path))
        except tomllib.TOMLDecodeError as e:
            raise ConfigurationError(f"Invalid TOML in {path}: {e}", config_key=str(path))
        return cls.from_mapping(raw, overrides)

    @classmethod
    def from_mapping(cls, raw: Mapping[str, Any], overrides: Optional[Mapping[str, Any]] = None) -> "ExperimentConfig":
        data = _deep_copy(raw)
        for key, value in (overrides or {}).items():
            apply_override(data, key, value)
        try:
            return cls.model_validate(data)
        except PydanticValidationError as e:
            first = e.errors()[0]
            location = ".".join(str(p) for p in first.get("loc", ()))
            raise ConfigurationError(
                f"Invalid experiment config: {location or 'root'}: {first.get('msg')}",
                config_key=location or None,
                details={"errors": e.errors(include_url=False, include_context=False)},
            )


def _deep_copy(value: Any) -> Any:
    if isinstance(value, Mapping):
        return {k: _deep_copy(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_deep_copy(v) for v in value]
    return value


def parse_override(assignment: str) -> tuple[str, Any]:
    """Split ``dotted.key=value``; the value is read as a TOML scalar or array."""
    if "=" not in assignment:
        raise ConfigurationError(f"Override must look like key=value: {assignment!r}")
    key, _, text = assignment.partition("=")
    key = key.strip()
    if not key:
        raise ConfigurationError(f"Override has an empty key: {assignment!r}")
    try:
        value = tomllib.loads(f"v = {text.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = text.strip()
    return key, value


def apply_override(data: Dict[str, Any], dotted_key: str, value: Any) -> None:
    parts = dotted_key.split(".")
    node = data
    for part in parts[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigurationError(f"Cannot override '{dotted_key}': '{part}' is not a table", config_key=dotted_key)
        node = child
    node[parts[-1]] = value


class CellStat(BaseModel):
    """Accuracy statistics of one (method, attack) cell over seeds."""
    mean: float
    std: Optional[float] = None
    seeds: int


class ResultRow(BaseModel):
    rate: float
    method: str
    cells: Dict[str, CellStat] = Field(default_factory=dict)

    @property
    def worst(self) -> Optional[float]:
        if not self.cells:
            return None
        return min(c.mean for c in self.cells.values())


class ResultTable(BaseModel):
    """Rows = methods (per adversarial rate), columns = attacks plus a Worst column."""
    attacks: List[str] = Field(default_factory=list)
    rows: List[ResultRow] = Field(default_factory=list)

    def row(self, method: str, rate: Optional[float] = None) -> ResultRow:
        for r in self.rows:
            if r.method == method and (rate is None or r.rate == rate):
                return r
        raise KeyError(method)
