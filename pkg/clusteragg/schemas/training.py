"""
Pydantic schemas for simulated distributed training runs.
"""
from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from clusteragg.schemas.aggregators import AggregationRule, AggregatorSpec
from clusteragg.schemas.attacks import AttackKind, AttackSpec


class DataMode(str, Enum):
    """How worker class distributions are drawn."""
    UNIFORM = "uniform"
    DIRICHLET = "dirichlet"


class ModelArchitecture(str, Enum):
    SOFTMAX = "softmax"
    MLP = "mlp"


class LRSchedule(str, Enum):
    CONSTANT = "constant"
    INVERSE_SQRT = "inverse_sqrt"
    STEP = "step"


class Protocol(str, Enum):
    """Server protocol: single aggregation or propose-two-and-vote."""
    RASHB = "rashb"
    TWO_PHASE = "two_phase"


class ProposalChoice(str, Enum):
    INNER = "inner"
    OUTER = "outer"


class DataConfig(BaseModel):
    """Synthetic Gaussian-blob classification task."""
    model_config = ConfigDict(extra="forbid")

    n_classes: int = Field(default=10, ge=2)
    n_features: int = Field(default=20, ge=1)
    samples_per_worker: int = Field(default=64, ge=1)
    test_samples_per_worker: int = Field(default=32, ge=1)
    mode: DataMode = DataMode.UNIFORM
    alpha: float = Field(default=0.1, gt=0, description="Dirichlet concentration")
    prior: Optional[List[float]] = None
    class_separation: float = Field(default=1.0, gt=0)
    feature_noise: float = Field(default=1.0, gt=0)

    @model_validator(mode="after")
    def _check_prior(self) -> "DataConfig":
        if self.prior is not None:
            if len(self.prior) != self.n_classes:
                raise ValueError("prior must have one entry per class")
            if any(p < 0 for p in self.prior) or abs(sum(self.prior) - 1.0) > 1e-9:
                raise ValueError("prior must be a probability vector")
        return self


class ModelConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    architecture: ModelArchitecture = ModelArchitecture.SOFTMAX
    hidden_units: int = Field(default=16, ge=1)
    init_scale: float = Field(default=0.01, ge=0)


class ScheduleConfig(BaseModel):
    """Learning-rate schedule gamma_t."""
    model_config = ConfigDict(extra="forbid")

    kind: LRSchedule = LRSchedule.CONSTANT
    lr: float = Field(default=0.1, gt=0)
    step_size: int = Field(default=100, ge=1)
    decay: float = Field(default=0.5, gt=0, le=1)


class MethodSpec(BaseModel):
    """
    A named training method: protocol plus the aggregator(s) it uses.

    A bare string resolves through ``METHOD_PRESETS``.
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    name: str
    protocol: Protocol = Protocol.RASHB
    inner: AggregatorSpec
    outer: Optional[AggregatorSpec] = None

    @model_validator(mode="before")
    @classmethod
    def _accept_preset(cls, value: Any) -> Any:
        if isinstance(value, str):
            key = value.lower()
            if key not in METHOD_PRESETS:
                raise ValueError(f"unknown method preset '{value}'")
            return METHOD_PRESETS[key].model_dump()
        return value

    @field_validator("inner", "outer", mode="before")
    @classmethod
    def _parse_spec(cls, value: Any) -> Any:
        return None if value is None else AggregatorSpec.parse(value)

    @model_validator(mode="after")
    def _check_protocol(self) -> "MethodSpec":
        if self.protocol is Protocol.TWO_PHASE and self.outer is None:
            raise ValueError(f"two-phase method '{self.name}' needs an outer aggregator")
        return self

    @classmethod
    def parse(cls, value: Any) -> "MethodSpec":
        if isinstance(value, cls):
            return value
        return cls.model_validate(value)


def _single(name: str, rule: AggregationRule) -> MethodSpec:
    return MethodSpec(name=name, protocol=Protocol.RASHB, inner=AggregatorSpec(rule=rule))


def _two_phase(name: str, inner: AggregationRule, outer: AggregationRule) -> MethodSpec:
    return MethodSpec(
        name=name,
        protocol=Protocol.TWO_PHASE,
        inner=AggregatorSpec(rule=inner),
        outer=AggregatorSpec(rule=outer),
    )


METHOD_PRESETS: Dict[str, MethodSpec] = {
    "avg": _single("avg", AggregationRule.AVG),
    "gm": _single("gm", AggregationRule.GM),
    "cclip": _single("cclip", AggregationRule.CCLIP),
    "cwm": _single("cwm", AggregationRule.CWM),
    "cwtm": _single("cwtm", AggregationRule.CWTM),
    "krum": _single("krum", AggregationRule.KRUM),
    "cent1p": _single("cent1p", AggregationRule.CENTERWO),
    "mean1p": _single("mean1p", AggregationRule.MEANWO),
    "cent2p": _two_phase("cent2p", AggregationRule.CENTERWO, AggregationRule.OUTER_CENTER),
    "mean2p": _two_phase("mean2p", AggregationRule.MEANWO, AggregationRule.OUTER_MEAN),
}

BASELINE_METHODS = ("avg", "gm", "cclip", "cwm", "cwtm", "krum")
TWO_PHASE_METHODS = ("cent2p", "mean2p")


class TrainingConfig(BaseModel):
    """Everything one simulated run needs."""
    model_config = ConfigDict(extra="forbid")

    n_workers: int = Field(default=35, ge=1)
    byzantine: int = Field(default=0, ge=0, description="Number of Byzantine workers f")
    rounds: int = Field(default=100, ge=1)
    batch_size: int = Field(default=8, ge=1)
    eval_batch_size: int = Field(default=32, ge=1)
    momentum: float = Field(default=0.0, ge=0, lt=1)
    schedule: ScheduleConfig = Field(default_factory=ScheduleConfig)
    data: DataConfig = Field(default_factory=DataConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    method: MethodSpec = Field(default_factory=lambda: METHOD_PRESETS["avg"])
    attack: AttackSpec = Field(default_factory=lambda: AttackSpec(kind="none"))
    seed: int = 0
    record_vectors: bool = False

    @field_validator("method", mode="before")
    @classmethod
    def _parse_method(cls, value: Any) -> Any:
        return MethodSpec.parse(value)

    @field_validator("attack", mode="before")
    @classmethod
    def _parse_attack(cls, value: Any) -> Any:
        return AttackSpec.parse(value)

    @model_validator(mode="after")
    def _check_budget(self) -> "TrainingConfig":
        if 2 * self.byzantine >= self.n_workers:
            raise ValueError(
                f"byzantine={self.byzantine} must be below half of n_workers={self.n_workers}"
            )
        if self.batch_size > self.data.samples_per_worker:
            raise ValueError("batch_size cannot exceed samples_per_worker")
        return self

    @model_validator(mode="after")
    def _target_own_aggregator(self) -> "TrainingConfig":
        # PGA without an explicit target attacks the server's (inner) rule
        if self.attack.kind is AttackKind.PGA and self.attack.pga_target is None:
            self.attack = self.attack.model_copy(update={"pga_target": self.method.inner})
        return self

    @property
    def honest_count(self) -> int:
        return self.n_workers - self.byzantine


class RoundRecord(BaseModel):
    """One line of a run's round log."""
    round: int
    learning_rate: float
    train_loss: float
    test_accuracy: float
    aggregate_norm: float
    aggregate: Optional[List[float]] = None
    chosen: Optional[ProposalChoice] = None
    votes_inner: Optional[int] = None
    votes_outer: Optional[int] = None


class RunRecord(BaseModel):
    """Result of a single simulated run."""
    method: str
    attack: str
    seed: int
    protocol: Protocol
    n_workers: int
    byzantine: int
    config_hash: str = ""
    rounds: List[RoundRecord] = Field(default_factory=list)
    final_accuracy: float = 0.0
    averaged_accuracy: float = 0.0
    final_train_loss: float = 0.0
    residual: float = Field(default=0.0, ge=0, description="Res_T estimate")
    averaged_model: Optional[List[float]] = None

    @property
    def inner_commit_fraction(self) -> Optional[float]:
        """Share of rounds committing the Inner proposal (two-phase runs only)."""
        choices = [r.chosen for r in self.rounds if r.chosen is not None]
        if not choices:
            return None
        return sum(1 for c in choices if c is ProposalChoice.INNER) / len(choices)

    def summary(self) -> Dict[str, Any]:
        """Per-cell summary document (no per-round data)."""
        data = self.model_dump(mode="json", exclude={"rounds", "averaged_model"})
        data["rounds_recorded"] = len(self.rounds)
        data["inner_commit_fraction"] = self.inner_commit_fraction
        return data
