"""
Pydantic schemas for Byzantine attack configuration.
"""
from enum import Enum
from typing import Any, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from clusteragg.schemas.aggregators import AggregatorSpec


class AttackKind(str, Enum):
    """Byzantine behaviours available to the simulator."""
    NONE = "none"
    SF = "sf"           # sign flip
    GAUSS = "gauss"
    OMN = "omn"         # omniscient
    EMPIRE = "empire"
    SV = "sv"           # shifted by standard deviations
    SNEAK = "sneak"
    SIEGE = "siege"
    PGA = "pga"
    LF = "lf"           # label flip, data level

    @property
    def is_data_level(self) -> bool:
        return self is AttackKind.LF

    @property
    def needs_true_updates(self) -> bool:
        """Whether crafting reads the corrupted workers' honest-computed updates."""
        return self in (AttackKind.SF, AttackKind.GAUSS, AttackKind.OMN, AttackKind.SV)


class OmnReference(str, Enum):
    """Which uncorrupted average the omniscient attack starts from."""
    ALL_TRUE = "all_true"
    HONEST = "honest"


class AttackSpec(BaseModel):
    """
    Attack kind plus kind-specific parameters.

    Like ``AggregatorSpec``, a bare string such as ``"omn"`` is accepted.
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: AttackKind
    seed: Optional[int] = Field(default=None, description="Gauss RNG seed override")
    omn_reference: OmnReference = OmnReference.ALL_TRUE
    empire_scale: float = -0.1
    sv_multiplier: float = 20.0
    scale: float = Field(default=0.8, gt=0, description="Sneak placement scale")
    siege_range: Tuple[float, float] = (1.2, 1.5)
    direction: Optional[List[float]] = Field(
        default=None, description="Sneak/siege bias direction (anti-mean when unset)"
    )
    pga_target: Optional[AggregatorSpec] = Field(
        default=None, description="Aggregator PGA displaces; a run fills in its own aggregator when unset"
    )
    pga_evaluations: int = Field(default=50, ge=2)
    pga_max_scale: float = Field(default=10.0, gt=0)
    lf_permutation: Optional[List[int]] = None

    @model_validator(mode="before")
    @classmethod
    def _accept_shorthand(cls, value: Any) -> Any:
        if isinstance(value, (str, AttackKind)):
            return {"kind": value}
        return value

    @field_validator("siege_range")
    @classmethod
    def _ordered_range(cls, value: Tuple[float, float]) -> Tuple[float, float]:
        low, high = value
        if not 0 < low <= high:
            raise ValueError("siege_range must satisfy 0 < low <= high")
        return value

    @field_validator("pga_target", mode="before")
    @classmethod
    def _parse_target(cls, value: Any) -> Any:
        return None if value is None else AggregatorSpec.parse(value)

    @classmethod
    def parse(cls, value: Any) -> "AttackSpec":
        if isinstance(value, cls):
            return value
        return cls.model_validate(value)

    @property
    def label(self) -> str:
        return self.kind.value
