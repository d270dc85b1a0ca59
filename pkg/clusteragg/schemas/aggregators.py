"""
Pydantic schemas for aggregation rule selection.
"""
from enum import Enum
from typing import Any, List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

# CClip clip radius used by the reference experiments
DEFAULT_CLIP_TAU = 0.215771


class AggregationRule(str, Enum):
    """Aggregation rules the server can apply to a round of updates."""
    AVG = "avg"
    CENTERWO = "centerwo"
    MEANWO = "meanwo"
    OUTER_CENTER = "outer_center"
    OUTER_MEAN = "outer_mean"
    GM = "gm"
    CCLIP = "cclip"
    CWM = "cwm"
    CWTM = "cwtm"
    KRUM = "krum"

    @property
    def uses_outlier_budget(self) -> bool:
        """Whether the rule reads ``f``."""
        return self in _F_RULES

    @property
    def has_closed_form_bounds(self) -> bool:
        return self in (AggregationRule.CENTERWO, AggregationRule.MEANWO)


_F_RULES = {
    AggregationRule.CENTERWO,
    AggregationRule.MEANWO,
    AggregationRule.OUTER_CENTER,
    AggregationRule.OUTER_MEAN,
    AggregationRule.CWTM,
    AggregationRule.KRUM,
}


class AggregatorSpec(BaseModel):
    """
    Tagged aggregation rule plus hyperparameters.

    Accepts the string shorthand ``"centerwo"`` or a table such as
    ``{rule = "cclip", tau = 0.5}``. ``f`` left unset means the outlier
    budget of the vector set being aggregated.
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    rule: AggregationRule
    f: Optional[int] = Field(default=None, ge=0, description="Outlier budget override")
    iterations: int = Field(default=1, ge=1, description="GM / CClip iteration count")
    tau: float = Field(default=DEFAULT_CLIP_TAU, gt=0, description="CClip clip radius")
    reference: Optional[List[float]] = Field(
        default=None, description="CClip starting vector (zeros when unset)"
    )

    @model_validator(mode="before")
    @classmethod
    def _accept_shorthand(cls, value: Any) -> Any:
        if isinstance(value, (str, AggregationRule)):
            return {"rule": value}
        return value

    @classmethod
    def parse(cls, value: Any) -> "AggregatorSpec":
        if isinstance(value, cls):
            return value
        return cls.model_validate(value)

    @property
    def label(self) -> str:
        return self.rule.value
