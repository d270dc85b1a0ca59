"""
Pydantic schemas for robustness measurement and certification reports.
"""
import math
from enum import Enum
from typing import Dict, List, Optional

from pydantic import BaseModel, Field

from clusteragg.schemas.aggregators import AggregationRule


class Criterion(str, Enum):
    """The four robustness criteria."""
    LAMBDA = "lambda"   # resilient averaging, honest diameter
    ZETA = "zeta"       # pairwise second moment
    KAPPA = "kappa"     # honest variance
    XI = "xi"           # top covariance eigenvalue


class ClusterObjective(str, Enum):
    """Outlier-clustering objective: max distance or sum of squared distances."""
    CENTER = "center"
    MEAN = "mean"


class RobustnessBounds(BaseModel):
    """Closed-form upper bounds for one (rule, n, f, d, delta_max)."""
    rule: AggregationRule
    n: int
    f: int
    d: int
    delta_max: float
    nu: float
    lambda_bound: float
    zeta_bound: float
    kappa_bound: float
    xi_bound: float

    def for_criterion(self, criterion: Criterion) -> float:
        return {
            Criterion.LAMBDA: self.lambda_bound,
            Criterion.ZETA: self.zeta_bound,
            Criterion.KAPPA: self.kappa_bound,
            Criterion.XI: self.xi_bound,
        }[criterion]


class CriterionResult(BaseModel):
    """Measured value of one criterion, optionally compared to its bound."""
    criterion: Criterion
    measured: float = Field(ge=0)
    witness: List[int] = Field(default_factory=list)
    bound: Optional[float] = None
    passed: Optional[bool] = None

    @property
    def margin(self) -> Optional[float]:
        if self.bound is None:
            return None
        if math.isinf(self.measured):
            return -math.inf
        return self.bound - self.measured


class RobustnessReport(BaseModel):
    """All four measured criteria for one rule on one instance."""
    rule: AggregationRule
    n: int
    f: int
    d: int
    delta_max: float
    results: Dict[Criterion, CriterionResult]
    bounds: Optional[RobustnessBounds] = None
    # informational lower-bound references from prior work
    lambda_lower_reference: float = 0.0
    kappa_lower_reference: float = 0.0

    @property
    def passed(self) -> bool:
        return all(r.passed is not False for r in self.results.values())


class CriterionSummary(BaseModel):
    """Worst case of one criterion over a certification batch."""
    criterion: Criterion
    worst_measured: float = 0.0
    worst_witness: List[int] = Field(default_factory=list)
    worst_instance: Optional[int] = None
    bound: Optional[float] = None
    violations: int = 0
    checked: int = 0

    @property
    def passed(self) -> bool:
        return self.violations == 0

    @property
    def margin(self) -> Optional[float]:
        if self.bound is None:
            return None
        if math.isinf(self.worst_measured):
            return -math.inf
        return self.bound - self.worst_measured


class CertificationSummary(BaseModel):
    """Outcome of certifying one rule over many generated instances."""
    rule: AggregationRule
    bound_rule: Optional[AggregationRule] = None
    trials: int
    n: int
    f: int
    d: int
    delta_max: Optional[float] = None
    criteria: Dict[Criterion, CriterionSummary] = Field(default_factory=dict)
    lambda_lower_reference: float = 0.0
    kappa_lower_reference: float = 0.0

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.criteria.values())


class ApproxCheckSummary(BaseModel):
    """Approximation-ratio check of the medoid algorithm against the exact oracle."""
    objective: ClusterObjective
    instances: int = 0
    violations: int = 0
    worst_ratio: float = 0.0
    worst_instance: Optional[int] = None

    @property
    def passed(self) -> bool:
        return self.violations == 0
