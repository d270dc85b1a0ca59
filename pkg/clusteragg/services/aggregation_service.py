"""
Aggregation service: one entry point mapping n update vectors to a single vector.
"""
from typing import Callable, Dict, Optional, Union

import numpy as np

from clusteragg.core.exceptions import DimensionMismatchError, PreconditionError, UnsupportedRuleError
from clusteragg.core.logging_config import get_logger
from clusteragg.monitoring.metrics import aggregation_calls_total
from clusteragg.schemas.aggregators import AggregationRule, AggregatorSpec
from clusteragg.schemas.robustness import ClusterObjective
from clusteragg.services.clustering_service import approx_cluster, medoid_search
from clusteragg.services.geometry import PointsLike, VectorSet, as_points

logger = get_logger("services.aggregation")

# Weiszfeld distance floor
GM_DISTANCE_FLOOR = 1e-12


class AggregationService:
    """Dispatches an ``AggregatorSpec`` to the matching rule."""

    def __init__(self) -> None:
        self._rules: Dict[AggregationRule, Callable[[AggregatorSpec, np.ndarray, int], np.ndarray]] = {
            AggregationRule.AVG: self._average,
            AggregationRule.CENTERWO: self._center_without_outliers,
            AggregationRule.MEANWO: self._mean_without_outliers,
            AggregationRule.OUTER_CENTER: self._outer_center,
            AggregationRule.OUTER_MEAN: self._outer_mean,
            AggregationRule.GM: self._geometric_median,
            AggregationRule.CCLIP: self._centered_clipping,
            AggregationRule.CWM: self._coordinate_median,
            AggregationRule.CWTM: self._coordinate_trimmed_mean,
            AggregationRule.KRUM: self._krum,
        }

    def aggregate(
        self,
        spec: Union[AggregatorSpec, str],
        X: Union[VectorSet, PointsLike],
        f: Optional[int] = None,
    ) -> np.ndarray:
        """
        Apply ``spec`` to the update vectors ``X``.

        The outlier budget is taken from, in order: ``spec.f``, the ``f``
        argument, then ``X.f`` when ``X`` is a ``VectorSet``.
        """
        spec = AggregatorSpec.parse(spec)
        if isinstance(X, VectorSet):
            points, set_f = X.points, X.f
        else:
            points, set_f = as_points(X, "aggregate"), 0
        budget = spec.f if spec.f is not None else (f if f is not None else set_f)
        n = points.shape[0]
        if spec.rule.uses_outlier_budget and not 0 <= 2 * budget < n:
            raise PreconditionError(
                f"{spec.label} requires 0 <= f < n/2 (n={n}, f={budget})", rule_name=spec.label
            )
        handler = self._rules.get(spec.rule)
        if handler is None:
            raise UnsupportedRuleError(spec.label, "aggregate")
        result = handler(spec, points, budget)
        aggregation_calls_total.labels(rule=spec.label).inc()
        return result

    @staticmethod
    def _average(spec: AggregatorSpec, P: np.ndarray, f: int) -> np.ndarray:
        return P.mean(axis=0)

    @staticmethod
    def _center_without_outliers(spec: AggregatorSpec, P: np.ndarray, f: int) -> np.ndarray:
        solution = approx_cluster(ClusterObjective.CENTER, P, f)
        return solution.members_centroid(P)

    @staticmethod
    def _mean_without_outliers(spec: AggregatorSpec, P: np.ndarray, f: int) -> np.ndarray:
        solution = approx_cluster(ClusterObjective.MEAN, P, f)
        return solution.members_centroid(P)

    @staticmethod
    def _outer(objective: ClusterObjective, P: np.ndarray, f: int) -> np.ndarray:
        """Centroid of the n - f points left outside the tightest f-point medoid cluster."""
        if f == 0:
            return P.mean(axis=0)
        tight = medoid_search(objective, P, f)
        outside = np.setdiff1d(np.arange(P.shape[0]), np.asarray(tight.members))
        return P[outside].mean(axis=0)

    def _outer_center(self, spec: AggregatorSpec, P: np.ndarray, f: int) -> np.ndarray:
        return self._outer(ClusterObjective.CENTER, P, f)

    def _outer_mean(self, spec: AggregatorSpec, P: np.ndarray, f: int) -> np.ndarray:
        return self._outer(ClusterObjective.MEAN, P, f)

    @staticmethod
    def _geometric_median(spec: AggregatorSpec, P: np.ndarray, f: int) -> np.ndarray:
        """Weiszfeld iterations started at the centroid."""
        z = P.mean(axis=0)
        for _ in range(spec.iterations):
            dist = np.maximum(np.linalg.norm(P - z, axis=1), GM_DISTANCE_FLOOR)
            weights = 1.0 / dist
            z = (weights[:, None] * P).sum(axis=0) / weights.sum()
        return z

    @staticmethod
    def _centered_clipping(spec: AggregatorSpec, P: np.ndarray, f: int) -> np.ndarray:
        d = P.shape[1]
        if spec.reference is None:
            v = np.zeros(d)
        else:
            v = np.asarray(spec.reference, dtype=np.float64)
            if v.shape != (d,):
                raise DimensionMismatchError(d, int(v.size), details={"field": "reference"})
        for _ in range(spec.iterations):
            diff = P - v
            norms = np.linalg.norm(diff, axis=1)
            scale = np.ones_like(norms)
            far = norms > spec.tau
            scale[far] = spec.tau / norms[far]
            v = v + (diff * scale[:, None]).mean(axis=0)
        return v

    @staticmethod
    def _coordinate_median(spec: AggregatorSpec, P: np.ndarray, f: int) -> np.ndarray:
        # lower median for even n
        return np.sort(P, axis=0)[(P.shape[0] - 1) // 2]

    @staticmethod
    def _coordinate_trimmed_mean(spec: AggregatorSpec, P: np.ndarray, f: int) -> np.ndarray:
        n = P.shape[0]
        return np.sort(P, axis=0)[f:n - f].mean(axis=0)

    @staticmethod
    def _krum(spec: AggregatorSpec, P: np.ndarray, f: int) -> np.ndarray:
        n = P.shape[0]
        if n < f + 3:
            raise PreconditionError(f"krum requires n >= f + 3 (n={n}, f={f})", rule_name="krum")
        diff = P[:, None, :] - P[None, :, :]
        D = np.einsum("ijk,ijk->ij", diff, diff)
        np.fill_diagonal(D, np.inf)
        nearest = np.sort(D, axis=1)[:, :n - f - 2]
        scores = nearest.sum(axis=1)
        return P[int(np.argmin(scores))].copy()


aggregation_service = AggregationService()


def aggregate(spec: Union[AggregatorSpec, str], X: Union[VectorSet, PointsLike], f: Optional[int] = None) -> np.ndarray:
    """Module-level shortcut to ``aggregation_service.aggregate``."""
    return aggregation_service.aggregate(spec, X, f)
