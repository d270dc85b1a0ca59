"""
Robustness lab: exhaustive measurement of the four robustness criteria and
certification against their closed-form bounds.

All measurements enumerate every honest subset S of size n - f, so instances
must stay within ``settings.enumeration_cap``.
"""
import itertools
import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterator, List, Optional, Tuple, Union

import numpy as np

from clusteragg.core.config import settings
from clusteragg.core.exceptions import EnumerationCapError, PreconditionError, UnsupportedRuleError
from clusteragg.core.logging_config import get_logger, log_certification_result
from clusteragg.core.random import Stream, derive_rng
from clusteragg.monitoring.metrics import certification_checks_total
from clusteragg.schemas.aggregators import AggregationRule, AggregatorSpec
from clusteragg.schemas.robustness import (
    ApproxCheckSummary,
    CertificationSummary,
    ClusterObjective,
    Criterion,
    CriterionResult,
    CriterionSummary,
    RobustnessBounds,
    RobustnessReport,
)
from clusteragg.services.aggregation_service import aggregation_service
from clusteragg.services.clustering_service import (
    approx_cluster,
    exact_center_outliers,
    exact_mean_outliers,
)
from clusteragg.services.geometry import PointsLike, VectorSet, as_points, diameter, exact_meb

logger = get_logger("services.robustness")

POWER_ITERATIONS = 200
POWER_TOLERANCE = 1e-10
PASS_TOLERANCE = 1e-9

Measurement = Tuple[float, List[int]]


class InstanceFamily(str, Enum):
    """Random instance shapes for certification runs."""
    GAUSSIAN = "gaussian"
    PLANTED = "planted"       # honest Gaussian cloud plus far outliers
    CLUSTERS = "clusters"     # mixture of Gaussian clusters
    MIXED = "mixed"           # cycles through the families above


# --- batched subset geometry -------------------------------------------------


def top_eigenvalues(matrices: np.ndarray, iterations: int = POWER_ITERATIONS, tol: float = POWER_TOLERANCE) -> np.ndarray:
    """Largest eigenvalue of each symmetric PSD matrix in a ``(C, k, k)`` batch, by power iteration."""
    count, k, _ = matrices.shape
    start = np.abs(derive_rng(0, Stream.GEOMETRY, k).standard_normal(k)) + 0.1
    v = np.tile(start / np.linalg.norm(start), (count, 1))
    lam = np.zeros(count)
    for _ in range(iterations):
        w = np.einsum("cij,cj->ci", matrices, v)
        norms = np.linalg.norm(w, axis=1)
        alive = norms > 0
        v[alive] = w[alive] / norms[alive, None]
        updated = np.einsum("ci,cij,cj->c", v, matrices, v)
        updated[~alive] = 0.0
        converged = np.max(np.abs(updated - lam)) <= tol * max(1.0, float(np.max(np.abs(updated))))
        lam = updated
        if converged:
            break
    return np.maximum(lam, 0.0)


def covariance_top_eigenvalue(points: PointsLike) -> float:
    """lambda_max of ``(1/|S|) sum (x - mean)(x - mean)^T``."""
    P = as_points(points, "covariance_top_eigenvalue")
    Y = P - P.mean(axis=0)
    m, d = Y.shape
    M = (Y.T @ Y) / m if d <= m else (Y @ Y.T) / m
    return float(top_eigenvalues(M[None])[0])


@dataclass
class SubsetGeometry:
    """Per-subset quantities for every honest subset of one instance."""
    combos: np.ndarray          # (C, n - f) index sets, lexicographic
    means: np.ndarray           # (C, d)
    diameter_sq: np.ndarray     # (C,)
    spread: np.ndarray          # (C,) sum of squared distances to the subset mean
    top_eigenvalue: np.ndarray  # (C,)
    scale: float

    @classmethod
    def build(cls, P: np.ndarray, f: int) -> "SubsetGeometry":
        n, d = P.shape
        m = n - f
        combos = np.array(list(itertools.combinations(range(n), m)), dtype=np.intp).reshape(-1, m)
        diff = P[:, None, :] - P[None, :, :]
        D = np.einsum("ijk,ijk->ij", diff, diff)
        blocks = D[combos[:, :, None], combos[:, None, :]]
        members = P[combos]
        means = members.mean(axis=1)
        Y = members - means[:, None, :]
        if d <= m:
            cov = np.einsum("cmi,cmj->cij", Y, Y) / m
        else:
            cov = np.einsum("cid,cjd->cij", Y, Y) / m
        return cls(
            combos=combos,
            means=means,
            diameter_sq=blocks.reshape(len(combos), -1).max(axis=1),
            spread=np.einsum("cmd,cmd->c", Y, Y),
            top_eigenvalue=top_eigenvalues(cov),
            scale=float(max(1.0, np.abs(P).max())),
        )


def _ratio(numerator: np.ndarray, denominator: np.ndarray, zero_numerator: np.ndarray) -> np.ndarray:
    """Elementwise ratio with 0/0 -> 0 and k/0 -> inf."""
    out = np.zeros_like(numerator)
    positive = ~zero_numerator
    nonzero_den = denominator > 0
    ok = positive & nonzero_den
    out[ok] = numerator[ok] / denominator[ok]
    out[positive & ~nonzero_den] = np.inf
    return out


def _argmax(values: np.ndarray, geometry: SubsetGeometry) -> Measurement:
    idx = int(np.argmax(values))
    return float(values[idx]), [int(i) for i in geometry.combos[idx]]


class RobustnessLab:
    """Measures criteria for an aggregator output against all honest subsets."""

    def __init__(self, spec: Union[AggregatorSpec, str], X: VectorSet, cap: Optional[int] = None):
        self.spec = AggregatorSpec.parse(spec)
        self.X = X
        cap = settings.enumeration_cap if cap is None else cap
        if X.n > cap:
            raise EnumerationCapError(X.n, cap)
        if 2 * X.f >= X.n:
            raise PreconditionError(f"Robustness criteria need f < n/2 (n={X.n}, f={X.f})")
        self.output = aggregation_service.aggregate(self.spec, X)
        self.geometry = SubsetGeometry.build(X.points, X.f)
        deviation = self.output[None, :] - self.geometry.means
        self.deviation_sq = np.einsum("cd,cd->c", deviation, deviation)
        tol = settings.geometry_tolerance * self.geometry.scale
        self.zero_deviation = np.sqrt(self.deviation_sq) <= tol

    def lam(self) -> Measurement:
        values = _ratio(np.sqrt(self.deviation_sq), np.sqrt(self.geometry.diameter_sq), self.zero_deviation)
        return _argmax(values, self.geometry)

    def kappa(self) -> Measurement:
        m = self.X.n - self.X.f
        values = _ratio(m * self.deviation_sq, self.geometry.spread, self.zero_deviation)
        return _argmax(values, self.geometry)

    def xi(self) -> Measurement:
        values = _ratio(self.deviation_sq, self.geometry.top_eigenvalue, self.zero_deviation)
        return _argmax(values, self.geometry)

    def zeta(self) -> Measurement:
        share = self.X.f / self.X.n
        values = _ratio(self.deviation_sq, share * self.geometry.diameter_sq, self.zero_deviation)
        return _argmax(values, self.geometry)

    def measure(self, criterion: Criterion) -> Measurement:
        return {
            Criterion.LAMBDA: self.lam,
            Criterion.ZETA: self.zeta,
            Criterion.KAPPA: self.kappa,
            Criterion.XI: self.xi,
        }[criterion]()


def _check_delta(X: VectorSet, delta_max: Optional[float]) -> float:
    share = X.f / X.n
    delta = share if delta_max is None else delta_max
    if not (share - 1e-12 <= delta < 0.5):
        raise PreconditionError(f"delta_max={delta} must satisfy f/n={share:.6g} <= delta_max < 1/2")
    return delta


def measure_lambda(spec: Union[AggregatorSpec, str], X: VectorSet) -> Measurement:
    """Worst ||F(X) - mean_S|| / diam(S) over honest subsets S."""
    return RobustnessLab(spec, X).lam()


def measure_kappa(spec: Union[AggregatorSpec, str], X: VectorSet) -> Measurement:
    """Worst |S| ||F(X) - mean_S||^2 / sum_S ||x - mean_S||^2."""
    return RobustnessLab(spec, X).kappa()


def measure_xi(spec: Union[AggregatorSpec, str], X: VectorSet) -> Measurement:
    """Worst ||F(X) - mean_S||^2 / lambda_max(M_S)."""
    return RobustnessLab(spec, X).xi()


def measure_zeta(spec: Union[AggregatorSpec, str], X: VectorSet, delta_max: Optional[float] = None) -> Measurement:
    """Worst ||F(X) - mean_S||^2 / ((f/n) diam(S)^2); rules are deterministic so no expectation."""
    _check_delta(X, delta_max)
    return RobustnessLab(spec, X).zeta()


def closed_form_bounds(
    rule: Union[AggregationRule, str],
    n: int,
    f: int,
    d: int,
    delta_max: Optional[float] = None,
) -> RobustnessBounds:
    """Closed-form criterion bounds for the center and mean outlier-clustering rules."""
    rule = AggregationRule(rule)
    if not rule.has_closed_form_bounds:
        raise UnsupportedRuleError(rule.value, "closed-form bounds")
    if f < 0 or n - 2 * f <= 0:
        raise PreconditionError(f"Bounds need 0 <= f < n/2 (n={n}, f={f})", rule_name=rule.value)
    delta = f / n if delta_max is None else delta_max
    if not (f / n - 1e-12 <= delta < 0.5):
        raise PreconditionError(f"delta_max={delta} must satisfy f/n <= delta_max < 1/2")
    nu = 0.5 - delta
    gap = n - 2 * f
    spread_factor = (n - f) / gap
    if rule is AggregationRule.CENTERWO:
        lam = (2 * math.sqrt(2) + 1) * f / (n - f)
        zeta = (18 + 8 * math.sqrt(2)) / (1 + 2 * nu) ** 2 * f / n
        kappa = (8 * f * f + 2 * f) / gap * spread_factor
        xi = kappa
    else:
        lam = math.sqrt(3 * f * (n - f)) / gap
        zeta = 3 * (1 + 2 * nu) / (8 * nu * nu)
        kappa = 6 * f / gap * spread_factor
        xi = 6 * f * min(n - f, d) / gap * spread_factor
    return RobustnessBounds(
        rule=rule, n=n, f=f, d=d, delta_max=delta, nu=nu,
        lambda_bound=lam, zeta_bound=zeta, kappa_bound=kappa, xi_bound=xi,
    )


def lower_bound_references(n: int, f: int) -> Tuple[float, float]:
    """Known lower bounds lambda >= f/(n-f), kappa >= f/(n-2f), reported for context only."""
    lam = f / (n - f)
    kappa = f / (n - 2 * f) if n > 2 * f else math.inf
    return lam, kappa


def within_bound(measured: float, bound: float) -> bool:
    return measured <= bound * (1 + PASS_TOLERANCE) + PASS_TOLERANCE


def measure_report(
    spec: Union[AggregatorSpec, str],
    X: VectorSet,
    delta_max: Optional[float] = None,
    bound_rule: Optional[AggregationRule] = None,
) -> RobustnessReport:
    """All four criteria for one instance, compared to bounds when any apply."""
    spec = AggregatorSpec.parse(spec)
    delta = _check_delta(X, delta_max)
    lab = RobustnessLab(spec, X)
    source = spec.rule if spec.rule.has_closed_form_bounds else bound_rule
    bounds = closed_form_bounds(source, X.n, X.f, X.d, delta) if source is not None else None
    results: Dict[Criterion, CriterionResult] = {}
    for criterion in Criterion:
        value, witness = lab.measure(criterion)
        bound = bounds.for_criterion(criterion) if bounds else None
        results[criterion] = CriterionResult(
            criterion=criterion,
            measured=value,
            witness=witness,
            bound=bound,
            passed=None if bound is None else within_bound(value, bound),
        )
    lam_ref, kappa_ref = lower_bound_references(X.n, X.f)
    return RobustnessReport(
        rule=spec.rule, n=X.n, f=X.f, d=X.d, delta_max=delta,
        results=results, bounds=bounds,
        lambda_lower_reference=lam_ref, kappa_lower_reference=kappa_ref,
    )


# --- instance generation ----------------------------------------------------


def generate_instance(rng: np.random.Generator, n: int, d: int, f: int, family: InstanceFamily) -> VectorSet:
    """One random instance of the requested family."""
    if family is InstanceFamily.GAUSSIAN:
        points = rng.standard_normal((n, d))
    elif family is InstanceFamily.PLANTED:
        honest = rng.standard_normal((n - f, d))
        directions = rng.standard_normal((f, d))
        directions /= np.maximum(np.linalg.norm(directions, axis=1, keepdims=True), 1e-12)
        if f > 0 and rng.random() < 0.5:
            # outliers bunched together on one side
            directions[:] = directions[0]
        radii = rng.uniform(5.0, 50.0, size=(f, 1))
        outliers = directions * radii + 0.3 * rng.standard_normal((f, d))
        points = np.vstack([honest, outliers])[rng.permutation(n)]
    else:
        k = int(rng.integers(2, 4))
        centers = rng.normal(scale=4.0, size=(k, d))
        labels = rng.integers(0, k, size=n)
        points = centers[labels] + rng.standard_normal((n, d)) * rng.uniform(0.2, 1.0)
    return VectorSet(points, f)


def instance_stream(
    seed: int,
    trials: int,
    n: int,
    d: int,
    f: int,
    family: InstanceFamily = InstanceFamily.MIXED,
) -> Iterator[VectorSet]:
    """Deterministic sequence of instances; trial ``i`` depends only on (seed, i)."""
    cycle = [InstanceFamily.GAUSSIAN, InstanceFamily.PLANTED, InstanceFamily.CLUSTERS]
    for i in range(trials):
        fam = cycle[i % len(cycle)] if family is InstanceFamily.MIXED else family
        yield generate_instance(derive_rng(seed, Stream.INSTANCE, i), n, d, f, fam)


def certify(
    rule: Union[AggregatorSpec, AggregationRule, str],
    instances: Union[Iterator[VectorSet], List[VectorSet]],
    trials: int,
    delta_max: Optional[float] = None,
    bound_rule: Optional[AggregationRule] = AggregationRule.CENTERWO,
) -> CertificationSummary:
    """
    Measure all four criteria on up to ``trials`` instances and compare with the bounds.

    Rules without bounds of their own are compared with ``bound_rule``'s.
    Failures are data: they show up as violations, never as exceptions.
    """
    spec = AggregatorSpec.parse(rule)
    source = spec.rule if spec.rule.has_closed_form_bounds else bound_rule
    summary: Optional[CertificationSummary] = None
    iterator = iter(instances)
    for index in range(trials):
        X = next(iterator, None)
        if X is None:
            break
        report = measure_report(spec, X, delta_max, bound_rule)
        if summary is None:
            summary = CertificationSummary(
                rule=spec.rule, bound_rule=source, trials=trials,
                n=X.n, f=X.f, d=X.d, delta_max=report.delta_max,
                criteria={c: CriterionSummary(criterion=c) for c in Criterion},
                lambda_lower_reference=report.lambda_lower_reference,
                kappa_lower_reference=report.kappa_lower_reference,
            )
        for criterion, result in report.results.items():
            entry = summary.criteria[criterion]
            entry.checked += 1
            entry.bound = result.bound
            if result.passed is False:
                entry.violations += 1
            if index == 0 or result.measured > entry.worst_measured:
                entry.worst_measured = result.measured
                entry.worst_witness = result.witness
                entry.worst_instance = index

    if summary is None:
        logger.info(f"Certification of {spec.label}: no instances checked")
        return CertificationSummary(rule=spec.rule, bound_rule=source, trials=trials, n=0, f=0, d=0)

    for criterion, entry in summary.criteria.items():
        outcome = "pass" if entry.passed else "fail"
        certification_checks_total.labels(rule=spec.label, criterion=criterion.value, outcome=outcome).inc()
        if entry.bound is not None:
            log_certification_result(logger, spec.label, criterion.value, entry.worst_measured, entry.bound, entry.passed)
    return summary


# --- approximation-ratio and Jung checks -------------------------------------


def jung_sandwich(points: PointsLike, seed: int = 0) -> Tuple[float, float, bool]:
    """(radius, diameter, sqrt(2) r <= diam <= 2 r) for the exact enclosing ball."""
    radius = exact_meb(points, seed=seed).radius
    diam = diameter(points)
    tol = settings.geometry_tolerance * max(1.0, diam)
    holds = math.sqrt(2) * radius <= diam + tol and diam <= 2 * radius + tol
    return radius, diam, holds


def approximation_ratio(approx_cost: float, exact_cost: float) -> float:
    tol = settings.geometry_tolerance * max(1.0, exact_cost)
    if exact_cost <= tol:
        return 1.0 if approx_cost <= tol else math.inf
    return approx_cost / exact_cost


def random_small_instance(rng: np.random.Generator, max_n: int = 12, max_d: int = 4) -> VectorSet:
    """Random instance with n in [4, max_n], d in [1, max_d], f < n/2."""
    n = int(rng.integers(4, max_n + 1))
    d = int(rng.integers(1, max_d + 1))
    f = int(rng.integers(0, (n - 1) // 2 + 1))
    family = [InstanceFamily.PLANTED, InstanceFamily.CLUSTERS, InstanceFamily.GAUSSIAN][int(rng.integers(0, 3))]
    return generate_instance(rng, n, d, f, family)


def approx_check(trials: int, seed: int = 0, max_n: int = 12, max_d: int = 4) -> Dict[ClusterObjective, ApproxCheckSummary]:
    """Compare medoid clustering cost with the exact oracle; a ratio above 2 is a violation."""
    summaries = {obj: ApproxCheckSummary(objective=obj) for obj in ClusterObjective}
    for i in range(trials):
        X = random_small_instance(derive_rng(seed, Stream.INSTANCE, i), max_n, max_d)
        exact = {
            ClusterObjective.CENTER: exact_center_outliers(X),
            ClusterObjective.MEAN: exact_mean_outliers(X),
        }
        for objective, oracle in exact.items():
            approx = approx_cluster(objective, X)
            ratio = approximation_ratio(approx.cost, oracle.cost)
            entry = summaries[objective]
            entry.instances += 1
            if approx.cost > 2 * oracle.cost + settings.geometry_tolerance * max(1.0, oracle.cost):
                entry.violations += 1
                logger.warning(
                    f"2-approximation violated: objective={objective.value} instance={i} ratio={ratio:.6g}",
                    extra={"criterion": objective.value, "status": "fail"},
                )
            if ratio > entry.worst_ratio:
                entry.worst_ratio = ratio
                entry.worst_instance = i
    return summaries
