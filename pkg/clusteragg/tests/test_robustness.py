"""
Tests for robustness measurement, closed-form bounds and certification.
"""
import math

import numpy as np
import pytest

from clusteragg.core.exceptions import EnumerationCapError, PreconditionError, UnsupportedRuleError
from clusteragg.schemas.aggregators import AggregationRule
from clusteragg.schemas.robustness import Criterion
from clusteragg.services.aggregation_service import aggregate
from clusteragg.services.geometry import VectorSet, diameter
from clusteragg.services.robustness_service import (
    InstanceFamily,
    RobustnessLab,
    certify,
    covariance_top_eigenvalue,
    instance_stream,
    lower_bound_references,
    measure_kappa,
    measure_lambda,
    measure_report,
    measure_xi,
    measure_zeta,
    closed_form_bounds,
)


class TestBounds:

    def test_center_lambda_closed_form(self):
        bounds = closed_form_bounds("centerwo", n=10, f=2, d=3)
        assert bounds.lambda_bound == pytest.approx((2 * math.sqrt(2) + 1) * 2 / 8)

    def test_mean_kappa_closed_form(self):
        bounds = closed_form_bounds("meanwo", n=10, f=2, d=3)
        assert bounds.kappa_bound == pytest.approx(6 * 2 / 6 * 8 / 6)

    def test_mean_xi_uses_smaller_of_dimension_and_subset_size(self):
        low_d = closed_form_bounds("meanwo", n=10, f=2, d=3)
        high_d = closed_form_bounds("meanwo", n=10, f=2, d=50)
        assert high_d.xi_bound / low_d.xi_bound == pytest.approx(8 / 3)

    def test_default_delta_is_byzantine_share(self):
        assert closed_form_bounds("centerwo", n=10, f=2, d=2).delta_max == pytest.approx(0.2)

    def test_undefined_without_honest_majority(self):
        with pytest.raises(PreconditionError):
            closed_form_bounds("centerwo", n=4, f=2, d=1)

    def test_unsupported_rule(self):
        with pytest.raises(UnsupportedRuleError):
            closed_form_bounds("krum", n=10, f=2, d=3)

    def test_lower_references(self):
        lam, kappa = lower_bound_references(10, 2)
        assert lam == pytest.approx(0.25)
        assert kappa == pytest.approx(1 / 3)


class TestMeasurements:

    def test_covariance_eigenvalue(self):
        pts = np.array([[-1.0, 0.0], [1.0, 0.0], [0.0, 0.0], [0.0, 0.0]])
        assert covariance_top_eigenvalue(pts) == pytest.approx(0.5)

    def test_average_without_byzantine_is_exact(self, rng):
        X = VectorSet(rng.standard_normal((6, 2)), f=0)
        for measure in (measure_lambda, measure_kappa, measure_xi):
            value, _ = measure("avg", X)
            assert value == pytest.approx(0.0, abs=1e-9)

    def test_mean_rule_zero_budget_measures_zero(self, rng):
        X = VectorSet(rng.standard_normal((7, 3)), f=0)
        report = measure_report("meanwo", X)
        assert all(r.measured == pytest.approx(0.0, abs=1e-9) for r in report.results.values())

    def test_identical_honest_subset_gives_infinite_ratio(self):
        # any honest subset of the three zeros has zero spread while the average moves
        X = VectorSet([[0.0], [0.0], [0.0], [6.0]], f=1)
        value, witness = measure_lambda("avg", X)
        assert math.isinf(value)
        assert witness == [0, 1, 2]

    def test_lambda_witness_is_worst_subset(self):
        X = VectorSet([[0.0], [1.0], [2.0], [30.0]], f=1)
        value, witness = measure_lambda("avg", X)
        # avg = 8.25; subset {0,1,2} has mean 1 and diameter 2
        assert witness == [0, 1, 2]
        assert value == pytest.approx(7.25 / 2)

    def test_zeta_requires_valid_delta(self, rng):
        X = VectorSet(rng.standard_normal((6, 1)), f=2)
        with pytest.raises(PreconditionError):
            measure_zeta("centerwo", X, delta_max=0.1)

    def test_cap(self):
        with pytest.raises(EnumerationCapError):
            RobustnessLab("avg", VectorSet(np.zeros((6, 1)), f=1), cap=5)

    def test_report_against_borrowed_bounds(self, rng):
        X = VectorSet(rng.standard_normal((8, 2)), f=2)
        report = measure_report("avg", X, bound_rule=AggregationRule.CENTERWO)
        assert report.bounds is not None
        assert all(r.passed is not None for r in report.results.values())
        assert report.lambda_lower_reference == pytest.approx(2 / 6)

    @pytest.mark.parametrize("rule", ["avg", "centerwo", "meanwo"])
    @pytest.mark.parametrize("factor", [3.7, 0.25])
    def test_ratios_are_scale_free(self, rule, factor):
        X = next(instance_stream(11, 1, n=7, d=2, f=2, family=InstanceFamily.GAUSSIAN))
        scaled = X.scaled(factor)
        for measure in (measure_lambda, measure_kappa, measure_zeta):
            assert measure(rule, scaled)[0] == pytest.approx(measure(rule, X)[0], rel=1e-6)
        # power iteration may stop at a different step once the eigenvalues are rescaled
        assert measure_xi(rule, scaled)[0] == pytest.approx(measure_xi(rule, X)[0], rel=1e-3)

    @pytest.mark.parametrize("rule", ["avg", "centerwo", "meanwo"])
    @pytest.mark.parametrize("seed", range(5))
    def test_witness_reproduces_value(self, rule, seed):
        X = next(instance_stream(seed, 1, n=7, d=3, f=2, family=InstanceFamily.PLANTED))
        output = aggregate(rule, X)
        m = X.n - X.f

        def deviation_sq(witness):
            assert len(witness) == m
            return float(((output - X.subset(witness).mean(axis=0)) ** 2).sum())

        value, witness = measure_lambda(rule, X)
        assert value == pytest.approx(math.sqrt(deviation_sq(witness)) / diameter(X.subset(witness)), rel=1e-9)
        value, witness = measure_kappa(rule, X)
        S = X.subset(witness)
        assert value == pytest.approx(m * deviation_sq(witness) / ((S - S.mean(axis=0)) ** 2).sum(), rel=1e-9)
        value, witness = measure_zeta(rule, X)
        share = X.f / X.n
        assert value == pytest.approx(deviation_sq(witness) / (share * diameter(X.subset(witness)) ** 2), rel=1e-9)
        value, witness = measure_xi(rule, X)
        S = X.subset(witness)
        top = float(np.linalg.eigvalsh(np.cov(S, rowvar=False, bias=True)).max())
        # the Rayleigh quotient never exceeds the top eigenvalue
        expected = deviation_sq(witness) / top
        assert expected * (1 - 1e-9) <= value <= expected * (1 + 1e-3)

    def test_report_without_bounds(self, rng):
        report = measure_report("gm", VectorSet(rng.standard_normal((6, 2)), f=1))
        assert report.bounds is None
        assert report.passed


class TestInstances:

    def test_stream_is_deterministic(self):
        first = [X.points for X in instance_stream(3, 5, 8, 2, 2)]
        second = [X.points for X in instance_stream(3, 5, 8, 2, 2)]
        assert all(np.array_equal(a, b) for a, b in zip(first, second))

    def test_family_shapes(self):
        for family in InstanceFamily:
            X = next(instance_stream(0, 1, 9, 3, 2, family))
            assert (X.n, X.d, X.f) == (9, 3, 2)


class TestCertify:

    def test_zero_trials_is_empty_pass(self):
        summary = certify("centerwo", instance_stream(0, 0, 10, 3, 2), trials=0)
        assert summary.criteria == {}
        assert summary.passed

    @pytest.mark.parametrize("rule", ["centerwo", "meanwo"])
    def test_small_batch_passes(self, rule):
        summary = certify(rule, instance_stream(1, 25, 8, 3, 1), trials=25)
        for criterion in (Criterion.LAMBDA, Criterion.KAPPA, Criterion.XI):
            assert summary.criteria[criterion].passed
        assert set(summary.criteria) == set(Criterion)
        assert all(entry.checked == 25 for entry in summary.criteria.values())

    def test_average_is_caught_by_borrowed_bounds(self):
        instances = instance_stream(2, 20, 10, 3, 2, InstanceFamily.PLANTED)
        summary = certify("avg", instances, trials=20, bound_rule=AggregationRule.CENTERWO)
        assert summary.bound_rule is AggregationRule.CENTERWO
        assert not summary.passed
        lam = summary.criteria[Criterion.LAMBDA]
        assert lam.violations > 0
        assert lam.margin is not None and lam.margin < 0


@pytest.mark.slow
@pytest.mark.parametrize("rule", ["centerwo", "meanwo"])
@pytest.mark.parametrize("n,f", [(8, 1), (8, 2), (10, 1), (10, 2)])
def test_bounds_hold_on_five_hundred_instances(rule, n, f):
    summary = certify(rule, instance_stream(7, 500, n, 3, f), trials=500)
    for criterion, entry in summary.criteria.items():
        assert entry.violations == 0, f"{rule} {criterion.value}: worst {entry.worst_measured} > {entry.bound}"
