"""
Tests for the training simulator: momentum, schedules, both protocols and diagnostics.
"""
import numpy as np
import pytest

from clusteragg.core.exceptions import DimensionMismatchError, PreconditionError, SimulationError
from clusteragg.schemas.attacks import AttackSpec
from clusteragg.schemas.training import (
    DataConfig,
    DataMode,
    LRSchedule,
    MethodSpec,
    ProposalChoice,
    Protocol,
    ScheduleConfig,
    TrainingConfig,
)
from clusteragg.services.aggregation_service import aggregation_service
from clusteragg.services.data_service import generate_workers
from clusteragg.services.model_service import SoftmaxRegression
from clusteragg.services.training_service import (
    TrainingSimulator,
    heterogeneity_diag,
    learning_rate,
    local_gradient,
    momentum_update,
    rashb_run,
    run_training,
    sample_batch,
    two_phase_run,
)


class TestMomentum:

    def test_zero_beta_is_gradient(self):
        assert np.array_equal(momentum_update(np.ones(3), np.full(3, 2.0), 0.0), np.full(3, 2.0))

    def test_recursion(self):
        m = momentum_update(np.array([1.0]), np.array([3.0]), 0.5)
        assert m[0] == pytest.approx(2.0)

    def test_full_beta_keeps_previous(self):
        assert np.array_equal(momentum_update(np.ones(2), np.zeros(2), 1.0), np.ones(2))

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            momentum_update(np.zeros(2), np.zeros(3), 0.9)


class TestSchedules:

    def test_constant(self):
        assert learning_rate(ScheduleConfig(lr=0.3), 99) == 0.3

    def test_inverse_sqrt(self):
        assert learning_rate(ScheduleConfig(kind=LRSchedule.INVERSE_SQRT, lr=1.0), 3) == pytest.approx(0.5)

    def test_step(self):
        schedule = ScheduleConfig(kind=LRSchedule.STEP, lr=1.0, step_size=10, decay=0.5)
        assert learning_rate(schedule, 9) == 1.0
        assert learning_rate(schedule, 25) == pytest.approx(0.25)


class TestBatches:

    def test_without_replacement(self, rng):
        idx = sample_batch(rng, 10, 10)
        assert sorted(idx.tolist()) == list(range(10))

    def test_batch_larger_than_data(self, rng):
        with pytest.raises(PreconditionError):
            sample_batch(rng, 4, 5)

    def test_full_batch_gradient_is_local_gradient(self, small_data):
        worker = generate_workers(small_data, 1, seed=0)[0]
        model = SoftmaxRegression(small_data.n_features, small_data.n_classes)
        theta = np.full(model.dim, 0.01)
        g = local_gradient(worker, theta, worker.m, np.random.default_rng(0), model)
        _, full = model.loss_and_grad(theta, worker.features, worker.labels)
        assert np.allclose(g, full)

    def test_local_gradient_follows_rng(self, small_data):
        worker = generate_workers(small_data, 1, seed=0)[0]
        model = SoftmaxRegression(small_data.n_features, small_data.n_classes)
        theta = np.zeros(model.dim)
        first = local_gradient(worker, theta, 4, np.random.default_rng(5), model)
        second = local_gradient(worker, theta, 4, np.random.default_rng(5), model)
        assert np.array_equal(first, second)


class TestTrainingConfig:

    def test_byzantine_majority_rejected(self):
        with pytest.raises(ValueError):
            TrainingConfig(n_workers=6, byzantine=3)

    def test_batch_bounded_by_local_data(self):
        with pytest.raises(ValueError):
            TrainingConfig(batch_size=100, data=DataConfig(samples_per_worker=10))

    def test_two_phase_needs_outer(self):
        with pytest.raises(ValueError):
            MethodSpec(name="broken", protocol=Protocol.TWO_PHASE, inner="centerwo")

    def test_presets(self):
        cent2p = MethodSpec.parse("cent2p")
        assert cent2p.protocol is Protocol.TWO_PHASE
        assert cent2p.outer.rule.value == "outer_center"


class TestSingleAggregationRuns:

    def test_record_shape(self, small_training):
        record = run_training(small_training)
        assert len(record.rounds) == small_training.rounds
        assert record.protocol is Protocol.RASHB
        assert 0.0 <= record.final_accuracy <= 1.0
        assert record.final_accuracy == record.rounds[-1].test_accuracy
        assert record.residual >= 0.0
        assert record.inner_commit_fraction is None

    def test_deterministic(self, small_training):
        first = run_training(small_training)
        second = run_training(small_training)
        assert first.model_dump() == second.model_dump()

    def test_seed_changes_trajectory(self, small_training):
        other = small_training.model_copy(update={"seed": small_training.seed + 1})
        assert run_training(small_training).rounds[-1].train_loss != run_training(other).rounds[-1].train_loss

    def test_clean_average_learns(self, small_training):
        config = small_training.model_copy(update={"byzantine": 0, "attack": AttackSpec.parse("none"), "rounds": 60})
        record = run_training(config)
        assert record.rounds[-1].train_loss < record.rounds[0].train_loss
        assert record.final_accuracy > 1.0 / config.data.n_classes

    def test_recorded_vectors(self, small_training):
        record = run_training(small_training.model_copy(update={"record_vectors": True, "rounds": 3}))
        assert all(r.aggregate is not None for r in record.rounds)
        assert record.averaged_model is not None

    def test_rashb_run_forces_single_phase(self, small_training):
        config = small_training.model_copy(update={"method": MethodSpec.parse("cent2p")})
        assert rashb_run(config).protocol is Protocol.RASHB

    def test_non_finite_parameters_abort(self, small_training, mocker):
        dim = SoftmaxRegression(small_training.data.n_features, small_training.data.n_classes).dim
        mocker.patch.object(aggregation_service, "aggregate", return_value=np.full(dim, np.inf))
        with pytest.raises(SimulationError):
            run_training(small_training)


class TestTwoPhaseRuns:

    def test_votes_and_choices(self, small_training):
        config = small_training.model_copy(update={"method": MethodSpec.parse("cent2p")})
        record = run_training(config)
        assert record.protocol is Protocol.TWO_PHASE
        for r in record.rounds:
            assert r.chosen in (ProposalChoice.INNER, ProposalChoice.OUTER)
            assert r.votes_inner + r.votes_outer == config.n_workers
        assert 0.0 <= record.inner_commit_fraction <= 1.0

    def test_requires_outer(self, small_training):
        with pytest.raises(PreconditionError):
            two_phase_run(small_training)

    def test_identical_proposals_match_single_phase(self, small_training):
        clean = small_training.model_copy(update={"byzantine": 0, "attack": AttackSpec.parse("none")})
        twin = MethodSpec(name="avg2p", protocol=Protocol.TWO_PHASE, inner="avg", outer="avg")
        single = rashb_run(clean)
        double = two_phase_run(clean.model_copy(update={"method": twin}))
        assert [r.train_loss for r in single.rounds] == [r.train_loss for r in double.rounds]
        assert all(r.chosen is ProposalChoice.INNER for r in double.rounds)


class TestLabelFlipRuns:

    def test_byzantine_workers_train_on_flipped_labels(self, small_training):
        config = small_training.model_copy(update={"attack": AttackSpec.parse("lf")})
        sim = TrainingSimulator(config)
        original = generate_workers(config.data, config.n_workers, config.seed)
        C = config.data.n_classes
        for j in range(config.honest_count, config.n_workers):
            assert np.array_equal(sim.workers[j].labels, C - 1 - original[j].labels)
        for j in range(config.honest_count):
            assert np.array_equal(sim.workers[j].labels, original[j].labels)


class TestHeterogeneity:

    def test_dirichlet_is_more_heterogeneous(self):
        model = SoftmaxRegression(5, 4)
        thetas = [np.zeros(model.dim)]
        uniform = generate_workers(DataConfig(n_classes=4, n_features=5, samples_per_worker=60), 8, seed=0)
        skewed = generate_workers(
            DataConfig(n_classes=4, n_features=5, samples_per_worker=60, mode=DataMode.DIRICHLET, alpha=0.1), 8, seed=0
        )
        g_uniform, _ = heterogeneity_diag(uniform, thetas, model)
        g_skewed, sigma = heterogeneity_diag(skewed, thetas, model)
        assert g_skewed > g_uniform
        assert sigma > 0

    def test_needs_parameters(self):
        with pytest.raises(PreconditionError):
            heterogeneity_diag([], [], SoftmaxRegression(2, 2))


def _rescue_config(method: str, attack: str, seed: int) -> TrainingConfig:
    return TrainingConfig(
        n_workers=35,
        byzantine=7,
        rounds=300,
        method=method,
        attack=attack,
        seed=seed,
    )


@pytest.mark.slow
@pytest.mark.parametrize("method", ["cent2p", "mean2p"])
def test_two_phase_commits_inner_under_siege(method):
    fractions = [run_training(_rescue_config(method, "siege", seed)).inner_commit_fraction for seed in range(3)]
    assert np.mean(fractions) >= 0.8


@pytest.mark.slow
@pytest.mark.parametrize("method", ["cent2p", "mean2p"])
def test_two_phase_commits_outer_under_sneak(method):
    fractions = [run_training(_rescue_config(method, "sneak", seed)).inner_commit_fraction for seed in range(3)]
    assert 1.0 - np.mean(fractions) >= 0.8
