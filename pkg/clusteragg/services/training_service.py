"""
Simulated server/worker training: resilient aggregated heavy ball, its
two-phase propose-and-vote variant, and heterogeneity diagnostics.

Workers are the first ``n - f`` indices (honest) followed by ``f``
Byzantine ones. Every random draw comes from a stream keyed by
``(seed, worker, round)``, so results do not depend on execution order.
"""
import hashlib
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import orjson

from clusteragg.core.exceptions import DimensionMismatchError, PreconditionError, SimulationError
from clusteragg.core.logging_config import get_logger
from clusteragg.core.random import Stream, derive_rng
from clusteragg.monitoring.metrics import training_rounds_total, vote_outcomes_total
from clusteragg.schemas.attacks import AttackKind
from clusteragg.schemas.training import (
    LRSchedule,
    ProposalChoice,
    Protocol,
    RoundRecord,
    RunRecord,
    ScheduleConfig,
    TrainingConfig,
)
from clusteragg.services.aggregation_service import aggregation_service
from clusteragg.services.attack_service import AttackContext, attack_service, byzantine_vote, label_flip
from clusteragg.services.data_service import WorkerData, generate_workers
from clusteragg.services.geometry import VectorSet
from clusteragg.services.model_service import Model, build_model

logger = get_logger("services.training")


def momentum_update(m_prev: np.ndarray, g: np.ndarray, beta: float) -> np.ndarray:
    """m_t = beta * m_{t-1} + (1 - beta) * g_t."""
    m_prev = np.asarray(m_prev, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if m_prev.shape != g.shape:
        raise DimensionMismatchError(int(m_prev.size), int(g.size))
    return beta * m_prev + (1.0 - beta) * g


def learning_rate(schedule: ScheduleConfig, t: int) -> float:
    """gamma_t for round ``t`` (0-based)."""
    if schedule.kind is LRSchedule.INVERSE_SQRT:
        return schedule.lr / math.sqrt(t + 1)
    if schedule.kind is LRSchedule.STEP:
        return schedule.lr * schedule.decay ** (t // schedule.step_size)
    return schedule.lr


def sample_batch(rng: np.random.Generator, m: int, b: int) -> np.ndarray:
    if b < 1:
        raise PreconditionError("Batch size must be at least 1")
    if b > m:
        raise PreconditionError(f"Batch size {b} exceeds the {m} local samples")
    return rng.choice(m, size=b, replace=False)


def local_gradient(w: WorkerData, theta: np.ndarray, b: int, rng: np.random.Generator, model: Model) -> np.ndarray:
    """Mini-batch cross-entropy gradient on ``b`` local samples drawn without replacement."""
    idx = sample_batch(rng, w.m, b)
    _, grad = model.loss_and_grad(theta, w.features[idx], w.labels[idx])
    return grad


def run_config_hash(config: TrainingConfig) -> str:
    payload = orjson.dumps(config.model_dump(mode="json"), option=orjson.OPT_SORT_KEYS)
    return hashlib.sha256(payload).hexdigest()[:16]


@dataclass
class RoundState:
    """Mutable per-round training state."""
    t: int
    theta: np.ndarray
    momenta: np.ndarray
    lr: float
    beta: float
    batch_size: int

    def __post_init__(self) -> None:
        if not 0 <= self.beta < 1:
            raise PreconditionError(f"Momentum coefficient must satisfy 0 <= beta < 1, got {self.beta}")
        if self.momenta.shape[1] != self.theta.shape[0]:
            raise DimensionMismatchError(self.theta.shape[0], self.momenta.shape[1])


class TrainingSimulator:
    """One simulated run: data, model, workers and the server loop."""

    def __init__(self, config: TrainingConfig):
        self.config = config
        self.f = config.byzantine
        self.n = config.n_workers
        self.h = config.honest_count
        self.seed = config.seed
        self.workers = generate_workers(config.data, self.n, self.seed)
        if config.attack.kind is AttackKind.LF:
            for j in range(self.h, self.n):
                self.workers[j] = label_flip(self.workers[j], config.attack.lf_permutation)
        self.model = build_model(config.model, config.data.n_features, config.data.n_classes)
        honest = self.workers[: self.h]
        self.test_X = np.vstack([w.test_features for w in honest])
        self.test_y = np.concatenate([w.test_labels for w in honest])
        theta0 = self.model.init(derive_rng(self.seed, Stream.MODEL_INIT), config.model.init_scale)
        self.state = RoundState(
            t=0,
            theta=theta0,
            momenta=np.zeros((self.n, self.model.dim)),
            lr=learning_rate(config.schedule, 0),
            beta=config.momentum,
            batch_size=config.batch_size,
        )

    def honest_loss_and_grad(self, theta: np.ndarray) -> Tuple[float, np.ndarray]:
        """Full honest objective: mean of the honest workers' local losses."""
        losses, grads = zip(*(self.model.loss_and_grad(theta, w.features, w.labels) for w in self.workers[: self.h]))
        return float(np.mean(losses)), np.mean(grads, axis=0)

    def _compute_momenta(self) -> np.ndarray:
        state = self.state
        for i, w in enumerate(self.workers):
            rng = derive_rng(self.seed, Stream.GRADIENT, i, state.t)
            g = local_gradient(w, state.theta, state.batch_size, rng, self.model)
            state.momenta[i] = momentum_update(state.momenta[i], g, state.beta)
        return state.momenta

    def _received_vectors(self) -> VectorSet:
        momenta = self._compute_momenta()
        honest, byzantine_true = momenta[: self.h], momenta[self.h:]
        if self.f > 0:
            ctx = AttackContext(
                honest=honest,
                f=self.f,
                rng=derive_rng(self.seed, Stream.ATTACK, self.state.t),
                byzantine_true=byzantine_true,
            )
            byzantine = attack_service.craft(self.config.attack, ctx)
            received = np.vstack([honest, byzantine])
        else:
            received = honest.copy()
        return VectorSet(received, self.f)

    def _vote(self, proposal_inner: np.ndarray, proposal_outer: np.ndarray) -> Tuple[ProposalChoice, int, int]:
        """Honest workers vote for the lower loss on a fresh batch; Byzantine workers for the higher."""
        eval_size = self.config.eval_batch_size
        inner_losses, outer_losses = [], []
        for i, w in enumerate(self.workers[: self.h]):
            rng = derive_rng(self.seed, Stream.VOTE, i, self.state.t)
            idx = rng.choice(w.m, size=eval_size, replace=eval_size > w.m)
            X, y = w.features[idx], w.labels[idx]
            inner_losses.append(self.model.loss(proposal_inner, X, y))
            outer_losses.append(self.model.loss(proposal_outer, X, y))
        votes_inner = sum(1 for a, b in zip(inner_losses, outer_losses) if a <= b)
        votes_outer = self.h - votes_inner
        if self.f > 0:
            adversary_pick = byzantine_vote((float(np.mean(inner_losses)), float(np.mean(outer_losses))))
            if adversary_pick == 0:
                votes_inner += self.f
            else:
                votes_outer += self.f
        winner = ProposalChoice.INNER if votes_inner >= votes_outer else ProposalChoice.OUTER
        vote_outcomes_total.labels(winner=winner.value).inc()
        return winner, votes_inner, votes_outer

    def run(self) -> RunRecord:
        config = self.config
        method = config.method
        protocol = method.protocol
        rounds: List[RoundRecord] = []
        theta_sum = np.zeros(self.model.dim)
        residual_sum = 0.0

        for t in range(config.rounds):
            state = self.state
            state.t = t
            state.lr = learning_rate(config.schedule, t)
            _, full_grad = self.honest_loss_and_grad(state.theta)
            residual_sum += float(full_grad @ full_grad)

            X = self._received_vectors()
            inner_update = aggregation_service.aggregate(method.inner, X)
            chosen: Optional[ProposalChoice] = None
            votes: Tuple[Optional[int], Optional[int]] = (None, None)
            if protocol is Protocol.TWO_PHASE:
                outer_update = aggregation_service.aggregate(method.outer, X)
                proposal_inner = state.theta - state.lr * inner_update
                proposal_outer = state.theta - state.lr * outer_update
                chosen, votes_in, votes_out = self._vote(proposal_inner, proposal_outer)
                votes = (votes_in, votes_out)
                update = inner_update if chosen is ProposalChoice.INNER else outer_update
                state.theta = proposal_inner if chosen is ProposalChoice.INNER else proposal_outer
            else:
                update = inner_update
                state.theta = state.theta - state.lr * update

            if not np.all(np.isfinite(state.theta)):
                raise SimulationError("Model parameters became non-finite", round_index=t)
            theta_sum += state.theta
            train_loss, _ = self.honest_loss_and_grad(state.theta)
            rounds.append(RoundRecord(
                round=t,
                learning_rate=state.lr,
                train_loss=train_loss,
                test_accuracy=self.model.accuracy(state.theta, self.test_X, self.test_y),
                aggregate_norm=float(np.linalg.norm(update)),
                aggregate=update.tolist() if config.record_vectors else None,
                chosen=chosen,
                votes_inner=votes[0],
                votes_outer=votes[1],
            ))
            training_rounds_total.labels(protocol=protocol.value).inc()
            logger.debug(
                f"round {t}: loss={train_loss:.4f} acc={rounds[-1].test_accuracy:.3f}",
                extra={"round": t, "rule": method.name, "attack": config.attack.label, "seed": config.seed},
            )

        averaged = theta_sum / config.rounds
        record = RunRecord(
            method=method.name,
            attack=config.attack.label,
            seed=config.seed,
            protocol=protocol,
            n_workers=self.n,
            byzantine=self.f,
            config_hash=run_config_hash(config),
            rounds=rounds,
            final_accuracy=rounds[-1].test_accuracy,
            averaged_accuracy=self.model.accuracy(averaged, self.test_X, self.test_y),
            final_train_loss=rounds[-1].train_loss,
            residual=residual_sum / config.rounds,
            averaged_model=averaged.tolist() if config.record_vectors else None,
        )
        logger.info(
            f"Run {method.name}/{config.attack.label}/seed{config.seed} finished: "
            f"accuracy={record.final_accuracy:.3f} averaged={record.averaged_accuracy:.3f}",
            extra={"rule": method.name, "attack": config.attack.label, "seed": config.seed},
        )
        return record


def rashb_run(config: TrainingConfig) -> RunRecord:
    """Single-phase run with ``config.method.inner`` as the server's aggregator."""
    if config.method.protocol is not Protocol.RASHB:
        config = config.model_copy(update={"method": config.method.model_copy(update={"protocol": Protocol.RASHB})})
    return TrainingSimulator(config).run()


def two_phase_run(config: TrainingConfig) -> RunRecord:
    """Propose inner and outer updates each round and commit the vote winner."""
    if config.method.outer is None:
        raise PreconditionError(f"Method '{config.method.name}' has no outer aggregator for a two-phase run")
    if config.method.protocol is not Protocol.TWO_PHASE:
        config = config.model_copy(update={"method": config.method.model_copy(update={"protocol": Protocol.TWO_PHASE})})
    return TrainingSimulator(config).run()


def run_training(config: TrainingConfig) -> RunRecord:
    if config.method.protocol is Protocol.TWO_PHASE:
        return two_phase_run(config)
    return rashb_run(config)


def heterogeneity_diag(workers: Sequence[WorkerData], thetas: Sequence[np.ndarray], model: Model) -> Tuple[float, float]:
    """
    Empirical (G^2, sigma^2) maxima over the sampled parameters.

    G^2 is the mean squared deviation of the workers' full local gradients
    from their average; sigma^2 is the worst worker's mean squared deviation
    of single-sample gradients from its local gradient.
    """
    if not thetas:
        raise PreconditionError("heterogeneity_diag needs at least one sampled theta")
    g_sq = 0.0
    sigma_sq = 0.0
    for theta in thetas:
        local = []
        for w in workers:
            per_sample = model.per_sample_grads(theta, w.features, w.labels)
            mean = per_sample.mean(axis=0)
            local.append(mean)
            sigma_sq = max(sigma_sq, float(np.mean(np.sum((per_sample - mean) ** 2, axis=1))))
        local_arr = np.vstack(local)
        spread = local_arr - local_arr.mean(axis=0)
        g_sq = max(g_sq, float(np.mean(np.sum(spread ** 2, axis=1))))
    return g_sq, sigma_sq
