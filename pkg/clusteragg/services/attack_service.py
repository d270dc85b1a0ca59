"""
Byzantine attack service: crafts the f malicious update vectors of a round,
decides Byzantine votes, and relabels data for the label-flipping attack.

The adversary is omniscient: it sees every honest update of the round and
the update each corrupted worker would have sent honestly.
"""
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from clusteragg.core.exceptions import AttackConfigurationError, PreconditionError
from clusteragg.core.logging_config import get_logger
from clusteragg.schemas.aggregators import AggregationRule, AggregatorSpec
from clusteragg.schemas.attacks import AttackKind, AttackSpec, OmnReference
from clusteragg.services.aggregation_service import aggregation_service
from clusteragg.services.data_service import WorkerData
from clusteragg.services.geometry import VectorSet

logger = get_logger("services.attack")

GOLDEN_RATIO = (math.sqrt(5.0) - 1.0) / 2.0
PGA_GOLDEN_STEPS = 10


@dataclass
class AttackContext:
    """What the adversary knows when crafting one round."""
    honest: np.ndarray
    f: int
    rng: np.random.Generator
    byzantine_true: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        self.honest = np.atleast_2d(np.asarray(self.honest, dtype=np.float64))
        if self.honest.shape[0] == 0:
            raise PreconditionError("Attack context needs at least one honest update")
        if self.f < 0 or 2 * self.f >= self.n:
            raise PreconditionError(f"Attack needs 0 <= f < n/2 (n={self.n}, f={self.f})")
        if self.byzantine_true is not None:
            self.byzantine_true = np.atleast_2d(np.asarray(self.byzantine_true, dtype=np.float64))
            if self.byzantine_true.shape != (self.f, self.d):
                raise PreconditionError(
                    f"byzantine_true must have shape {(self.f, self.d)}, got {self.byzantine_true.shape}"
                )

    @property
    def n(self) -> int:
        return self.honest.shape[0] + self.f

    @property
    def d(self) -> int:
        return self.honest.shape[1]

    @property
    def honest_mean(self) -> np.ndarray:
        return self.honest.mean(axis=0)

    def corrupted_true(self) -> np.ndarray:
        """Honest-computed updates of the corrupted workers; designated honest updates when unknown."""
        if self.byzantine_true is not None:
            return self.byzantine_true
        h = self.honest.shape[0]
        return self.honest[[i % h for i in range(self.f)]]


@dataclass
class PGAResult:
    gamma: float
    displacement: float
    vector: np.ndarray
    trace: List[Tuple[float, float]] = field(default_factory=list)


def _unit(v: np.ndarray) -> Optional[np.ndarray]:
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        return None
    return v / norm


def bias_direction(spec: AttackSpec, ctx: AttackContext) -> np.ndarray:
    """Sneak/siege direction: configured, else away from the honest mean, else the first axis."""
    if spec.direction is not None:
        u = np.asarray(spec.direction, dtype=np.float64)
        if u.shape != (ctx.d,):
            raise AttackConfigurationError(
                f"direction has {u.size} entries, expected {ctx.d}", attack_kind=spec.label
            )
        unit = _unit(u)
        if unit is None:
            raise AttackConfigurationError("direction must be nonzero", attack_kind=spec.label)
        return unit
    unit = _unit(-ctx.honest_mean)
    if unit is None:
        unit = np.zeros(ctx.d)
        unit[0] = 1.0
    return unit


class AttackService:
    """Per-kind crafting of Byzantine update vectors."""

    def __init__(self) -> None:
        self._crafters: Dict[AttackKind, Callable[[AttackSpec, AttackContext], np.ndarray]] = {
            AttackKind.NONE: self._honest_behaviour,
            AttackKind.LF: self._honest_behaviour,
            AttackKind.SF: self._sign_flip,
            AttackKind.GAUSS: self._gaussian,
            AttackKind.OMN: self._omniscient,
            AttackKind.EMPIRE: self._fall_of_empire,
            AttackKind.SV: self._scaled_variance,
            AttackKind.SNEAK: self._sneak,
            AttackKind.SIEGE: self._siege,
            AttackKind.PGA: self._pga,
        }

    def craft(self, spec: AttackSpec, ctx: AttackContext) -> np.ndarray:
        """Exactly ``f`` finite vectors of dimension ``d`` as an ``(f, d)`` array."""
        spec = AttackSpec.parse(spec)
        if ctx.f == 0:
            return np.zeros((0, ctx.d))
        out = self._crafters[spec.kind](spec, ctx)
        out = np.atleast_2d(out)
        if out.shape != (ctx.f, ctx.d) or not np.all(np.isfinite(out)):
            raise AttackConfigurationError(
                f"{spec.label} produced an invalid batch of shape {out.shape}", attack_kind=spec.label
            )
        return out

    @staticmethod
    def _honest_behaviour(spec: AttackSpec, ctx: AttackContext) -> np.ndarray:
        # label flipping already acted on the data
        return ctx.corrupted_true().copy()

    @staticmethod
    def _sign_flip(spec: AttackSpec, ctx: AttackContext) -> np.ndarray:
        return -ctx.corrupted_true()

    @staticmethod
    def _gaussian(spec: AttackSpec, ctx: AttackContext) -> np.ndarray:
        rng = np.random.default_rng(spec.seed) if spec.seed is not None else ctx.rng
        replaced = ctx.corrupted_true()
        noise = rng.standard_normal(replaced.shape)
        noise_norm = np.maximum(np.linalg.norm(noise, axis=1, keepdims=True), 1e-300)
        return noise / noise_norm * np.linalg.norm(replaced, axis=1, keepdims=True)

    @staticmethod
    def _omniscient(spec: AttackSpec, ctx: AttackContext) -> np.ndarray:
        corrupted = ctx.corrupted_true()
        if spec.omn_reference is OmnReference.ALL_TRUE:
            reference = np.vstack([ctx.honest, corrupted]).mean(axis=0)
        else:
            reference = ctx.honest_mean
        vector = reference - (2.0 * ctx.n / ctx.f) * corrupted.mean(axis=0)
        return np.tile(vector, (ctx.f, 1))

    @staticmethod
    def _fall_of_empire(spec: AttackSpec, ctx: AttackContext) -> np.ndarray:
        return np.tile(spec.empire_scale * ctx.honest_mean, (ctx.f, 1))

    @staticmethod
    def _scaled_variance(spec: AttackSpec, ctx: AttackContext) -> np.ndarray:
        everyone = np.vstack([ctx.honest, ctx.corrupted_true()])
        vector = everyone.mean(axis=0) + spec.sv_multiplier * everyone.std(axis=0)
        return np.tile(vector, (ctx.f, 1))

    @staticmethod
    def _sneak(spec: AttackSpec, ctx: AttackContext) -> np.ndarray:
        """
        Stack all Byzantine vectors at ``scale`` times the honest radius from
        the honest mean along the bias direction, inside the honest ball.
        """
        mean = ctx.honest_mean
        radius = float(np.linalg.norm(ctx.honest - mean, axis=1).max())
        if radius == 0.0:
            radius = 1.0
        u = bias_direction(spec, ctx)
        return np.tile(mean + spec.scale * radius * u, (ctx.f, 1))

    @staticmethod
    def _siege(spec: AttackSpec, ctx: AttackContext) -> np.ndarray:
        """Ring of vectors just outside the honest cloud, biased toward one direction."""
        mean = ctx.honest_mean
        radius = float(np.linalg.norm(ctx.honest - mean, axis=1).max())
        if radius == 0.0:
            radius = 1.0
        u = bias_direction(spec, ctx)
        low, high = spec.siege_range
        scales = np.linspace(low, high, ctx.f)
        jitter = ctx.rng.standard_normal((ctx.f, ctx.d))
        jitter -= np.outer(jitter @ u, u)
        directions = u[None, :] + 0.5 * jitter
        directions /= np.maximum(np.linalg.norm(directions, axis=1, keepdims=True), 1e-12)
        return mean + radius * scales[:, None] * directions

    def _pga(self, spec: AttackSpec, ctx: AttackContext) -> np.ndarray:
        result = self.pga_search(spec, ctx)
        return np.tile(result.vector, (ctx.f, 1))

    def pga_search(self, spec: AttackSpec, ctx: AttackContext) -> PGAResult:
        """
        Scale search along the static direction sign(mean of honest updates).

        The malicious vector is ``g + gamma * sign(g)`` for the honest mean
        ``g``; gamma in ``[0, pga_max_scale * ||g||]`` is chosen to maximize
        how far the target aggregator lands from ``g``. A uniform grid is
        refined by golden-section steps around its best point. A rule that
        filters the malicious vectors stops moving, so the search settles on
        the largest scale the target still lets through. Without a configured
        target the average is displaced.
        """
        target = spec.pga_target or AggregatorSpec(rule=AggregationRule.AVG)
        base = ctx.honest_mean
        direction = np.sign(base)
        upper = spec.pga_max_scale * float(np.linalg.norm(base))
        trace: List[Tuple[float, float]] = []

        def displacement(gamma: float) -> float:
            malicious = base + gamma * direction
            X = VectorSet(np.vstack([ctx.honest, np.tile(malicious, (ctx.f, 1))]), ctx.f)
            value = float(np.linalg.norm(aggregation_service.aggregate(target, X) - base))
            trace.append((gamma, value))
            return value

        golden_steps = min(PGA_GOLDEN_STEPS, spec.pga_evaluations // 2)
        grid = np.linspace(0.0, upper, spec.pga_evaluations - golden_steps)
        scores = [displacement(float(g)) for g in grid]
        best = int(np.argmax(scores))

        low = float(grid[max(best - 1, 0)])
        high = float(grid[min(best + 1, len(grid) - 1)])
        a, b = high - GOLDEN_RATIO * (high - low), low + GOLDEN_RATIO * (high - low)
        fa, fb = displacement(a), displacement(b)
        for _ in range(golden_steps - 2):
            if fa >= fb:
                high, b, fb = b, a, fa
                a = high - GOLDEN_RATIO * (high - low)
                fa = displacement(a)
            else:
                low, a, fa = a, b, fb
                b = low + GOLDEN_RATIO * (high - low)
                fb = displacement(b)

        gamma, value = max(trace, key=lambda item: item[1])
        logger.debug(f"PGA search picked gamma={gamma:.4g} displacement={value:.4g}")
        return PGAResult(gamma=gamma, displacement=value, vector=base + gamma * direction, trace=trace)


attack_service = AttackService()


def craft(spec: AttackSpec, ctx: AttackContext) -> np.ndarray:
    return attack_service.craft(spec, ctx)


def byzantine_vote(losses: Sequence[float]) -> int:
    """Index of the proposal with the larger honest loss; ties go to the second proposal."""
    first, second = float(losses[0]), float(losses[1])
    if math.isnan(first):
        return 0
    if math.isnan(second):
        return 1
    return 0 if first > second else 1


def default_flip_permutation(n_classes: int) -> List[int]:
    """y -> C - 1 - y."""
    return [n_classes - 1 - y for y in range(n_classes)]


def validate_permutation(permutation: Sequence[int], n_classes: int) -> np.ndarray:
    perm = np.asarray(permutation, dtype=np.int64)
    if perm.shape != (n_classes,) or sorted(perm.tolist()) != list(range(n_classes)):
        raise AttackConfigurationError(
            f"Label permutation must be a bijection on 0..{n_classes - 1}", attack_kind=AttackKind.LF.value
        )
    return perm


def label_flip(data: WorkerData, permutation: Optional[Sequence[int]] = None) -> WorkerData:
    """Relabel a worker's training samples through ``permutation``; features are untouched."""
    perm = validate_permutation(
        default_flip_permutation(data.n_classes) if permutation is None else permutation, data.n_classes
    )
    return replace(data, labels=perm[data.labels])


# Honest points shared by both dilemma fixtures; their centroid is the origin.
_DILEMMA_HONEST = np.array(
    [[0.0, 0.0], [2.0, 0.0], [-2.0, 0.0], [0.0, 2.0], [0.0, -2.0], [1.5, 1.5], [-1.5, -1.5]]
)


def dilemma_fixture(kind: AttackKind) -> VectorSet:
    """
    Seven honest points plus four Byzantine points (n = 11, f = 5).

    Sneak stacks the Byzantine points inside the honest hull at (1, 0);
    siege parks them just outside it around (5.5, 0). Honest indices are 0..6.
    """
    if kind is AttackKind.SNEAK:
        byzantine = np.tile([1.0, 0.0], (4, 1))
    elif kind is AttackKind.SIEGE:
        byzantine = np.array([[5.0, 1.0], [5.0, -1.0], [6.0, 1.0], [6.0, -1.0]])
    else:
        raise AttackConfigurationError(f"No dilemma fixture for '{kind.value}'", attack_kind=kind.value)
    return VectorSet(np.vstack([_DILEMMA_HONEST, byzantine]), f=5)
