"""
Synthetic heterogeneous worker data.

Every worker draws a class distribution q (Dirichlet around a prior p, or
p itself in uniform mode) and samples labels from q; features come from
fixed per-class Gaussian blobs. Train and test samples share q.
"""
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from clusteragg.core.exceptions import ValidationError
from clusteragg.core.random import Stream, derive_rng
from clusteragg.schemas.training import DataConfig, DataMode


@dataclass(frozen=True)
class WorkerData:
    """One worker's local train/test samples and the class distribution they came from."""
    features: np.ndarray
    labels: np.ndarray
    test_features: np.ndarray
    test_labels: np.ndarray
    class_distribution: np.ndarray

    def __post_init__(self) -> None:
        q = self.class_distribution
        if abs(float(q.sum()) - 1.0) > 1e-9 or np.any(q < 0):
            raise ValidationError("class_distribution must be a probability vector")
        for labels in (self.labels, self.test_labels):
            if labels.size and (labels.min() < 0 or labels.max() >= q.shape[0]):
                raise ValidationError("labels must lie in [0, n_classes)")
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValidationError("features and labels disagree on sample count")

    @property
    def n_classes(self) -> int:
        return int(self.class_distribution.shape[0])

    @property
    def m(self) -> int:
        return int(self.labels.shape[0])

    def label_histogram(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)


def sample_dirichlet(rng: np.random.Generator, concentration: np.ndarray) -> np.ndarray:
    """
    Dirichlet draw computed in log space.

    Uses Gamma(a) = Gamma(a + 1) * U^(1/a), so concentrations far below 1
    do not underflow to an all-zero vector.
    """
    a = np.asarray(concentration, dtype=np.float64)
    log_gamma = np.log(rng.gamma(a + 1.0)) + np.log(rng.uniform(size=a.shape)) / a
    log_gamma -= log_gamma.max()
    weights = np.exp(log_gamma)
    return weights / weights.sum()


def _class_means(seed: int, n_classes: int, n_features: int, separation: float) -> np.ndarray:
    return derive_rng(seed, Stream.DATA, 0).normal(scale=separation, size=(n_classes, n_features))


def gen_hetero_data(
    n_workers: int,
    m: int,
    n_classes: int,
    alpha: Optional[float],
    prior: Optional[Sequence[float]],
    seed: int,
    *,
    n_features: int = 20,
    test_m: Optional[int] = None,
    class_separation: float = 1.0,
    feature_noise: float = 1.0,
) -> List[WorkerData]:
    """
    Per-worker datasets with q ~ Dir(alpha * p); ``alpha=None`` means q = p.

    Worker ``i`` depends only on ``(seed, i)``.
    """
    if alpha is not None and alpha <= 0:
        raise ValidationError(f"alpha must be positive, got {alpha}", field="alpha")
    p = np.full(n_classes, 1.0 / n_classes) if prior is None else np.asarray(prior, dtype=np.float64)
    if p.shape != (n_classes,) or np.any(p < 0) or abs(float(p.sum()) - 1.0) > 1e-9:
        raise ValidationError("prior must be a probability vector over the classes", field="prior")
    test_m = m if test_m is None else test_m
    means = _class_means(seed, n_classes, n_features, class_separation)

    workers: List[WorkerData] = []
    for i in range(n_workers):
        rng = derive_rng(seed, Stream.DATA, 1, i)
        q = p.copy() if alpha is None else sample_dirichlet(rng, alpha * p)

        def draw(count: int):
            labels = rng.choice(n_classes, size=count, p=q)
            features = means[labels] + feature_noise * rng.standard_normal((count, n_features))
            return features, labels

        features, labels = draw(m)
        test_features, test_labels = draw(test_m)
        workers.append(WorkerData(features, labels, test_features, test_labels, q))
    return workers


def generate_workers(config: DataConfig, n_workers: int, seed: int) -> List[WorkerData]:
    """``gen_hetero_data`` driven by a ``DataConfig``."""
    return gen_hetero_data(
        n_workers,
        config.samples_per_worker,
        config.n_classes,
        config.alpha if config.mode is DataMode.DIRICHLET else None,
        config.prior,
        seed,
        n_features=config.n_features,
        test_m=config.test_samples_per_worker,
        class_separation=config.class_separation,
        feature_noise=config.feature_noise,
    )
