"""
Pytest configuration and shared fixtures for the clusteragg tests.
"""
from pathlib import Path

import numpy as np
import pytest

from clusteragg.schemas.attacks import AttackKind
from clusteragg.schemas.experiments import ExperimentConfig
from clusteragg.schemas.training import DataConfig, ModelConfig, TrainingConfig
from clusteragg.services.attack_service import dilemma_fixture
from clusteragg.services.geometry import VectorSet


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def sneak_set() -> VectorSet:
    return dilemma_fixture(AttackKind.SNEAK)


@pytest.fixture
def siege_set() -> VectorSet:
    return dilemma_fixture(AttackKind.SIEGE)


@pytest.fixture
def honest_centroid() -> np.ndarray:
    return np.zeros(2)


@pytest.fixture
def small_data() -> DataConfig:
    return DataConfig(n_classes=4, n_features=6, samples_per_worker=24, test_samples_per_worker=12)


@pytest.fixture
def small_training(small_data: DataConfig) -> TrainingConfig:
    """A seconds-scale run: 7 workers, 2 Byzantine, 15 rounds."""
    return TrainingConfig(
        n_workers=7,
        byzantine=2,
        rounds=15,
        batch_size=4,
        eval_batch_size=8,
        data=small_data,
        model=ModelConfig(),
        method="avg",
        attack="sf",
        seed=3,
    )


@pytest.fixture
def tiny_matrix_raw() -> dict:
    return {
        "name": "tiny",
        "n_workers": 7,
        "adversarial_rates": [0.2],
        "methods": ["avg", "cent2p"],
        "attacks": ["sf", "gauss"],
        "seeds": [0, 1],
        "rounds": 4,
        "batch_size": 4,
        "eval_batch_size": 8,
        "data": {"n_classes": 3, "n_features": 4, "samples_per_worker": 12, "test_samples_per_worker": 6},
    }


@pytest.fixture
def tiny_matrix(tiny_matrix_raw: dict) -> ExperimentConfig:
    return ExperimentConfig.from_mapping(tiny_matrix_raw)


@pytest.fixture
def tiny_toml(tmp_path: Path) -> Path:
    path = tmp_path / "tiny.toml"
    path.write_text(
        'name = "tiny"\n'
        "n_workers = 7\n"
        "adversarial_rates = [0.2]\n"
        'methods = ["avg", "cent2p"]\n'
        'attacks = ["sf", { kind = "gauss" }]\n'
        "seeds = [0, 1]\n"
        "rounds = 4\n"
        "batch_size = 4\n"
        "eval_batch_size = 8\n"
        "\n"
        "[data]\n"
        "n_classes = 3\n"
        "n_features = 4\n"
        "samples_per_worker = 12\n"
        "test_samples_per_worker = 6\n"
    )
    return path
