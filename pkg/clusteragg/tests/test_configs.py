"""
The shipped experiment configs must load.
"""
from pathlib import Path

import pytest

from clusteragg.schemas.experiments import ExperimentConfig

CONFIG_DIR = Path(__file__).resolve().parents[2] / "configs"


@pytest.mark.parametrize("path", sorted(CONFIG_DIR.glob("*.toml")), ids=lambda p: p.stem)
def test_config_loads(path):
    config = ExperimentConfig.from_toml(path)
    assert config.name == path.stem
    for rate in config.adversarial_rates:
        for method in config.methods:
            config.training_config(method, config.attacks[0], rate, config.seeds[0])
