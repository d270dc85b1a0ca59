"""
Tests for experiment matrix configuration.
"""
import pytest

from clusteragg.core.exceptions import ConfigurationError
from clusteragg.schemas.aggregators import AggregationRule
from clusteragg.schemas.attacks import AttackKind, AttackSpec
from clusteragg.schemas.experiments import (
    ExperimentConfig,
    apply_override,
    byzantine_count,
    parse_override,
)
from clusteragg.schemas.training import Protocol


class TestByzantineCount:

    @pytest.mark.parametrize(
        "rate,n,expected",
        [(0.4, 35, 14), (0.2, 35, 7), (0.1, 35, 3), (0.0, 35, 0), (0.3, 10, 3)],
    )
    def test_floor(self, rate, n, expected):
        assert byzantine_count(rate, n) == expected


class TestExperimentConfig:

    def test_parse(self, tiny_matrix):
        assert [m.name for m in tiny_matrix.methods] == ["avg", "cent2p"]
        assert [a.kind for a in tiny_matrix.attacks] == [AttackKind.SF, AttackKind.GAUSS]
        assert tiny_matrix.methods[1].protocol is Protocol.TWO_PHASE

    def test_training_config(self, tiny_matrix):
        cell = tiny_matrix.training_config(tiny_matrix.methods[1], tiny_matrix.attacks[0], 0.2, seed=1)
        assert cell.byzantine == 1
        assert cell.seed == 1
        assert cell.rounds == 4
        assert cell.data.n_classes == 3

    def test_pga_targets_cell_aggregator(self, tiny_matrix_raw):
        tiny_matrix_raw["methods"] = ["krum", "cent2p"]
        tiny_matrix_raw["attacks"] = ["pga"]
        config = ExperimentConfig.from_mapping(tiny_matrix_raw)
        krum, cent2p = config.methods
        implicit = config.attacks[0]
        explicit = AttackSpec.parse({"kind": "pga", "pga_target": "cwm"})
        assert implicit.pga_target is None
        assert config.training_config(krum, implicit, 0.2, seed=0).attack.pga_target.rule is AggregationRule.KRUM
        assert config.training_config(cent2p, implicit, 0.2, seed=0).attack.pga_target.rule is AggregationRule.CENTERWO
        assert config.training_config(krum, explicit, 0.2, seed=0).attack.pga_target.rule is AggregationRule.CWM

    def test_unknown_key(self, tiny_matrix_raw):
        tiny_matrix_raw["learning_rate"] = 0.1
        with pytest.raises(ConfigurationError) as exc:
            ExperimentConfig.from_mapping(tiny_matrix_raw)
        assert exc.value.exit_code == 2

    def test_unknown_method(self, tiny_matrix_raw):
        tiny_matrix_raw["methods"] = ["avg", "bulyan"]
        with pytest.raises(ConfigurationError):
            ExperimentConfig.from_mapping(tiny_matrix_raw)

    def test_rate_out_of_range(self, tiny_matrix_raw):
        tiny_matrix_raw["adversarial_rates"] = [0.5]
        with pytest.raises(ConfigurationError):
            ExperimentConfig.from_mapping(tiny_matrix_raw)

    def test_duplicate_seeds(self, tiny_matrix_raw):
        tiny_matrix_raw["seeds"] = [1, 1]
        with pytest.raises(ConfigurationError):
            ExperimentConfig.from_mapping(tiny_matrix_raw)

    def test_hash_ignores_runtime_keys(self, tiny_matrix_raw):
        base = ExperimentConfig.from_mapping(tiny_matrix_raw)
        moved = ExperimentConfig.from_mapping(tiny_matrix_raw, {"output_dir": "/tmp/elsewhere", "jobs": 4})
        assert base.config_hash() == moved.config_hash()

    def test_hash_tracks_semantics(self, tiny_matrix_raw):
        base = ExperimentConfig.from_mapping(tiny_matrix_raw)
        longer = ExperimentConfig.from_mapping(tiny_matrix_raw, {"rounds": 5})
        assert base.config_hash() != longer.config_hash()

    def test_from_toml_matches_mapping(self, tiny_toml, tiny_matrix):
        assert ExperimentConfig.from_toml(tiny_toml).config_hash() == tiny_matrix.config_hash()

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            ExperimentConfig.from_toml(tmp_path / "absent.toml")

    def test_invalid_toml(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("name = \n")
        with pytest.raises(ConfigurationError):
            ExperimentConfig.from_toml(path)


class TestOverrides:

    def test_parse_scalar_and_array(self):
        assert parse_override("rounds=12") == ("rounds", 12)
        assert parse_override("seeds=[0, 1]") == ("seeds", [0, 1])
        assert parse_override("schedule.lr=0.05") == ("schedule.lr", 0.05)

    def test_bare_word_is_string(self):
        assert parse_override("name=smoke") == ("name", "smoke")

    def test_missing_equals(self):
        with pytest.raises(ConfigurationError):
            parse_override("rounds")

    def test_dotted_keys_create_tables(self):
        data = {}
        apply_override(data, "data.alpha", 0.5)
        assert data == {"data": {"alpha": 0.5}}

    def test_cannot_descend_into_scalar(self):
        with pytest.raises(ConfigurationError):
            apply_override({"rounds": 3}, "rounds.x", 1)

    def test_override_applies(self, tiny_toml):
        config = ExperimentConfig.from_toml(tiny_toml, dict([parse_override("data.mode=\"dirichlet\"")]))
        assert config.data.mode.value == "dirichlet"
