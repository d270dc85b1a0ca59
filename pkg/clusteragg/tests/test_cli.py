"""
Tests for the command-line entry point.
"""
import pytest

from clusteragg.main import build_parser, main
from clusteragg.services.export_service import RANKING_TSV, TABLE_MD


class TestParser:

    def test_unknown_rule_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args(["certify", "--rule", "bulyan"])
        assert exc.value.code == 2

    def test_command_required(self):
        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args([])
        assert exc.value.code == 2

    def test_seed_list(self, tmp_path):
        args = build_parser().parse_args(["run", str(tmp_path / "c.toml"), "--seeds", "0,2,4"])
        assert args.seeds == [0, 2, 4]


class TestCertifyCommand:

    def test_passing_rule(self, tmp_path, capsys):
        code = main([
            "certify", "--rule", "centerwo", "--rule", "meanwo",
            "--n", "8", "--f", "1", "--d", "2", "--trials", "10",
            "--output-dir", str(tmp_path),
        ])
        assert code == 0
        out = capsys.readouterr().out
        assert "centerwo" in out and "meanwo" in out
        assert (tmp_path / "certification.tsv").exists()
        assert (tmp_path / "certification.json").exists()

    def test_zero_trials(self, tmp_path):
        assert main(["certify", "--rule", "centerwo", "--trials", "0", "--output-dir", str(tmp_path)]) == 0

    def test_negative_trials(self, tmp_path):
        assert main(["certify", "--rule", "centerwo", "--trials", "-1", "--output-dir", str(tmp_path)]) == 2

    def test_average_fails_borrowed_bounds(self, tmp_path):
        code = main([
            "certify", "--rule", "avg", "--family", "planted",
            "--n", "10", "--f", "2", "--trials", "20", "--output-dir", str(tmp_path),
        ])
        assert code == 1

    def test_precondition_violation(self, tmp_path):
        assert main(["certify", "--rule", "centerwo", "--n", "4", "--f", "2", "--trials", "3",
                     "--output-dir", str(tmp_path)]) == 2


@pytest.mark.integration
class TestRunAndSummarize:

    def test_run_then_summarize(self, tiny_toml, tmp_path, capsys):
        out_dir = tmp_path / "out"
        metrics = tmp_path / "metrics.prom"
        code = main(["run", str(tiny_toml), "--output-dir", str(out_dir), "--jobs", "1",
                     "--metrics-file", str(metrics)])
        assert code == 0
        assert "| Rate | Aggregation | SF | GAUSS | Worst |" in capsys.readouterr().out
        assert (out_dir / TABLE_MD).exists()
        assert "matrix_cells_total" in metrics.read_text()

        assert main(["summarize", str(out_dir)]) == 0
        assert (out_dir / RANKING_TSV).exists()
        assert (out_dir / "series" / "sf.tsv").exists()

    def test_overrides(self, tiny_toml, tmp_path):
        out_dir = tmp_path / "out"
        code = main(["run", str(tiny_toml), "--output-dir", str(out_dir), "--rounds", "2", "--seeds", "5",
                     "--set", "methods=[\"avg\"]"])
        assert code == 0
        assert sorted(p.name for p in out_dir.glob("*.summary.json")) == [
            "avg__gauss__r0.2__seed5.summary.json",
            "avg__sf__r0.2__seed5.summary.json",
        ]

    def test_bad_config_key(self, tiny_toml, tmp_path):
        assert main(["run", str(tiny_toml), "--output-dir", str(tmp_path), "--set", "bogus=1"]) == 2

    def test_summarize_missing_directory(self, tmp_path):
        assert main(["summarize", str(tmp_path / "absent")]) == 1

    def test_summarize_reports_corrupt_file(self, tmp_path):
        (tmp_path / "x.summary.json").write_text("[")
        assert main(["summarize", str(tmp_path)]) == 1


def test_approx_check_command(capsys):
    assert main(["approx-check", "--trials", "15", "--max-n", "8", "--max-d", "3"]) == 0
    assert capsys.readouterr().out.strip()
