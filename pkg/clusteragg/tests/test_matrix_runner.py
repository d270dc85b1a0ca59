"""
Tests for experiment matrix execution.
"""
import orjson
import pytest

from clusteragg.core.exceptions import SimulationError
from clusteragg.core.queue import JobStatus
from clusteragg.monitoring.metrics import REGISTRY
from clusteragg.schemas.experiments import ExperimentConfig
from clusteragg.schemas.training import BASELINE_METHODS, TWO_PHASE_METHODS
from clusteragg.services.export_service import MANIFEST_NAME, TABLE_MD, TABLE_TSV
from clusteragg.services.training_service import run_training
from clusteragg.workers.matrix_runner import MatrixRunner, run_matrix


@pytest.mark.integration
class TestMatrixRunner:

    def test_plan_order(self, tiny_matrix, tmp_path):
        jobs = MatrixRunner(tiny_matrix, output_dir=tmp_path).plan()
        assert len(jobs) == 8
        assert jobs[0].cell_id == "avg__sf__r0.2__seed0"
        assert jobs[1].cell_id == "avg__sf__r0.2__seed1"
        assert jobs[-1].cell_id == "cent2p__gauss__r0.2__seed1"

    def test_default_output_dir_uses_hash(self, tiny_matrix):
        runner = MatrixRunner(tiny_matrix)
        assert runner.output_dir.name == f"tiny-{tiny_matrix.config_hash()}"

    def test_full_matrix(self, tiny_matrix, tmp_path):
        result = run_matrix(tiny_matrix, output_dir=tmp_path, jobs=1)
        assert result.failures == []
        assert len(list(tmp_path.glob("*.summary.json"))) == 8
        assert len(list(tmp_path.glob("*.rounds.jsonl"))) == 8
        assert len(result.table.rows) == 2
        assert all(len(row.cells) == 2 for row in result.table.rows)
        assert (tmp_path / TABLE_TSV).exists()
        assert (tmp_path / TABLE_MD).exists()

        manifest = orjson.loads((tmp_path / MANIFEST_NAME).read_bytes())
        assert manifest["config_hash"] == tiny_matrix.config_hash()
        assert len(manifest["cells"]) == 8
        assert {c["status"] for c in manifest["cells"]} == {"completed"}

    def test_cell_matches_direct_run(self, tiny_matrix, tmp_path):
        runner = MatrixRunner(tiny_matrix, output_dir=tmp_path, jobs=1)
        runner.plan()
        config = runner._cells["cent2p__sf__r0.2__seed1"]
        run_matrix(tiny_matrix, output_dir=tmp_path, jobs=1)
        summary = orjson.loads((tmp_path / "cent2p__sf__r0.2__seed1.summary.json").read_bytes())
        assert summary["final_accuracy"] == run_training(config).final_accuracy

    def test_rerun_is_byte_identical(self, tiny_matrix, tmp_path):
        first, second = tmp_path / "a", tmp_path / "b"
        run_matrix(tiny_matrix, output_dir=first, jobs=1)
        run_matrix(tiny_matrix, output_dir=second, jobs=1)
        names = sorted(p.name for p in first.iterdir() if p.name != MANIFEST_NAME)
        assert names == sorted(p.name for p in second.iterdir() if p.name != MANIFEST_NAME)
        for name in names:
            assert (first / name).read_bytes() == (second / name).read_bytes(), name

    def test_failing_cell_does_not_stop_matrix(self, tiny_matrix, tmp_path, mocker):
        def flaky(config):
            if config.method.name == "cent2p" and config.seed == 1:
                raise SimulationError("Model parameters became non-finite", round_index=2)
            return run_training(config)

        mocker.patch("clusteragg.workers.matrix_runner.execute_cell", side_effect=flaky)
        result = run_matrix(tiny_matrix, output_dir=tmp_path, jobs=1)

        assert len(result.failures) == 2
        assert all(job.status is JobStatus.FAILED for job in result.failures)
        assert len(list(tmp_path.glob("*.summary.json"))) == 6
        cent = result.table.row("cent2p")
        assert all(cell.seeds == 1 and cell.std is None for cell in cent.cells.values())
        manifest = orjson.loads((tmp_path / MANIFEST_NAME).read_bytes())
        failed = [c for c in manifest["cells"] if c["status"] == "failed"]
        assert {c["cell"] for c in failed} == {"cent2p__sf__r0.2__seed1", "cent2p__gauss__r0.2__seed1"}
        assert all("non-finite" in c["error"] for c in failed)

    async def test_run_inside_event_loop(self, tiny_matrix, tmp_path):
        runner = MatrixRunner(tiny_matrix, output_dir=tmp_path, jobs=1)
        result = await runner.run()
        assert runner.queue.get_stats()["completed"] == 8
        assert [job.cell_id for job in result.jobs] == [job.cell_id for job in runner.plan()]


@pytest.mark.slow
def test_process_pool_matches_serial(tiny_matrix, tmp_path):
    serial = run_matrix(tiny_matrix, output_dir=tmp_path / "serial", jobs=1)
    parallel = run_matrix(tiny_matrix, output_dir=tmp_path / "parallel", jobs=2)
    assert serial.table == parallel.table


@pytest.mark.slow
def test_process_pool_rounds_reach_parent_registry(tiny_matrix, tmp_path):
    def rounds(protocol):
        return REGISTRY.get_sample_value("training_rounds_total", {"protocol": protocol}) or 0.0

    before = {p: rounds(p) for p in ("rashb", "two_phase")}
    run_matrix(tiny_matrix, output_dir=tmp_path, jobs=2)
    # four cells per method, four rounds each
    assert rounds("rashb") - before["rashb"] == 16
    assert rounds("two_phase") - before["two_phase"] == 16


@pytest.mark.slow
def test_two_phase_methods_have_best_worst_case(tmp_path):
    config = ExperimentConfig.from_mapping({
        "name": "headline",
        "n_workers": 35,
        "adversarial_rates": [0.4],
        "methods": ["avg", "gm", "cclip", "cwm", "cwtm", "krum", "cent2p", "mean2p"],
        "attacks": ["sf", "gauss", "omn", "empire", "sv"],
        "seeds": [0, 1, 2, 3, 4],
        "rounds": 150,
    })
    result = run_matrix(config, output_dir=tmp_path, jobs=4)
    assert result.failures == []
    table = result.table
    best_baseline = max(table.row(m).worst for m in BASELINE_METHODS)
    for method in TWO_PHASE_METHODS:
        assert table.row(method).worst > best_baseline, method
    chance = 1.0 / config.data.n_classes
    assert table.row("avg").cells["omn"].mean <= chance + 0.05
