"""
Experiment matrix execution.

Cells (method x attack x rate x seed) are independent simulations; they run
in a process pool behind an asyncio semaphore and are persisted as they
finish. A failing cell is recorded on its job and the matrix carries on.
"""
import asyncio
import time
from concurrent.futures import Executor, ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from clusteragg.core.config import settings
from clusteragg.core.exceptions import BaseLabError
from clusteragg.core.logging_config import get_logger, log_cell_event
from clusteragg.core.queue import CellJob, CellQueue
from clusteragg.monitoring.metrics import (
    CounterKey,
    counter_deltas,
    counter_snapshot,
    matrix_cell_duration_seconds,
    matrix_cells_total,
    merge_counter_deltas,
)
from clusteragg.schemas.experiments import ExperimentConfig, ResultTable
from clusteragg.schemas.training import RunRecord, TrainingConfig
from clusteragg.services.export_service import export_service
from clusteragg.services.training_service import run_training

logger = get_logger("workers.matrix")


def execute_cell(config: TrainingConfig) -> RunRecord:
    """In-process entry point for one cell."""
    return run_training(config)


def execute_cell_counted(config: TrainingConfig) -> Tuple[RunRecord, Dict[CounterKey, float]]:
    """Process-pool entry point: the record plus the counter increments the cell made in the worker."""
    before = counter_snapshot()
    record = run_training(config)
    return record, counter_deltas(before, counter_snapshot())


@dataclass
class MatrixResult:
    output_dir: Path
    table: ResultTable
    jobs: List[CellJob] = field(default_factory=list)

    @property
    def failures(self) -> List[CellJob]:
        return [job for job in self.jobs if job.error is not None]


class MatrixRunner:
    """Runs every cell of an ``ExperimentConfig`` with bounded parallelism."""

    def __init__(self, config: ExperimentConfig, output_dir: Optional[Path] = None, jobs: Optional[int] = None):
        self.config = config
        self.config_hash = config.config_hash()
        self.output_dir = Path(
            output_dir
            or config.output_dir
            or Path(settings.output_root) / f"{config.name}-{self.config_hash}"
        )
        self.max_workers = jobs or config.jobs or settings.default_jobs
        self.semaphore = asyncio.Semaphore(self.max_workers)
        self.queue = CellQueue()
        self._cells: Dict[str, TrainingConfig] = {}

    def plan(self) -> List[CellJob]:
        """Enqueue the full matrix in a fixed order: rate, method, attack, seed."""
        if self._cells:
            return self.queue.jobs()
        cfg = self.config
        for rate in cfg.adversarial_rates:
            for method in cfg.methods:
                for attack in cfg.attacks:
                    for seed in cfg.seeds:
                        job = self.queue.enqueue(method.name, attack.label, seed, rate)
                        self._cells[job.cell_id] = cfg.training_config(method, attack, rate, seed)
        return self.queue.jobs()

    @property
    def in_process(self) -> bool:
        return self.max_workers == 1

    def _executor(self) -> Executor:
        if self.in_process:
            return ThreadPoolExecutor(max_workers=1)
        return ProcessPoolExecutor(max_workers=self.max_workers)

    async def run(self) -> MatrixResult:
        jobs = self.plan()
        self.output_dir.mkdir(parents=True, exist_ok=True)
        logger.info(
            f"Running matrix '{self.config.name}' ({len(jobs)} cells, {self.max_workers} workers) into {self.output_dir}",
            extra={"run_id": self.config_hash, "category": "matrix"},
        )

        with self._executor() as executor:
            outcomes = await asyncio.gather(
                *(self._run_cell(job, executor) for job in jobs),
                return_exceptions=True,
            )

        for job, outcome in zip(jobs, outcomes):
            # _run_cell records its own failures; anything reaching here escaped it
            if isinstance(outcome, BaseException) and job.error is None:
                self.queue.fail(job.cell_id, f"{type(outcome).__name__}: {outcome}")
                matrix_cells_total.labels(status="failed").inc()

        summaries = [job.result for job in jobs if job.result is not None]
        table = export_service.build_table(
            summaries,
            methods=[m.name for m in self.config.methods],
            attacks=[a.label for a in self.config.attacks],
        )
        export_service.write_table(self.output_dir, table)
        export_service.write_manifest(
            self.output_dir,
            self.config,
            self.config_hash,
            [_manifest_entry(job) for job in jobs],
        )

        stats = self.queue.get_stats()
        logger.info(
            f"Matrix '{self.config.name}' done: {stats['completed']}/{stats['total']} cells completed, {stats['failed']} failed",
            extra={"run_id": self.config_hash, "category": "matrix"},
        )
        return MatrixResult(output_dir=self.output_dir, table=table, jobs=jobs)

    async def _run_cell(self, job: CellJob, executor: Executor) -> None:
        async with self.semaphore:
            self.queue.start(job.cell_id)
            start = time.perf_counter()
            loop = asyncio.get_running_loop()
            try:
                cell = self._cells[job.cell_id]
                if self.in_process:
                    record = await loop.run_in_executor(executor, execute_cell, cell)
                else:
                    record, deltas = await loop.run_in_executor(executor, execute_cell_counted, cell)
                    merge_counter_deltas(deltas)
                export_service.write_run(
                    self.output_dir, job.cell_id, record, extra={"adversarial_rate": job.rate}
                )
                summary = record.summary()
                summary["adversarial_rate"] = job.rate
                self.queue.complete(job.cell_id, summary)
                status, error = "completed", None
            except Exception as e:
                error = e.message if isinstance(e, BaseLabError) else f"{type(e).__name__}: {e}"
                self.queue.fail(job.cell_id, error)
                status = "failed"
            duration = time.perf_counter() - start
            matrix_cells_total.labels(status=status).inc()
            matrix_cell_duration_seconds.observe(duration)
            log_cell_event(logger, job.cell_id, status, duration, run_id=self.config_hash, error=error)


def _manifest_entry(job: CellJob) -> Dict[str, object]:
    return {
        "cell": job.cell_id,
        "method": job.method,
        "attack": job.attack,
        "rate": job.rate,
        "seed": job.seed,
        "status": job.status.value,
        "error": job.error,
    }


def run_matrix(config: ExperimentConfig, output_dir: Optional[Path] = None, jobs: Optional[int] = None) -> MatrixResult:
    """Synchronous wrapper: run the whole matrix and return its table and jobs."""
    return asyncio.run(MatrixRunner(config, output_dir, jobs).run())
