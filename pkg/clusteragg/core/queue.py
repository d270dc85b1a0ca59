"""
In-process job tracking for experiment matrix cells.
"""
import logging
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Dict, List, Optional

logger = logging.getLogger(__name__)


class JobStatus(str, Enum):
    """Cell job status enumeration."""
    PENDING = "pending"
    PROCESSING = "processing"
    COMPLETED = "completed"
    FAILED = "failed"


@dataclass
class CellJob:
    """One (method, attack, rate, seed) cell of an experiment matrix."""
    cell_id: str
    method: str
    attack: str
    seed: int
    rate: float = 0.0
    status: JobStatus = JobStatus.PENDING
    created_at: datetime = field(default_factory=lambda: datetime.now(timezone.utc))
    started_at: Optional[datetime] = None
    completed_at: Optional[datetime] = None
    result: Optional[Dict[str, Any]] = None
    error: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary with JSON serializable values."""
        data = asdict(self)
        data["status"] = self.status.value
        for key, value in data.items():
            if isinstance(value, datetime):
                data[key] = value.isoformat()
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CellJob":
        """Create CellJob from dictionary."""
        data = dict(data)
        for key in ["created_at", "started_at", "completed_at"]:
            if data.get(key):
                data[key] = datetime.fromisoformat(data[key])
        data["status"] = JobStatus(data.get("status", JobStatus.PENDING))
        return cls(**data)

    @property
    def duration_seconds(self) -> float:
        if self.started_at is None or self.completed_at is None:
            return 0.0
        return (self.completed_at - self.started_at).total_seconds()


def cell_name(method: str, attack: str, rate: float, seed: int) -> str:
    return f"{method}__{attack}__r{rate:g}__seed{seed}"


class CellQueue:
    """Ordered registry of matrix cells and their lifecycle."""

    def __init__(self) -> None:
        self._jobs: Dict[str, CellJob] = {}

    def enqueue(self, method: str, attack: str, seed: int, rate: float = 0.0) -> CellJob:
        """Register a new pending cell; cell ids are unique per matrix."""
        cell_id = cell_name(method, attack, rate, seed)
        if cell_id in self._jobs:
            raise ValueError(f"Duplicate matrix cell: {cell_id}")
        job = CellJob(cell_id=cell_id, method=method, attack=attack, seed=seed, rate=rate)
        self._jobs[cell_id] = job
        logger.debug(f"Enqueued cell {cell_id}")
        return job

    def start(self, cell_id: str) -> CellJob:
        job = self._jobs[cell_id]
        job.status = JobStatus.PROCESSING
        job.started_at = datetime.now(timezone.utc)
        return job

    def complete(self, cell_id: str, result: Dict[str, Any]) -> CellJob:
        """Mark a cell as completed with its summary."""
        job = self._jobs[cell_id]
        job.status = JobStatus.COMPLETED
        job.completed_at = datetime.now(timezone.utc)
        job.result = result
        return job

    def fail(self, cell_id: str, error: str) -> CellJob:
        """Mark a cell as failed; failures are data, the matrix keeps going."""
        job = self._jobs[cell_id]
        job.status = JobStatus.FAILED
        job.completed_at = datetime.now(timezone.utc)
        job.error = error
        logger.error(f"Cell {cell_id} failed: {error}")
        return job

    def jobs(self) -> List[CellJob]:
        """All cells in enqueue order."""
        return list(self._jobs.values())

    def pending(self) -> List[CellJob]:
        return [job for job in self._jobs.values() if job.status == JobStatus.PENDING]

    def get_stats(self) -> Dict[str, int]:
        """Get per-status cell counts."""
        stats = {status.value: 0 for status in JobStatus}
        for job in self._jobs.values():
            stats[job.status.value] += 1
        stats["total"] = len(self._jobs)
        return stats
