"""
Prometheus metrics collection for aggregation, training and matrix runs.
"""
from pathlib import Path
from typing import Dict, Tuple

from prometheus_client import (
    CollectorRegistry,
    Counter,
    Histogram,
    Info,
    generate_latest,
    write_to_textfile,
)

from clusteragg import __version__

# Lab-local registry
REGISTRY = CollectorRegistry()

# Aggregation Metrics
aggregation_calls_total = Counter(
    'aggregation_calls_total',
    'Total number of aggregation rule evaluations',
    ['rule'],
    registry=REGISTRY
)

# Training Metrics
training_rounds_total = Counter(
    'training_rounds_total',
    'Total number of simulated training rounds',
    ['protocol'],
    registry=REGISTRY
)

vote_outcomes_total = Counter(
    'vote_outcomes_total',
    'Two-phase voting winners',
    ['winner'],
    registry=REGISTRY
)

# Matrix Metrics
matrix_cells_total = Counter(
    'matrix_cells_total',
    'Total number of experiment matrix cells processed',
    ['status'],
    registry=REGISTRY
)

matrix_cell_duration_seconds = Histogram(
    'matrix_cell_duration_seconds',
    'Wall time spent per matrix cell',
    buckets=[0.5, 1.0, 2.5, 5.0, 10.0, 30.0, 60.0, 300.0, 900.0],
    registry=REGISTRY
)

# Certification Metrics
certification_checks_total = Counter(
    'certification_checks_total',
    'Robustness criterion checks by outcome',
    ['rule', 'criterion', 'outcome'],
    registry=REGISTRY
)

lab_info = Info(
    'clusteragg',
    'Lab build information',
    registry=REGISTRY
)


# Counters a simulation increments; process-pool workers ship these back as deltas
WORKER_COUNTERS = (aggregation_calls_total, training_rounds_total, vote_outcomes_total)

CounterKey = Tuple[int, Tuple[Tuple[str, str], ...]]


def counter_snapshot() -> Dict[CounterKey, float]:
    """Current value of every labelled child of ``WORKER_COUNTERS``."""
    snapshot: Dict[CounterKey, float] = {}
    for position, counter in enumerate(WORKER_COUNTERS):
        for metric in counter.collect():
            for sample in metric.samples:
                if sample.name.endswith("_total"):
                    snapshot[(position, tuple(sorted(sample.labels.items())))] = sample.value
    return snapshot


def counter_deltas(before: Dict[CounterKey, float], after: Dict[CounterKey, float]) -> Dict[CounterKey, float]:
    return {key: value - before.get(key, 0.0) for key, value in after.items() if value > before.get(key, 0.0)}


def merge_counter_deltas(deltas: Dict[CounterKey, float]) -> None:
    """Add increments recorded in another process to this registry."""
    for (position, labels), amount in deltas.items():
        WORKER_COUNTERS[position].labels(**dict(labels)).inc(amount)


def init_metrics() -> None:
    """Initialize static build info."""
    lab_info.info({
        'name': 'clusteragg',
        'version': __version__,
    })


def get_metrics() -> bytes:
    """Get current metrics in Prometheus text format."""
    return generate_latest(REGISTRY)


def write_metrics(path: Path) -> None:
    """Dump the registry to a text exposition file."""
    path.parent.mkdir(parents=True, exist_ok=True)
    write_to_textfile(str(path), REGISTRY)
