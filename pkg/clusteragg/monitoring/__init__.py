"""
Monitoring module for the robust aggregation lab.
"""

from .metrics import (
    aggregation_calls_total,
    certification_checks_total,
    counter_deltas,
    counter_snapshot,
    get_metrics,
    init_metrics,
    matrix_cell_duration_seconds,
    matrix_cells_total,
    merge_counter_deltas,
    training_rounds_total,
    vote_outcomes_total,
    write_metrics,
)

__all__ = [
    "aggregation_calls_total",
    "certification_checks_total",
    "counter_deltas",
    "counter_snapshot",
    "get_metrics",
    "init_metrics",
    "matrix_cell_duration_seconds",
    "matrix_cells_total",
    "merge_counter_deltas",
    "training_rounds_total",
    "vote_outcomes_total",
    "write_metrics",
]
