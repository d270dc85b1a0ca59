"""
Result persistence and export: run records, matrix tables, plot-ready series
and robustness reports.

Every file is written atomically (sibling temp file, then ``os.replace``) and
serialized deterministically (orjson, sorted keys).
"""
import math
import os
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import orjson
from pydantic import BaseModel

from clusteragg.core.config import settings
from clusteragg.core.exceptions import ResultStoreError
from clusteragg.core.logging_config import get_logger
from clusteragg.schemas.experiments import CellStat, ResultRow, ResultTable
from clusteragg.schemas.robustness import ApproxCheckSummary, CertificationSummary
from clusteragg.schemas.training import RunRecord

logger = get_logger("services.export")

MANIFEST_NAME = "manifest.json"
ROUNDS_SUFFIX = ".rounds.jsonl"
SUMMARY_SUFFIX = ".summary.json"
TABLE_TSV = "results_table.tsv"
TABLE_MD = "results_table.md"
SERIES_DIR = "series"
RANKING_TSV = "ranking.tsv"


def to_jsonable(value: Any) -> Any:
    """Plain JSON types; non-finite floats become "inf" / "-inf" / "nan"."""
    if isinstance(value, BaseModel):
        return to_jsonable(value.model_dump())
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, Mapping):
        return {str(to_jsonable(k)): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        return to_jsonable(value.item())
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    if isinstance(value, Path):
        return str(value)
    return value


def dumps(value: Any, indent: bool = False) -> bytes:
    option = orjson.OPT_SORT_KEYS | (orjson.OPT_INDENT_2 if indent else 0)
    return orjson.dumps(to_jsonable(value), option=option)


def atomic_write(path: Path, data: Union[bytes, str]) -> Path:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = data.encode("utf-8") if isinstance(data, str) else data
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _read_json(path: Path) -> Any:
    try:
        return orjson.loads(path.read_bytes())
    except FileNotFoundError:
        raise ResultStoreError(f"Missing result file: {path}", path=str(path))
    except orjson.JSONDecodeError as e:
        raise ResultStoreError(f"Corrupt result file {path}: {e}", path=str(path))


def _fmt(value: Optional[float], digits: int = 4) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if math.isinf(value) or math.isnan(value):
        return str(to_jsonable(value))
    return f"{value:.{digits}f}"


@dataclass
class SummarizeResult:
    """Files written and per-file problems found by ``summarize``."""
    files: List[Path] = field(default_factory=list)
    errors: List[str] = field(default_factory=list)
    table: Optional[ResultTable] = None


class ExportService:
    """Reads and writes everything under a matrix result directory."""

    def __init__(self, code_version: Optional[str] = None):
        self.code_version = code_version or settings.code_version

    # --- run records ------------------------------------------------------

    def write_run(self, directory: Path, cell_id: str, record: RunRecord, extra: Optional[Dict[str, Any]] = None) -> Tuple[Path, Path]:
        """One JSONL line per round plus a summary document."""
        lines = b"".join(dumps(r) + b"\n" for r in record.rounds)
        rounds_path = atomic_write(Path(directory) / f"{cell_id}{ROUNDS_SUFFIX}", lines)
        summary = record.summary()
        summary.update(extra or {})
        summary["cell"] = cell_id
        summary_path = atomic_write(Path(directory) / f"{cell_id}{SUMMARY_SUFFIX}", dumps(summary, indent=True))
        return rounds_path, summary_path

    def read_rounds(self, path: Path) -> List[Dict[str, Any]]:
        try:
            raw = Path(path).read_bytes()
        except FileNotFoundError:
            raise ResultStoreError(f"Missing round log: {path}", path=str(path))
        rows = []
        for number, line in enumerate(raw.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                row = orjson.loads(line)
            except orjson.JSONDecodeError as e:
                raise ResultStoreError(f"Corrupt round log {path} line {number}: {e}", path=str(path))
            if not isinstance(row, dict):
                raise ResultStoreError(f"Round log {path} line {number} is not a JSON object", path=str(path))
            rows.append(row)
        return rows

    def read_accuracy_series(self, path: Path) -> List[float]:
        """Per-round test accuracy of one round log."""
        series = []
        for number, row in enumerate(self.read_rounds(path), start=1):
            try:
                series.append(float(row["test_accuracy"]))
            except KeyError:
                raise ResultStoreError(f"Round log {path} row {number} lacks 'test_accuracy'", path=str(path))
            except (TypeError, ValueError):
                raise ResultStoreError(f"Round log {path} row {number} has a non-numeric accuracy", path=str(path))
        return series

    def write_manifest(self, directory: Path, config: BaseModel, config_hash: str, cells: Sequence[Mapping[str, Any]]) -> Path:
        manifest = {
            "config_hash": config_hash,
            "code_version": self.code_version,
            "created_at": datetime.now(timezone.utc).isoformat(),
            "config": config.model_dump(mode="json", exclude={"output_dir", "jobs"}),
            "cells": list(cells),
        }
        return atomic_write(Path(directory) / MANIFEST_NAME, dumps(manifest, indent=True))

    def load_summaries(self, directory: Path) -> Tuple[List[Dict[str, Any]], List[str]]:
        """All readable cell summaries (sorted by file name) and the errors for the rest."""
        directory = Path(directory)
        if not directory.is_dir():
            raise ResultStoreError(f"Result directory not found: {directory}", path=str(directory))
        summaries, errors = [], []
        for path in sorted(directory.glob(f"*{SUMMARY_SUFFIX}")):
            try:
                data = _read_json(path)
                if not isinstance(data, dict):
                    raise ResultStoreError(f"Summary {path.name} is not a JSON object", path=str(path))
                for key in ("method", "attack", "seed", "final_accuracy"):
                    if key not in data:
                        raise ResultStoreError(f"Summary {path.name} lacks '{key}'", path=str(path))
                try:
                    float(data["final_accuracy"])
                    float(data.get("adversarial_rate", 0.0))
                except (TypeError, ValueError):
                    raise ResultStoreError(f"Summary {path.name} has a non-numeric accuracy or rate", path=str(path))
                if not isinstance(data["method"], str) or not isinstance(data["attack"], str):
                    raise ResultStoreError(f"Summary {path.name} has a non-string method or attack", path=str(path))
                data["_path"] = str(path)
                summaries.append(data)
            except ResultStoreError as e:
                errors.append(e.message)
                logger.warning(e.message, extra={"category": "summarize"})
        return summaries, errors

    # --- tables -----------------------------------------------------------

    @staticmethod
    def build_table(
        summaries: Iterable[Mapping[str, Any]],
        methods: Optional[Sequence[str]] = None,
        attacks: Optional[Sequence[str]] = None,
    ) -> ResultTable:
        """Mean/std of final accuracy over seeds per (rate, method, attack)."""
        grouped: Dict[Tuple[float, str, str], List[float]] = {}
        for s in summaries:
            key = (float(s.get("adversarial_rate", 0.0)), s["method"], s["attack"])
            grouped.setdefault(key, []).append(float(s["final_accuracy"]))
        seen_methods = methods or list(dict.fromkeys(k[1] for k in grouped))
        seen_attacks = attacks or list(dict.fromkeys(k[2] for k in grouped))
        rates = sorted({k[0] for k in grouped})
        rows: List[ResultRow] = []
        for rate in rates:
            for method in seen_methods:
                cells: Dict[str, CellStat] = {}
                for attack in seen_attacks:
                    values = grouped.get((rate, method, attack))
                    if not values:
                        continue
                    arr = np.asarray(values)
                    cells[attack] = CellStat(
                        mean=float(arr.mean()),
                        std=float(arr.std(ddof=1)) if arr.size >= 2 else None,
                        seeds=int(arr.size),
                    )
                if cells:
                    rows.append(ResultRow(rate=rate, method=method, cells=cells))
        return ResultTable(attacks=list(seen_attacks), rows=rows)

    @staticmethod
    def format_table_tsv(table: ResultTable) -> str:
        header = ["rate", "method"]
        for attack in table.attacks:
            header += [f"{attack}_mean", f"{attack}_std"]
        header.append("worst")
        lines = ["\t".join(header)]
        for row in table.rows:
            fields = [f"{row.rate:g}", row.method]
            for attack in table.attacks:
                cell = row.cells.get(attack)
                fields += [_fmt(cell.mean) if cell else "", _fmt(cell.std) if cell else ""]
            fields.append(_fmt(row.worst))
            lines.append("\t".join(fields))
        return "\n".join(lines) + "\n"

    @staticmethod
    def format_table_markdown(table: ResultTable) -> str:
        header = ["Rate", "Aggregation"] + [a.upper() for a in table.attacks] + ["Worst"]
        lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
        for row in table.rows:
            cells = []
            for attack in table.attacks:
                cell = row.cells.get(attack)
                if cell is None:
                    cells.append("")
                elif cell.std is None:
                    cells.append(f"{cell.mean:.2f}")
                else:
                    cells.append(f"{cell.mean:.2f} ± {cell.std:.2f}")
            worst = row.worst
            lines.append("| " + " | ".join([f"{row.rate:g}", row.method] + cells + [_fmt(worst, 2)]) + " |")
        return "\n".join(lines) + "\n"

    def write_table(self, directory: Path, table: ResultTable) -> List[Path]:
        directory = Path(directory)
        return [
            atomic_write(directory / TABLE_TSV, self.format_table_tsv(table)),
            atomic_write(directory / TABLE_MD, self.format_table_markdown(table)),
        ]

    # --- summarize --------------------------------------------------------

    def summarize(self, directory: Path) -> SummarizeResult:
        """
        Accuracy-vs-round series per attack (mean and std over seeds per
        method) and a worst-case ranking of methods.
        """
        directory = Path(directory)
        result = SummarizeResult()
        summaries, errors = self.load_summaries(directory)
        result.errors.extend(errors)

        curves: Dict[str, Dict[str, List[List[float]]]] = {}
        usable = []
        single_rate = _single_rate(summaries)
        for s in summaries:
            rounds_path = Path(s["_path"][: -len(SUMMARY_SUFFIX)] + ROUNDS_SUFFIX)
            try:
                accuracies = self.read_accuracy_series(rounds_path)
            except ResultStoreError as e:
                result.errors.append(e.message)
                logger.warning(e.message, extra={"category": "summarize"})
                continue
            usable.append(s)
            rate = float(s.get("adversarial_rate", 0.0))
            label = s["method"] if single_rate else f"{s['method']}@{rate:g}"
            curves.setdefault(s["attack"], {}).setdefault(label, []).append(accuracies)

        for attack, by_method in sorted(curves.items()):
            result.files.append(atomic_write(directory / SERIES_DIR / f"{attack}.tsv", _series_tsv(by_method)))

        table = self.build_table(usable)
        result.table = table
        ranking = sorted(
            (row for row in table.rows if row.worst is not None),
            key=lambda r: (-r.worst, r.rate, r.method),
        )
        lines = ["rank\trate\tmethod\tworst"]
        for rank, row in enumerate(ranking, start=1):
            lines.append(f"{rank}\t{row.rate:g}\t{row.method}\t{_fmt(row.worst)}")
        result.files.append(atomic_write(directory / RANKING_TSV, "\n".join(lines) + "\n"))
        logger.info(
            f"Summarized {len(usable)} runs into {len(result.files)} files ({len(result.errors)} errors)",
            extra={"category": "summarize"},
        )
        return result

    # --- robustness reports -----------------------------------------------

    @staticmethod
    def format_certification(summaries: Sequence[CertificationSummary]) -> str:
        """One line per (rule, criterion): measured, bound, margin, verdict, witness."""
        lines = ["rule\tbound_rule\tcriterion\tmeasured\tbound\tmargin\tviolations\tchecked\tstatus\twitness"]
        for summary in summaries:
            for criterion, entry in summary.criteria.items():
                status = "pass" if entry.passed else "fail"
                lines.append("\t".join([
                    summary.rule.value,
                    summary.bound_rule.value if summary.bound_rule else "",
                    criterion.value,
                    _fmt(entry.worst_measured, 6),
                    _fmt(entry.bound, 6),
                    _fmt(entry.margin, 6),
                    str(entry.violations),
                    str(entry.checked),
                    status,
                    ",".join(str(i) for i in entry.worst_witness),
                ]))
        return "\n".join(lines) + "\n"

    def write_certification_report(self, path: Path, summaries: Sequence[CertificationSummary]) -> List[Path]:
        path = Path(path)
        documents = []
        for s in summaries:
            doc = to_jsonable(s)
            doc["passed"] = s.passed
            documents.append(doc)
        return [
            atomic_write(path, self.format_certification(summaries)),
            atomic_write(path.with_suffix(".json"), dumps(documents, indent=True)),
        ]

    @staticmethod
    def format_approx_check(summaries: Iterable[ApproxCheckSummary]) -> str:
        lines = ["objective\tinstances\tviolations\tworst_ratio\tworst_instance\tstatus"]
        for s in summaries:
            lines.append("\t".join([
                s.objective.value,
                str(s.instances),
                str(s.violations),
                _fmt(s.worst_ratio, 6),
                "" if s.worst_instance is None else str(s.worst_instance),
                "pass" if s.passed else "fail",
            ]))
        return "\n".join(lines) + "\n"


def _single_rate(summaries: Sequence[Mapping[str, Any]]) -> bool:
    return len({float(s.get("adversarial_rate", 0.0)) for s in summaries}) <= 1


def _series_tsv(by_method: Mapping[str, List[List[float]]]) -> str:
    methods = list(by_method)
    length = max(len(c) for curves in by_method.values() for c in curves)
    header = ["round"]
    for method in methods:
        header += [f"{method}_mean", f"{method}_std"]
    lines = ["\t".join(header)]
    for t in range(length):
        fields = [str(t)]
        for method in methods:
            values = np.asarray([c[t] for c in by_method[method] if t < len(c)])
            if values.size == 0:
                fields += ["", ""]
                continue
            fields.append(_fmt(float(values.mean())))
            fields.append(_fmt(float(values.std(ddof=1))) if values.size >= 2 else "")
        lines.append("\t".join(fields))
    return "\n".join(lines) + "\n"


export_service = ExportService()
