"""
Command-line entry point: ``run``, ``certify``, ``summarize`` and ``approx-check``.
"""
import argparse
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

from clusteragg import __version__
from clusteragg.core.config import settings
from clusteragg.core.exceptions import EXIT_RUNTIME_FAILURE, BaseLabError, ValidationError
from clusteragg.core.logging_config import get_logger, setup_logging
from clusteragg.monitoring.metrics import init_metrics, write_metrics
from clusteragg.schemas.aggregators import AggregationRule
from clusteragg.schemas.experiments import ExperimentConfig, parse_override
from clusteragg.services.export_service import export_service
from clusteragg.services.robustness_service import InstanceFamily, approx_check, certify, instance_stream
from clusteragg.workers.matrix_runner import run_matrix

logger = get_logger("main")

EXIT_SUCCESS = 0


def _seed_list(text: str) -> List[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clusteragg",
        description="Robust aggregation lab: clustering-based aggregators, attacks and robustness certification.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=None, help="Override CLUSTERAGG_LOG_LEVEL")
    parser.add_argument("--log-json", action="store_true", default=None, help="JSON log lines on stderr")
    parser.add_argument("--log-file", type=Path, default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run an experiment matrix from a TOML config")
    run.add_argument("config", type=Path)
    run.add_argument("--rounds", type=int)
    run.add_argument("--seeds", type=_seed_list, help="Comma-separated seeds, e.g. 0,1,2")
    run.add_argument("--output-dir", type=Path)
    run.add_argument("--jobs", type=int)
    run.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                     help="Override a config key (dotted path, TOML value); repeatable")
    run.add_argument("--metrics-file", type=Path, help="Write Prometheus metrics here after the run")

    cert = sub.add_parser("certify", help="Empirically certify robustness criteria against their bounds")
    cert.add_argument("--rule", dest="rules", action="append", required=True,
                      choices=[r.value for r in AggregationRule])
    cert.add_argument("--n", type=int, default=10)
    cert.add_argument("--f", type=int, default=2)
    cert.add_argument("--d", type=int, default=3)
    cert.add_argument("--trials", type=int, default=500)
    cert.add_argument("--seed", type=int, default=0)
    cert.add_argument("--delta-max", type=float, default=None)
    cert.add_argument("--family", choices=[f.value for f in InstanceFamily], default=InstanceFamily.MIXED.value)
    cert.add_argument("--bound-rule", choices=[r.value for r in AggregationRule if r.has_closed_form_bounds],
                      default=AggregationRule.CENTERWO.value,
                      help="Bounds used for rules that have none of their own")
    cert.add_argument("--output-dir", type=Path)

    summ = sub.add_parser("summarize", help="Build series and a worst-case ranking from a result directory")
    summ.add_argument("directory", type=Path)

    approx = sub.add_parser("approx-check", help="Check the medoid clustering approximation factor")
    approx.add_argument("--trials", type=int, default=1000)
    approx.add_argument("--seed", type=int, default=0)
    approx.add_argument("--max-n", type=int, default=12)
    approx.add_argument("--max-d", type=int, default=4)
    return parser


def cmd_run(args: argparse.Namespace) -> int:
    overrides: Dict[str, object] = dict(parse_override(item) for item in args.overrides)
    if args.rounds is not None:
        overrides["rounds"] = args.rounds
    if args.seeds is not None:
        overrides["seeds"] = args.seeds
    config = ExperimentConfig.from_toml(args.config, overrides)
    result = run_matrix(config, output_dir=args.output_dir, jobs=args.jobs)
    sys.stdout.write(export_service.format_table_markdown(result.table))
    if args.metrics_file is not None:
        write_metrics(args.metrics_file)
    if result.failures:
        logger.error(f"{len(result.failures)} cells failed; see {result.output_dir}")
        return EXIT_RUNTIME_FAILURE
    return EXIT_SUCCESS


def cmd_certify(args: argparse.Namespace) -> int:
    if args.trials < 0:
        raise ValidationError("--trials must be non-negative", field="trials")
    bound_rule = AggregationRule(args.bound_rule)
    summaries = []
    for rule in args.rules:
        instances = instance_stream(args.seed, args.trials, args.n, args.d, args.f, InstanceFamily(args.family))
        summaries.append(certify(rule, instances, args.trials, args.delta_max, bound_rule))
    sys.stdout.write(export_service.format_certification(summaries))
    output_dir = args.output_dir or Path(settings.output_root) / "certify"
    export_service.write_certification_report(output_dir / "certification.tsv", summaries)
    return EXIT_SUCCESS if all(s.passed for s in summaries) else EXIT_RUNTIME_FAILURE


def cmd_summarize(args: argparse.Namespace) -> int:
    result = export_service.summarize(args.directory)
    for path in result.files:
        sys.stdout.write(f"{path}\n")
    for error in result.errors:
        sys.stderr.write(f"error: {error}\n")
    return EXIT_RUNTIME_FAILURE if result.errors else EXIT_SUCCESS


def cmd_approx_check(args: argparse.Namespace) -> int:
    summaries = approx_check(args.trials, args.seed, args.max_n, args.max_d)
    sys.stdout.write(export_service.format_approx_check(summaries.values()))
    return EXIT_SUCCESS if all(s.passed for s in summaries.values()) else EXIT_RUNTIME_FAILURE


COMMANDS: Dict[str, Callable[[argparse.Namespace], int]] = {
    "run": cmd_run,
    "certify": cmd_certify,
    "summarize": cmd_summarize,
    "approx-check": cmd_approx_check,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(level=args.log_level, json_output=args.log_json, log_file=args.log_file)
    init_metrics()
    try:
        return COMMANDS[args.command](args)
    except BaseLabError as e:
        logger.error(f"{e.error_code}: {e.message}", extra={"category": "cli", "status": e.error_code})
        if e.details:
            logger.debug(f"Error details: {e.details}", extra={"category": "cli"})
        return e.exit_code
    except KeyboardInterrupt:
        logger.warning("Interrupted")
        return EXIT_RUNTIME_FAILURE


if __name__ == "__main__":
    sys.exit(main())
