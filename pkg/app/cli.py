"""
Command-line entry point

    python -m app run --config run.json
    python -m app compare --preset ridge-small --methods psgd,dore --seeds 1,2,3
    python -m app summarize out/ridge-small/*/seed*.csv
    python -m app validate --config run.json

Exit codes: 0 success, 2 config or usage error, 3 runtime failure,
4 batch whose only problems are diverged runs.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import pandas as pd

from app.config import DEFAULT_THREADS, MAX_PARALLEL_RUNS, OUTPUT_DIR, STRICT_THEOREM, configure_logging
from app.harness import (
    EXIT_CONFIG,
    EXIT_DIVERGED,
    EXIT_OK,
    EXIT_RUNTIME,
    ConfigParseError,
    MixedPresetsError,
    UsageError,
    comparison_frame,
    exit_code,
    parse_config,
    run_comparison,
    run_single,
    summarize,
    validate_config,
)
from app.models import ExperimentPreset, Method, RunConfig, RunStatus
from app.presets import UnknownPresetError, get_preset
from app.storage import TraceStorage, TraceStorageError

logger = logging.getLogger(__name__)


def _int_list(value: str) -> List[int]:
    try:
        return [int(part) for part in value.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{value}'")


def _method_list(value: str) -> List[Method]:
    try:
        return [Method(part.strip()) for part in value.split(",") if part.strip()]
    except ValueError:
        known = ", ".join(method.value for method in Method)
        raise argparse.ArgumentTypeError(f"unknown method in '{value}' (known: {known})")


def _print_table(frame: pd.DataFrame) -> None:
    with pd.option_context("display.max_columns", None, "display.width", 200):
        print(frame.to_string(index=False))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="python -m app",
        description="Simulate compressed distributed SGD methods on synthetic problems.",
    )
    parser.add_argument("--log-level", default=None, help="Logging level (defaults to LOG_LEVEL)")
    commands = parser.add_subparsers(dest="command", required=True)

    def add_common(sub: argparse.ArgumentParser) -> None:
        sub.add_argument("--out", default=OUTPUT_DIR, help="Output root for traces and manifests")
        sub.add_argument("--seeds", type=_int_list, default=None, help="Comma-separated seeds")
        sub.add_argument(
            "--strict-theorem",
            action="store_true",
            default=STRICT_THEOREM,
            help="Fail instead of warning when hyperparameters violate the theorem conditions",
        )
        sub.add_argument("--threads", type=int, default=DEFAULT_THREADS, help="Worker threads per run")

    run_parser = commands.add_parser("run", help="Run a single config")
    run_parser.add_argument("--config", required=True, help="Run config (JSON)")
    add_common(run_parser)

    compare_parser = commands.add_parser("compare", help="Run a preset across methods and seeds")
    compare_parser.add_argument("--config", default=None, help="Comparison config (JSON)")
    compare_parser.add_argument("--preset", default=None, help="Preset name (when no config is given)")
    compare_parser.add_argument("--methods", type=_method_list, default=None, help="Comma-separated methods")
    compare_parser.add_argument(
        "--parallel-runs", type=int, default=MAX_PARALLEL_RUNS, help="Concurrent (method, seed) runs",
    )
    add_common(compare_parser)

    summarize_parser = commands.add_parser("summarize", help="Per-method medians of stored traces")
    summarize_parser.add_argument("traces", nargs="*", help="Trace CSV files")
    summarize_parser.add_argument("--preset", default=None, help="Summarize every stored trace of a preset")
    summarize_parser.add_argument("--out", default=OUTPUT_DIR, help="Output root searched with --preset")
    summarize_parser.add_argument("--csv", default=None, help="Also write the table to this CSV file")

    validate_parser = commands.add_parser("validate", help="Hyperparameter report of a run config")
    validate_parser.add_argument("--config", required=True, help="Run config (JSON)")
    validate_parser.add_argument(
        "--strict-theorem", action="store_true", default=STRICT_THEOREM, help="Exit 2 on violations",
    )
    return parser


def _command_run(args: argparse.Namespace) -> int:
    config = parse_config(args.config, strict=args.strict_theorem)
    if not isinstance(config, RunConfig):
        raise UsageError(f"{args.config} describes a comparison; use the compare command")
    configs = [config] if args.seeds is None else [config.model_copy(update={"seed": s}) for s in args.seeds]

    code = EXIT_OK
    for resolved in configs:
        print(f"🚀 {resolved.preset}/{resolved.algorithm.method.value} seed={resolved.seed}")
        try:
            summary = run_single(resolved, out_dir=args.out, threads=args.threads, strict=args.strict_theorem)
        except Exception as e:
            print(f"❌ Run failed: {e}")
            code = EXIT_RUNTIME
            continue
        if summary.status == RunStatus.diverged:
            print(f"⚠️  Diverged at iteration {summary.diverged_at}; trace kept at {summary.trace_path}")
            if code == EXIT_OK:
                code = EXIT_DIVERGED
        else:
            print(
                f"✓ loss={summary.final_loss:.6g} grad_norm_sq={summary.final_grad_norm_sq:.6g} "
                f"bits={summary.total_bits} reduction={summary.reduction:.4f} -> {summary.trace_path}"
            )
    return code


def _command_compare(args: argparse.Namespace) -> int:
    if args.config:
        preset = parse_config(args.config)
        if not isinstance(preset, ExperimentPreset):
            raise UsageError(f"{args.config} describes a single run; use the run command")
    elif args.preset:
        preset = get_preset(args.preset)
    else:
        raise UsageError("compare needs --config or --preset")

    methods = args.methods if args.methods is not None else preset.methods
    summary = run_comparison(
        preset,
        methods=methods,
        seeds=args.seeds,
        out_dir=args.out,
        threads=args.threads,
        strict=args.strict_theorem,
        parallel_runs=args.parallel_runs,
    )
    print("=" * 80)
    print(f"📊 {preset.name}")
    print("=" * 80)
    _print_table(comparison_frame(summary))
    print(f"\nSummary written to {TraceStorage(args.out).summary_path(preset.name)}")
    return exit_code(summary)


def _command_summarize(args: argparse.Namespace) -> int:
    paths: Sequence = args.traces
    if args.preset:
        paths = list(paths) + TraceStorage(args.out).list_traces(args.preset)
    table = summarize(paths)
    _print_table(table)
    if args.csv:
        Path(args.csv).parent.mkdir(parents=True, exist_ok=True)
        table.to_csv(args.csv, index=False, float_format="%.17g")
    return EXIT_OK


def _command_validate(args: argparse.Namespace) -> int:
    config = parse_config(args.config)
    if not isinstance(config, RunConfig):
        raise UsageError(f"{args.config} describes a comparison; validate checks one run config")
    report = validate_config(config)
    if report is None:
        print("⚠️  Biased compressor: the convergence theorems do not apply")
        return EXIT_OK
    for check in report.checks:
        marker = "✓" if check.satisfied else "❌"
        print(f"{marker} {check.name}: value={check.value} lower={check.lower} upper={check.upper}  ({check.detail})")
    if report.rho is not None:
        print(f"rho={report.rho:.6g} convergence_factor={report.convergence_factor}")
    if report.satisfied:
        print("✅ Hyperparameters satisfy every condition")
        return EXIT_OK
    print("⚠️  Hyperparameters violate the conditions above")
    return EXIT_CONFIG if args.strict_theorem else EXIT_OK


COMMANDS = {
    "run": _command_run,
    "compare": _command_compare,
    "summarize": _command_summarize,
    "validate": _command_validate,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK
    if args.log_level:
        configure_logging(args.log_level.upper())
    else:
        configure_logging()

    try:
        return COMMANDS[args.command](args)
    except (ConfigParseError, UsageError, MixedPresetsError, UnknownPresetError) as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_CONFIG
    except TraceStorageError as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as e:
        logger.exception("Unexpected failure")
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
