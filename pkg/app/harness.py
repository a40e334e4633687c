"""
Experiment harness: config parsing, single runs, comparison batches and summaries

Config files are JSON. Three shapes are accepted:

- a run file: {"preset": ..., "method": ..., "seed": ...} plus overrides
- a comparison file: {"preset": ..., "methods": [...], "seeds": [...]} plus overrides
- a resolved RunConfig, or a trace manifest whose "config" holds one
"""

import json
import logging
import math
import re
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError

from app.config import DEFAULT_THREADS, MAX_PARALLEL_RUNS, OUTPUT_DIR, STRICT_THEOREM
from app.models import (
    ComparisonFile,
    ComparisonSummary,
    ExperimentPreset,
    Method,
    RunConfig,
    RunFile,
    RunStatus,
    RunSummary,
    ValidationReport,
)
from app.presets import UnknownPresetError, apply_overrides, get_preset, resolve_run_config
from app.problems import build_problem
from app.simulator import RunTrace, run, summarize_bits, theorem_report
from app.storage import TraceStorage, read_manifest, read_trace

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_DIVERGED = 4

SUMMARY_METRICS = ["final_loss", "final_dist_sq", "final_grad_norm_sq", "total_bits", "reduction", "rho"]


# =============================================================================
# Errors
# =============================================================================

class ConfigParseError(ValueError):
    """Raised when a config file cannot be parsed; carries the line and field when known"""

    def __init__(self, message: str, line: Optional[int] = None, field: Optional[str] = None):
        self.line = line
        self.field = field
        location = []
        if line is not None:
            location.append(f"line {line}")
        if field:
            location.append(f"field '{field}'")
        prefix = f"{', '.join(location)}: " if location else ""
        super().__init__(prefix + message)


class UnknownKeyError(ConfigParseError):
    """Raised for keys the config schema does not know"""
    pass


class ConfigRangeError(ConfigParseError):
    """Raised when a config value is outside its admissible range"""
    pass


class UsageError(ValueError):
    """Raised for invalid harness invocations (empty method list, invalid method for a preset)"""
    pass


class MixedPresetsError(ValueError):
    """Raised when summarize is given traces of different presets"""
    pass


# =============================================================================
# Config parsing
# =============================================================================

def _line_of(text: str, key: str) -> Optional[int]:
    match = re.search(rf'"{re.escape(key)}"\s*:', text)
    if match is None:
        return None
    return text.count("\n", 0, match.start()) + 1


def _translate_validation_error(exc: ValidationError, text: str) -> ConfigParseError:
    error = exc.errors()[0]
    location = [str(part) for part in error["loc"]]
    field = ".".join(location) or None
    key = next((part for part in reversed(location) if not part.isdigit()), "")
    line = _line_of(text, key) if key else None
    if error["type"] == "extra_forbidden":
        return UnknownKeyError(f"unknown key '{key}'", line=line, field=field)
    return ConfigRangeError(error["msg"], line=line, field=field)


def _resolve_file(data: Dict[str, Any], text: str) -> Union[RunConfig, ExperimentPreset]:
    if "derived" in data and "config" in data:
        return RunConfig.model_validate(data["config"])
    if "algorithm" in data:
        return RunConfig.model_validate(data)
    if "methods" in data:
        comparison = ComparisonFile.model_validate(data)
        preset = apply_overrides(get_preset(comparison.preset), comparison)
        update: Dict[str, Any] = {"methods": comparison.methods}
        if comparison.seeds is not None:
            update["seeds"] = comparison.seeds
        return preset.model_copy(update=update)
    single = RunFile.model_validate(data)
    preset = apply_overrides(get_preset(single.preset), single)
    return resolve_run_config(preset, single.method, single.seed)


def parse_config(path: Union[str, Path], strict: bool = False) -> Union[RunConfig, ExperimentPreset]:
    """
    Parse a JSON config file into a resolved RunConfig or comparison preset.

    Args:
        path: Config file
        strict: Also reject run configs whose hyperparameters violate the theorem conditions

    Returns:
        RunConfig for run files, resolved configs and manifests;
        ExperimentPreset (with methods and seeds applied) for comparison files

    Raises:
        ConfigParseError: Malformed JSON (with line number)
        UnknownKeyError: Keys outside the schema
        ConfigRangeError: Out-of-range values, unknown presets, invalid method/preset pairs
    """
    path = Path(path)
    if not path.exists():
        raise ConfigParseError(f"{path} does not exist")
    text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigParseError(e.msg, line=e.lineno) from e
    if not isinstance(data, dict):
        raise ConfigParseError("top level must be an object", line=1)

    try:
        resolved = _resolve_file(data, text)
    except ValidationError as e:
        raise _translate_validation_error(e, text) from e
    except UnknownPresetError as e:
        raise ConfigRangeError(str(e), line=_line_of(text, "preset"), field="preset") from e
    except ValueError as e:
        raise ConfigRangeError(str(e)) from e

    if strict and isinstance(resolved, RunConfig):
        report = validate_config(resolved)
        if report is not None and not report.satisfied:
            names = ", ".join(check.name for check in report.violations)
            raise ConfigRangeError(f"hyperparameters violate: {names}", field="hyper")
    return resolved


def validate_config(config: RunConfig) -> Optional[ValidationReport]:
    """Theorem report of a run config; None when a compressor is biased"""
    problem = build_problem(config.problem, config.n_workers, config.algorithm.regularizer, config.batch_size)
    return theorem_report(config, problem)


# =============================================================================
# Metrics recomputed from stored traces
# =============================================================================

def _finite_or_none(value: float) -> Optional[float]:
    return None if value is None or math.isnan(value) else float(value)


def trace_metrics(frame: pd.DataFrame, manifest: Dict[str, Any]) -> Dict[str, Any]:
    """Final-row metrics and bit totals of one trace, from its CSV frame and manifest"""
    derived = manifest["derived"]
    outcome = manifest.get("outcome") or {}
    last = frame.iloc[-1]
    bits = summarize_bits(frame, derived["d"], derived["n_workers"])
    rho = derived.get("rho")
    return {
        "status": RunStatus.diverged.value if outcome.get("diverged") else RunStatus.ok.value,
        "diverged_at": outcome.get("diverged_at"),
        "final_loss": float(last["train_loss"]),
        "final_dist_sq": float(last["dist_sq"]),
        "final_grad_norm_sq": float(last["grad_norm_sq"]),
        "total_bits": float(bits.total_bits),
        "reduction": bits.reduction,
        "rho": float("nan") if rho is None else float(rho),
    }


def _run_summary(config: RunConfig, metrics: Dict[str, Any], trace_path: Optional[Path]) -> RunSummary:
    return RunSummary(
        method=config.algorithm.method,
        seed=config.seed,
        status=RunStatus(metrics["status"]),
        final_loss=_finite_or_none(metrics["final_loss"]),
        final_dist_sq=_finite_or_none(metrics["final_dist_sq"]),
        final_grad_norm_sq=_finite_or_none(metrics["final_grad_norm_sq"]),
        total_bits=int(metrics["total_bits"]),
        reduction=metrics["reduction"],
        diverged_at=metrics["diverged_at"],
        trace_path=str(trace_path) if trace_path is not None else None,
    )


# =============================================================================
# Runs and batches
# =============================================================================

def run_single(
    config: RunConfig,
    out_dir: Union[str, Path] = OUTPUT_DIR,
    threads: int = DEFAULT_THREADS,
    strict: bool = STRICT_THEOREM,
) -> RunSummary:
    """
    Run one config and store its trace.

    Args:
        config: Resolved run config
        out_dir: Output root
        threads: Worker thread pool size
        strict: Fail on theorem violations instead of warning

    Returns:
        RunSummary with the stored CSV path
    """
    trace: RunTrace = run(config, threads=threads, strict=strict)
    path = TraceStorage(out_dir).save_trace(trace)
    return _run_summary(config, trace_metrics(trace.frame, trace.manifest), path)


def resolve_batch(
    preset: ExperimentPreset,
    methods: Optional[Sequence[Method]] = None,
    seeds: Optional[Sequence[int]] = None,
) -> List[RunConfig]:
    """
    RunConfigs of every (method, seed) cell of a comparison.

    Raises:
        UsageError: No methods or seeds, or a method that is invalid for the preset
    """
    methods = list(preset.methods if methods is None else methods)
    seeds = list(preset.seeds if seeds is None else seeds)
    if not methods:
        raise UsageError("a comparison needs at least one method")
    if not seeds:
        raise UsageError("a comparison needs at least one seed")
    configs = []
    for method in methods:
        method = Method(method)
        for seed in seeds:
            try:
                configs.append(resolve_run_config(preset, method, seed))
            except ValueError as e:
                raise UsageError(f"{method.value} is not valid for preset '{preset.name}': {e}") from e
    return configs


def run_comparison(
    preset: ExperimentPreset,
    methods: Optional[Sequence[Method]] = None,
    seeds: Optional[Sequence[int]] = None,
    out_dir: Union[str, Path] = OUTPUT_DIR,
    threads: int = DEFAULT_THREADS,
    strict: bool = STRICT_THEOREM,
    parallel_runs: int = MAX_PARALLEL_RUNS,
) -> ComparisonSummary:
    """
    Run every (method, seed) pair of a preset with identical settings.

    A failing run is recorded as `failed` in the summary and does not stop the
    others; diverging runs keep their truncated trace.

    Args:
        preset: Preset (already carrying any overrides)
        methods: Methods to compare (defaults to the preset's)
        seeds: Seeds (defaults to the preset's)
        out_dir: Output root for CSVs, manifests and summary.csv
        threads: Worker thread pool size inside each run
        strict: Fail runs that violate the theorem conditions
        parallel_runs: Number of runs executed concurrently

    Returns:
        ComparisonSummary
    """
    configs = resolve_batch(preset, methods, seeds)
    storage = TraceStorage(out_dir)
    logger.info(f"🚀 Comparison {preset.name}: {len(configs)} runs, {parallel_runs} in parallel")

    def execute(config: RunConfig) -> RunSummary:
        try:
            trace = run(config, threads=threads, strict=strict)
            path = storage.save_trace(trace)
            return _run_summary(config, trace_metrics(trace.frame, trace.manifest), path)
        except Exception as e:
            logger.error(f"❌ {config.algorithm.method.value} seed={config.seed} failed: {e}")
            return RunSummary(
                method=config.algorithm.method,
                seed=config.seed,
                status=RunStatus.failed,
                error=str(e),
            )

    with ThreadPoolExecutor(max_workers=max(1, parallel_runs)) as executor:
        runs = list(executor.map(execute, configs))

    summary = ComparisonSummary(preset=preset.name, runs=runs)
    storage.save_summary(preset.name, comparison_frame(summary))
    logger.info(
        f"✓ Comparison {preset.name} done: {len(runs) - len(summary.failed)} stored, "
        f"{len(summary.diverged)} diverged, {len(summary.failed)} failed"
    )
    return summary


def comparison_frame(summary: ComparisonSummary) -> pd.DataFrame:
    """One row per run of a comparison"""
    return pd.DataFrame([run.model_dump(mode="json") for run in summary.runs])


def exit_code(summary: ComparisonSummary) -> int:
    """0 all ok, 3 any run failed, 4 no failures but some run diverged"""
    if summary.failed:
        return EXIT_RUNTIME
    if summary.diverged:
        return EXIT_DIVERGED
    return EXIT_OK


# =============================================================================
# Summaries
# =============================================================================

def summarize(paths: Iterable[Union[str, Path]]) -> pd.DataFrame:
    """
    Per-method medians across seeds, recomputed from stored CSVs and manifests.

    Diverged runs are counted but excluded from the medians; a method whose
    every run diverged gets status "diverged" and NaN metrics.

    Args:
        paths: Trace CSV paths (each with its manifest sidecar)

    Returns:
        DataFrame with one row per method

    Raises:
        UsageError: No paths
        MixedPresetsError: Traces from more than one preset
    """
    records = []
    presets = set()
    for path in paths:
        manifest = read_manifest(path)
        config = RunConfig.model_validate(manifest["config"])
        presets.add(config.preset)
        metrics = trace_metrics(read_trace(path), manifest)
        records.append({"method": config.algorithm.method.value, "seed": config.seed, **metrics})
    if not records:
        raise UsageError("summarize needs at least one trace")
    if len(presets) > 1:
        raise MixedPresetsError(f"traces mix presets: {', '.join(sorted(presets))}")

    runs = pd.DataFrame(records)
    counts = runs.groupby("method", sort=False).agg(
        seeds=("seed", "count"),
        diverged=("status", lambda status: int((status == RunStatus.diverged.value).sum())),
    )
    converged = runs[runs["status"] == RunStatus.ok.value]
    medians = converged.groupby("method", sort=False)[SUMMARY_METRICS].median()
    table = counts.join(medians, how="left")
    table.insert(0, "status", np.where(table["diverged"] == table["seeds"], "diverged", "ok"))
    table.insert(0, "preset", presets.pop())
    return table.reset_index()
