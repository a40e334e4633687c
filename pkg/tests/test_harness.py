"""
Tests for presets, config parsing, comparison batches and summaries

Usage:
    pytest tests/test_harness.py -v -s
"""

import importlib.util
import json
import math
from pathlib import Path

import pytest

from app import harness
from app.harness import (
    EXIT_DIVERGED,
    EXIT_OK,
    EXIT_RUNTIME,
    ConfigParseError,
    ConfigRangeError,
    MixedPresetsError,
    UnknownKeyError,
    UsageError,
    exit_code,
    parse_config,
    run_comparison,
    run_single,
    summarize,
    trace_metrics,
)
from app.models import (
    CompressorKind,
    ExperimentPreset,
    HyperOverrides,
    Method,
    PresetOverrides,
    RunConfig,
    RunStatus,
)
from app.presets import (
    PRESETS,
    apply_overrides,
    get_preset,
    method_compressors,
    resolve_run_config,
)
from app.storage import TraceStorage, read_manifest, read_trace


def short(name: str, iterations: int = 30, **overrides) -> ExperimentPreset:
    return apply_overrides(get_preset(name), PresetOverrides(iterations=iterations, **overrides))


def write_config(tmp_path, data, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data, indent=2))
    return path


class TestPresets:
    """Registry and resolution"""

    def test_registry(self):
        expected = {"ridge-small", "ridge-small-l1", "logistic-small", "nonconvex-small", "ridge-large", "ridge-large-fast"}
        assert expected <= set(PRESETS)
        assert Method.dore_smooth not in get_preset("ridge-small-l1").methods

    def test_ridge_small_defaults(self):
        config = resolve_run_config(get_preset("ridge-small"), Method.dore, 1)
        hyper = config.algorithm.hyper
        assert hyper.alpha == pytest.approx(1.0 / 11.0)
        assert hyper.beta == pytest.approx(1.0 / 5.5)
        assert hyper.eta == 0.0
        assert config.n_workers == 10 and config.iterations == 2000
        print(f"✓ ridge-small dore: gamma={hyper.gamma:.5f}")

    def test_methods_share_hyperparameters(self):
        preset = get_preset("ridge-small")
        hypers = {resolve_run_config(preset, method, 1).algorithm.hyper for method in preset.methods}
        assert len(hypers) == 1

    def test_method_compressors(self):
        preset = get_preset("ridge-small")
        psgd_worker, psgd_master = method_compressors(preset, Method.psgd)
        assert psgd_worker.kind == psgd_master.kind == CompressorKind.identity
        qsgd_worker, qsgd_master = method_compressors(preset, Method.qsgd)
        assert qsgd_worker.kind == CompressorKind.pnorm and qsgd_master.kind == CompressorKind.identity
        topk_worker, topk_master = method_compressors(preset, Method.double_squeeze_topk)
        assert topk_worker.kind == topk_master.kind == CompressorKind.topk

    def test_overrides_leave_the_registry_untouched(self):
        preset = short("ridge-small", iterations=7, block_size=4, hyper=HyperOverrides(gamma=0.01))
        assert preset.iterations == 7
        assert preset.worker_compressor.block_size == 4 and preset.master_compressor.block_size == 4
        assert resolve_run_config(preset, Method.dore, 1).algorithm.hyper.gamma == 0.01
        assert get_preset("ridge-small").iterations == 2000
        assert get_preset("ridge-small").worker_compressor.block_size == 256

    def test_fixed_rule(self):
        config = resolve_run_config(get_preset("ridge-large"), Method.dore, 1)
        hyper = config.algorithm.hyper
        assert (hyper.alpha, hyper.beta, hyper.eta) == (0.1, 1.0, 1.0)

    def test_ridge_large_learning_rate_pair(self):
        """Same problem and methods, twice the learning rate"""
        slow, fast = get_preset("ridge-large"), get_preset("ridge-large-fast")
        assert fast.problem == slow.problem
        assert fast.methods == slow.methods
        assert Method.double_squeeze in fast.methods
        for method in (Method.dore, Method.double_squeeze):
            slow_hyper = resolve_run_config(slow, method, 1).algorithm.hyper
            fast_hyper = resolve_run_config(fast, method, 1).algorithm.hyper
            assert fast_hyper.gamma == pytest.approx(2.0 * slow_hyper.gamma)
            assert (fast_hyper.alpha, fast_hyper.beta, fast_hyper.eta) == (0.1, 1.0, 1.0)
        print(f"✓ ridge-large gamma={slow_hyper.gamma:.3e}, ridge-large-fast gamma={fast_hyper.gamma:.3e}")


class TestParseConfig:
    """JSON config files"""

    def test_minimal_run_file(self, tmp_path):
        path = write_config(tmp_path, {"preset": "ridge-small", "method": "dore", "seed": 1})
        config = parse_config(path)
        assert isinstance(config, RunConfig)
        assert config.algorithm.method == Method.dore
        assert config.seed == 1 and config.iterations == 2000

    def test_out_of_range_beta(self, tmp_path):
        path = write_config(tmp_path, {"preset": "ridge-small", "method": "dore", "hyper": {"beta": 1.5}})
        with pytest.raises(ConfigRangeError) as excinfo:
            parse_config(path)
        assert excinfo.value.field == "hyper.beta"
        assert excinfo.value.line == 5
        print(f"✓ {excinfo.value}")

    def test_unknown_key(self, tmp_path):
        path = write_config(tmp_path, {"preset": "ridge-small", "method": "dore", "colour": "red"})
        with pytest.raises(UnknownKeyError) as excinfo:
            parse_config(path)
        assert excinfo.value.field == "colour"
        assert excinfo.value.line == 4

    def test_malformed_json_reports_the_line(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{\n  "preset": "ridge-small",\n  "method": dore\n}\n')
        with pytest.raises(ConfigParseError) as excinfo:
            parse_config(path)
        assert excinfo.value.line == 3

    def test_unknown_preset(self, tmp_path):
        path = write_config(tmp_path, {"preset": "nope", "method": "dore"})
        with pytest.raises(ConfigRangeError) as excinfo:
            parse_config(path)
        assert excinfo.value.field == "preset"

    def test_smooth_variant_on_l1_preset(self, tmp_path):
        path = write_config(tmp_path, {"preset": "ridge-small-l1", "method": "dore_smooth"})
        with pytest.raises(ConfigRangeError):
            parse_config(path)

    def test_strict_mode_checks_hyperparameters(self, tmp_path):
        path = write_config(tmp_path, {"preset": "ridge-small", "method": "dore", "hyper": {"beta": 1.0}})
        assert parse_config(path).algorithm.hyper.beta == 1.0
        with pytest.raises(ConfigRangeError, match="beta_upper_bound"):
            parse_config(path, strict=True)

    def test_comparison_file(self, tmp_path):
        path = write_config(tmp_path, {"preset": "ridge-small", "methods": ["psgd", "dore"], "seeds": [4], "iterations": 5})
        preset = parse_config(path)
        assert isinstance(preset, ExperimentPreset)
        assert preset.methods == [Method.psgd, Method.dore]
        assert preset.seeds == [4] and preset.iterations == 5

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigParseError):
            parse_config(tmp_path / "missing.json")

    def test_manifest_round_trip(self, tmp_path):
        config = resolve_run_config(short("ridge-small", iterations=5), Method.dore, 3)
        summary = run_single(config, out_dir=tmp_path, threads=1)
        manifest_path = TraceStorage(tmp_path).manifest_path("ridge-small", "dore", 3)
        assert parse_config(manifest_path) == config
        resolved_path = write_config(tmp_path, read_manifest(summary.trace_path)["config"], "resolved.json")
        assert parse_config(resolved_path) == config


class TestComparison:
    """Batches of (method, seed) runs"""

    def test_dore_uses_a_fraction_of_the_bits(self, tmp_path):
        summary = run_comparison(short("ridge-small"), [Method.psgd, Method.dore], [1], out_dir=tmp_path, threads=1)
        storage = TraceStorage(tmp_path)
        assert storage.trace_path("ridge-small", "psgd", 1).exists()
        assert storage.trace_path("ridge-small", "dore", 1).exists()
        assert storage.summary_path("ridge-small").exists()
        bits = {run.method: run.total_bits for run in summary.runs}
        assert bits[Method.dore] < 0.06 * bits[Method.psgd]
        assert exit_code(summary) == EXIT_OK
        print(f"✓ dore/psgd bits: {bits[Method.dore] / bits[Method.psgd]:.4f}")

    def test_seeds_share_everything_but_the_seed(self, tmp_path):
        summary = run_comparison(short("ridge-small", iterations=10), [Method.dore], [1, 2, 3], out_dir=tmp_path)
        paths = [run.trace_path for run in summary.runs]
        assert len(set(paths)) == 3
        manifests = [read_manifest(path) for path in paths]
        for manifest in manifests:
            manifest["config"].pop("seed")
        assert manifests[0]["config"] == manifests[1]["config"] == manifests[2]["config"]
        finals = {read_trace(path).iloc[-1]["train_loss"] for path in paths}
        assert len(finals) == 3

    def test_empty_method_list(self, tmp_path):
        with pytest.raises(UsageError):
            run_comparison(short("ridge-small"), [], [1], out_dir=tmp_path)

    def test_invalid_method_for_preset(self, tmp_path):
        with pytest.raises(UsageError):
            run_comparison(short("ridge-small-l1"), [Method.dore_smooth], [1], out_dir=tmp_path)

    def test_failed_run_does_not_stop_the_batch(self, tmp_path, monkeypatch):
        real_run = harness.run

        def flaky_run(config, **kwargs):
            if config.algorithm.method == Method.psgd:
                raise RuntimeError("worker crashed")
            return real_run(config, **kwargs)

        monkeypatch.setattr(harness, "run", flaky_run)
        summary = run_comparison(short("ridge-small", iterations=5), [Method.psgd, Method.dore], [1], out_dir=tmp_path)
        statuses = {run.method: run.status for run in summary.runs}
        assert statuses == {Method.psgd: RunStatus.failed, Method.dore: RunStatus.ok}
        assert "worker crashed" in summary.failed[0].error
        assert exit_code(summary) == EXIT_RUNTIME

    def test_divergence_is_recorded(self, tmp_path):
        preset = short("ridge-small", iterations=200, hyper=HyperOverrides(gamma=1000.0))
        summary = run_comparison(preset, [Method.psgd], [1], out_dir=tmp_path)
        assert summary.runs[0].status == RunStatus.diverged
        assert summary.runs[0].diverged_at is not None
        assert exit_code(summary) == EXIT_DIVERGED


class TestSummarize:
    """Per-method medians recomputed from disk"""

    def test_single_trace_echoes_its_final_row(self, tmp_path):
        config = resolve_run_config(short("ridge-small", iterations=20), Method.dore, 1)
        summary = run_single(config, out_dir=tmp_path)
        table = summarize([summary.trace_path])
        row = table.iloc[0]
        last = read_trace(summary.trace_path).iloc[-1]
        assert row["method"] == "dore" and row["seeds"] == 1
        assert row["final_loss"] == last["train_loss"] == summary.final_loss
        assert row["total_bits"] == summary.total_bits
        assert row["preset"] == "ridge-small"

    def test_medians_exclude_diverged_runs(self, tmp_path):
        dore = run_comparison(short("ridge-small", iterations=20), [Method.dore], [1, 2, 3], out_dir=tmp_path)
        diverging = short("ridge-small", iterations=200, hyper=HyperOverrides(gamma=1000.0))
        psgd = run_comparison(diverging, [Method.psgd], [1], out_dir=tmp_path)
        table = summarize([run.trace_path for run in dore.runs + psgd.runs]).set_index("method")
        losses = sorted(run.final_loss for run in dore.runs)
        assert table.loc["dore", "final_loss"] == pytest.approx(losses[1])
        assert table.loc["dore", "status"] == "ok"
        assert table.loc["psgd", "status"] == "diverged"
        assert table.loc["psgd", "diverged"] == 1
        assert math.isnan(table.loc["psgd", "final_loss"])

    def test_metrics_match_in_memory_values(self, tmp_path):
        config = resolve_run_config(short("ridge-small", iterations=15), Method.qsgd, 2)
        summary = run_single(config, out_dir=tmp_path)
        metrics = trace_metrics(read_trace(summary.trace_path), read_manifest(summary.trace_path))
        assert metrics["final_dist_sq"] == summary.final_dist_sq
        assert metrics["reduction"] == summary.reduction
        # 182-bit p-norm uploads, 3200-bit model broadcast on d=100
        assert metrics["reduction"] == pytest.approx(1.0 - (182 + 3200) / 6400)

    def test_mixed_presets(self, tmp_path):
        first = run_single(resolve_run_config(short("ridge-small", iterations=3), Method.dore, 1), out_dir=tmp_path)
        second = run_single(resolve_run_config(short("ridge-small-l1", iterations=3), Method.dore, 1), out_dir=tmp_path)
        with pytest.raises(MixedPresetsError):
            summarize([first.trace_path, second.trace_path])

    def test_nothing_to_summarize(self):
        with pytest.raises(UsageError):
            summarize([])


class TestCommunicationTable:
    """scripts/communication_table.py"""

    @pytest.fixture
    def script(self):
        path = Path(__file__).resolve().parent.parent / "scripts" / "communication_table.py"
        spec = importlib.util.spec_from_file_location("communication_table", path)
        module = importlib.util.module_from_spec(spec)
        spec.loader.exec_module(module)
        return module

    def test_rows_per_method(self, script):
        table = script.communication_rows([512], [256]).set_index("method")
        assert len(table) == len(Method)
        assert table.loc["psgd", "reduction"] == pytest.approx(0.0)
        assert table.loc["qsgd", "upload_ratio"] == pytest.approx(19.69, abs=0.01)
        assert table.loc["dore", "reduction"] >= 0.949
        print(f"✓ dore reduction {table.loc['dore', 'reduction']:.4f}")
