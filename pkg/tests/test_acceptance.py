"""
End-to-end acceptance runs on the registered presets

These take minutes rather than seconds; deselect them with -m "not slow".

Usage:
    pytest tests/test_acceptance.py -v -s
"""

import math
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from app.compression import (
    bit_cost,
    compressor_constant,
    monte_carlo_moments,
    quantization_variance,
)
from app.harness import run_single
from app.models import CompressorSpec, Method, PresetOverrides
from app.presets import apply_overrides, get_preset, resolve_run_config
from app.rng import StreamPurpose, random_stream
from app.simulator import communication_summary, lyapunov_series, run, summarize_bits
from app.storage import frame_to_csv

pytestmark = pytest.mark.slow

RIDGE_SEEDS = [1, 2, 3]
EXACT_METHODS = [Method.dore, Method.diana, Method.psgd]
NEIGHBORHOOD_METHODS = [Method.qsgd, Method.memsgd, Method.double_squeeze]


def preset_config(name, method, seed, **overrides):
    preset = get_preset(name)
    if overrides:
        preset = apply_overrides(preset, PresetOverrides(**overrides))
    return resolve_run_config(preset, method, seed)


@pytest.fixture(scope="module")
def ridge_runs():
    """Full-length ridge-small traces of every method and seed"""
    return {
        (method, seed): run(preset_config("ridge-small", method, seed))
        for method in EXACT_METHODS + NEIGHBORHOOD_METHODS
        for seed in RIDGE_SEEDS
    }


@pytest.fixture(scope="module")
def fine_block_runs():
    """200 iterations of DORE and DoubleSqueeze with 4-coordinate blocks"""
    return {
        method: run(preset_config("ridge-small", method, 1, iterations=200, block_size=4))
        for method in (Method.dore, Method.double_squeeze)
    }


class TestCompressorStatistics:
    """Unbiasedness and variance of p-norm quantization"""

    def test_infinity_norm_quantization(self):
        spec = CompressorSpec.pnorm("inf", 64)
        C = compressor_constant(spec, 256)
        vectors = np.random.default_rng(2024).standard_normal((20, 256))
        z_scores = []
        for index, x in enumerate(vectors):
            rng = random_stream(index, StreamPurpose.worker_compression)
            moments = monte_carlo_moments(spec, x, rng, 100_000)
            block_max = np.repeat(np.abs(x).reshape(4, 64).max(axis=1), 64)
            deviation = np.abs(moments.mean - x)
            # Coordinates at their block maximum are deterministic
            fixed = np.abs(x) == block_max
            assert np.all(deviation[fixed] == 0.0)
            assert np.all(moments.std[fixed] == 0.0)
            # Bernoulli standard deviation of sign(x)·M·[u < |x|/M]
            exact_std = np.sqrt(np.abs(x) * block_max - x ** 2)
            standard_error = exact_std[~fixed] / math.sqrt(moments.n)
            z_scores.append(deviation[~fixed] / standard_error)
            assert moments.sq_error_mean <= 1.05 * C * float(x @ x)

            exact = quantization_variance(x, "inf", 64)
            assert abs(moments.sq_error_mean - exact) <= 4 * moments.sq_error_std / math.sqrt(moments.n)

        z = np.concatenate(z_scores)
        assert np.mean(z > 4) <= 1e-3
        assert np.all(z <= 6)
        print(f"✓ {z.size} random coordinates, max z={z.max():.2f}")

    def test_single_block_variance(self):
        spec = CompressorSpec.pnorm("inf", 256)
        for index, x in enumerate(np.random.default_rng(7).standard_normal((3, 256))):
            moments = monte_carlo_moments(spec, x, random_stream(100 + index, StreamPurpose.worker_compression), 100_000)
            expected = np.abs(x).sum() * np.abs(x).max() - float(x @ x)
            assert abs(moments.sq_error_mean - expected) <= 3 * moments.sq_error_std / math.sqrt(moments.n)


class TestBitAccounting:
    """Compression ratio and communication savings on d=512"""

    def test_compression_ratio(self):
        assert 32 * 512 / bit_cost(CompressorSpec.pnorm("inf", 256), 512) == pytest.approx(19.69, abs=0.01)

    def test_reductions(self):
        def reduction(upload, broadcast):
            frame = pd.DataFrame({
                "iter": [0, 1],
                "bits_up_cumulative": [0, 4 * upload],
                "bits_down_cumulative": [0, broadcast],
            })
            return summarize_bits(frame, d=512, n_workers=4).reduction

        b256 = bit_cost(CompressorSpec.pnorm("inf", 256), 512)
        b512 = bit_cost(CompressorSpec.pnorm("inf", 512), 512)
        assert reduction(b256, 32 * 512) == pytest.approx(0.474, abs=0.005)
        assert reduction(b256, b256) >= 0.949
        assert reduction(b512, b512) >= 0.95


class TestRidgeSeparation:
    """Exact convergence versus a compression-noise neighborhood"""

    @pytest.mark.parametrize("method", EXACT_METHODS)
    def test_exact_methods_reach_the_optimum(self, ridge_runs, method):
        for seed in RIDGE_SEEDS:
            trace = ridge_runs[(method, seed)]
            assert not trace.diverged
            dist_sq = trace.column("dist_sq")
            assert dist_sq[-1] <= 1e-16 * dist_sq[0]
            print(f"✓ {method.value} seed {seed}: dist_sq {dist_sq[0]:.3e} -> {dist_sq[-1]:.3e}")

    @pytest.mark.parametrize("method", NEIGHBORHOOD_METHODS)
    def test_single_compression_methods_plateau(self, ridge_runs, method):
        plateaued = []
        for seed in RIDGE_SEEDS:
            trace = ridge_runs[(method, seed)]
            if trace.diverged:
                print(f"  {method.value} seed {seed}: diverged at iteration {trace.diverged_at}")
                continue
            dore_final = ridge_runs[(Method.dore, seed)].final["dist_sq"]
            assert trace.final["dist_sq"] >= 1e6 * dore_final
            plateaued.append(seed)
            print(f"✓ {method.value} seed {seed}: plateau at {trace.final['dist_sq']:.3e}")
        assert plateaued, f"{method.value} diverged on every seed"

    def test_dore_bits(self, ridge_runs):
        dore = communication_summary(ridge_runs[(Method.dore, 1)])
        psgd = communication_summary(ridge_runs[(Method.psgd, 1)])
        assert dore.total_bits == 2000 * (10 * 182 + 182)
        assert psgd.total_bits == 2000 * 11 * 3200


class TestLinearRate:
    """Lyapunov certificate and vanishing residuals"""

    def test_lyapunov_contracts_at_the_theoretical_rate(self, fine_block_runs):
        trace = fine_block_runs[Method.dore]
        assert trace.config.algorithm.hyper.eta == 0.0
        series = lyapunov_series(trace)
        assert series.rho is not None and 0 < series.rho < 1
        bound = 1.1 * series.rho ** series.iterations * series.values[0]
        assert np.all(series.values <= bound)
        print(f"✓ rho={series.rho:.4f}, V_200/V_0={series.values[-1] / series.values[0]:.3e}")

    def test_dore_residuals_vanish(self, fine_block_runs):
        frame = fine_block_runs[Method.dore].frame.set_index("iter")
        for column in ("worker_residual_norm", "master_residual_norm"):
            assert frame.loc[200, column] <= 1e-6 * frame.loc[1, column]

    def test_double_squeeze_residuals_persist(self, fine_block_runs):
        frame = fine_block_runs[Method.double_squeeze].frame.set_index("iter")
        for column in ("worker_residual_norm", "master_residual_norm"):
            assert frame.loc[200, column] >= 1e-2 * frame.loc[1, column]


class TestEquivalenceOracles:
    """Exact reductions between methods on ridge-small"""

    def test_identity_dore_is_proximal_sgd(self):
        identity = CompressorSpec.identity()
        psgd = preset_config("ridge-small", Method.psgd, 1, iterations=500)
        hyper = psgd.algorithm.hyper.model_copy(update={"beta": 1.0, "eta": 0.0})
        algorithm = psgd.algorithm.model_copy(
            update={"method": Method.dore, "worker_compressor": identity, "master_compressor": identity, "hyper": hyper},
        )
        dore = psgd.model_copy(update={"algorithm": algorithm})
        assert np.max(np.abs(run(dore).final_model - run(psgd).final_model)) <= 1e-12

    def test_diana_is_dore_with_exact_broadcast(self):
        diana = preset_config("ridge-small", Method.diana, 2, iterations=300)
        hyper = diana.algorithm.hyper.model_copy(update={"beta": 1.0, "eta": 0.0})
        diana = diana.model_copy(update={"algorithm": diana.algorithm.model_copy(update={"hyper": hyper})})
        algorithm = diana.algorithm.model_copy(
            update={"method": Method.dore, "master_compressor": CompressorSpec.identity()},
        )
        dore = diana.model_copy(update={"algorithm": algorithm})
        ours, theirs = run(dore), run(diana)
        assert np.array_equal(ours.final_model, theirs.final_model)
        for column in ("train_loss", "dist_sq", "worker_residual_norm", "tracker_error_sq"):
            assert np.array_equal(ours.column(column), theirs.column(column))


class TestNonconvex:
    """Stationarity on the nonconvex surrogate"""

    @pytest.fixture(scope="class")
    def runs(self):
        preset = get_preset("nonconvex-small")
        return {
            method: [run(resolve_run_config(preset, method, seed)) for seed in preset.seeds]
            for method in (Method.dore, Method.psgd)
        }

    def test_gradient_norm_decreases(self, runs):
        for trace in runs[Method.dore]:
            values = trace.column("grad_norm_sq")[1:]
            quarter = len(values) // 4
            assert values[-quarter:].mean() < 0.5 * values[:quarter].mean()

    def test_dore_keeps_pace_with_psgd(self, runs):
        dore = np.mean([trace.final["grad_norm_sq"] for trace in runs[Method.dore]])
        psgd = np.mean([trace.final["grad_norm_sq"] for trace in runs[Method.psgd]])
        assert 0.5 * psgd <= dore <= 2.0 * psgd
        print(f"✓ terminal grad_norm_sq dore={dore:.4e} psgd={psgd:.4e}")


class TestParallelInvariance:
    """Thread count never changes the stored bytes"""

    @pytest.mark.parametrize("name,method", [
        ("ridge-small", Method.dore),
        ("nonconvex-small", Method.dore),
        ("nonconvex-small", Method.memsgd),
    ])
    def test_one_and_eight_threads(self, tmp_path, name, method):
        config = preset_config(name, method, 1, iterations=200)
        single = run_single(config, out_dir=tmp_path / "one", threads=1)
        pooled = run_single(config, out_dir=tmp_path / "eight", threads=8)
        assert Path(single.trace_path).read_bytes() == Path(pooled.trace_path).read_bytes()
        assert frame_to_csv(run(config, threads=8).frame) == Path(single.trace_path).read_text()
