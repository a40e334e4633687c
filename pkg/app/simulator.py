"""
Synchronous parameter-server simulation

Every iteration: each worker samples a gradient at its replica and uploads a
compressed payload (fanned out over a thread pool), the master aggregates the
uploads in worker-index order and broadcasts one payload, and every worker
applies the broadcast. Metrics and cumulative bit counts are recorded into a
RunTrace every `cadence` iterations.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from app.compression import (
    FLOAT_BITS,
    CompressedVector,
    DenseVector,
    NonFiniteError,
    bit_cost,
    compressor_constant,
)
from app.hyperparams import (
    convergence_factor,
    enforce,
    lyapunov_weights,
    theorem_rho,
    validate_hyperparameters,
)
from app.methods import DistributedMethod, MasterState, WorkerState, create_method
from app.models import RunConfig, ValidationReport
from app.problems import (
    Problem,
    build_problem,
    full_gradient,
    global_gradient,
    objective,
    stochastic_gradient,
)
from app.rng import StreamPurpose, random_stream

logger = logging.getLogger(__name__)

TRACE_COLUMNS = [
    "iter",
    "train_loss",
    "grad_norm_sq",
    "dist_sq",
    "worker_residual_norm",
    "master_residual_norm",
    "error_norm",
    "worker_error_norm",
    "tracker_error_sq",
    "bits_up_cumulative",
    "bits_down_cumulative",
]


class NonFiniteIterateError(ArithmeticError):
    """Raised when an iterate, gradient or metric stops being finite"""

    def __init__(self, iteration: int, what: str):
        self.iteration = iteration
        super().__init__(f"non-finite {what} at iteration {iteration}")


class NeedsOptimumError(ValueError):
    """Raised when a quantity needs x* but the problem has no reference optimum"""
    pass


@dataclass
class RunTrace:
    """Recorded metrics of one run plus the manifest that reproduces it"""
    config: RunConfig
    frame: pd.DataFrame
    manifest: Dict[str, Any]
    final_model: DenseVector
    diverged: bool = False
    diverged_at: Optional[int] = None

    def column(self, name: str) -> np.ndarray:
        return self.frame[name].to_numpy()

    @property
    def rows(self) -> int:
        return len(self.frame)

    @property
    def final(self) -> Dict[str, Any]:
        """Last recorded row"""
        return self.frame.iloc[-1].to_dict()


@dataclass(frozen=True)
class CommunicationSummary:
    """Bit totals of a run and the saving versus uncompressed traffic"""
    iterations: int
    bits_up: int
    bits_down: int
    total_bits: int
    per_iter_bits: float
    reduction: float
    total_reduction: float


@dataclass(frozen=True)
class LyapunovSeries:
    """Realized V per recorded row and the theoretical contraction factor"""
    iterations: np.ndarray
    values: np.ndarray
    rho: Optional[float]


@dataclass
class _RunContext:
    config: RunConfig
    problem: Problem
    method: DistributedMethod
    workers: List[WorkerState]
    master: MasterState
    bits_up: int = 0
    bits_down: int = 0
    rows: List[List[float]] = field(default_factory=list)


def derived_constants(config: RunConfig, problem: Problem) -> Tuple[Optional[float], Optional[float]]:
    """C_q and C_q^m of the configured compressors (None for biased operators)"""
    d = problem.d
    worker = config.algorithm.worker_compressor
    master = config.algorithm.master_compressor
    C_q = compressor_constant(worker, d) if worker.unbiased else None
    C_q_m = compressor_constant(master, d) if master.unbiased else None
    return C_q, C_q_m


def theorem_report(config: RunConfig, problem: Problem) -> Optional[ValidationReport]:
    """Theorem check of the run's hyperparameters, when both compressors are unbiased"""
    C_q, C_q_m = derived_constants(config, problem)
    if C_q is None or C_q_m is None:
        return None
    return validate_hyperparameters(config.algorithm.hyper, C_q, C_q_m, problem.n_workers, problem.constants)


def _build_manifest(config: RunConfig, problem: Problem, report: Optional[ValidationReport]) -> Dict[str, Any]:
    C_q, C_q_m = derived_constants(config, problem)
    constants = problem.constants
    factor = None
    rho = None
    if C_q is not None and C_q_m is not None and constants.mu > 0:
        factor = convergence_factor(C_q, C_q_m, problem.n_workers, constants)
        rho = theorem_rho(config.algorithm.hyper, C_q_m, constants)
    d = problem.d
    upload_bits = bit_cost(config.algorithm.worker_compressor, d)
    broadcast_bits = bit_cost(config.algorithm.master_compressor, d)
    return {
        "config": config.model_dump(mode="json"),
        "derived": {
            "d": d,
            "n_workers": problem.n_workers,
            "C_q": C_q,
            "C_q_m": C_q_m,
            "L": constants.L,
            "mu": constants.mu,
            "sigma_sq": constants.sigma_sq,
            "rho": rho,
            "default_convergence_factor": factor,
            "has_reference_optimum": problem.x_star is not None,
        },
        "communication": {
            "upload_bits": upload_bits,
            "broadcast_bits": broadcast_bits,
            "uncompressed_bits": FLOAT_BITS * d,
            "per_link_formula": "(bits_up/n + bits_down)/K vs 2*32d",
            "per_link_reduction": 1.0 - (upload_bits + broadcast_bits) / (2.0 * FLOAT_BITS * d),
            "total_formula": "(bits_up + bits_down)/K vs (n+1)*32d",
            "total_reduction": 1.0 - (problem.n_workers * upload_bits + broadcast_bits)
            / ((problem.n_workers + 1.0) * FLOAT_BITS * d),
        },
        "validation": report.model_dump(mode="json") if report is not None else None,
    }


def _record(ctx: _RunContext, iteration: int) -> None:
    problem = ctx.problem
    x_hat = ctx.master.x_hat
    train_loss = objective(problem.shards, problem.regularizer, x_hat)
    grad = global_gradient(problem.shards, x_hat)
    grad_norm_sq = float(grad @ grad)
    if not (np.isfinite(train_loss) and np.isfinite(grad_norm_sq)):
        raise NonFiniteIterateError(iteration, "loss")

    dist_sq = float("nan")
    tracker_error_sq = float("nan")
    if problem.x_star is not None:
        gap = x_hat - problem.x_star
        dist_sq = float(gap @ gap)
        if ctx.method.tracks_gradient:
            tracker_error_sq = float(sum(
                np.sum((worker.h - target) ** 2)
                for worker, target in zip(ctx.workers, problem.grad_star)
            ))

    worker_error_norm = 0.0
    if ctx.method.worker_error_feedback:
        worker_error_norm = max(float(np.linalg.norm(worker.e)) for worker in ctx.workers)

    ctx.rows.append([
        iteration,
        train_loss,
        grad_norm_sq,
        dist_sq,
        max(worker.residual_norm for worker in ctx.workers),
        ctx.master.residual_norm,
        float(np.linalg.norm(ctx.master.e)),
        worker_error_norm,
        tracker_error_sq,
        ctx.bits_up,
        ctx.bits_down,
    ])


def _frame(rows: Sequence[Sequence[float]]) -> pd.DataFrame:
    frame = pd.DataFrame(list(rows), columns=TRACE_COLUMNS)
    for name in ("iter", "bits_up_cumulative", "bits_down_cumulative"):
        frame[name] = frame[name].astype(np.int64)
    return frame


def run(
    config: RunConfig,
    threads: int = 1,
    strict: bool = False,
    problem: Optional[Problem] = None,
) -> RunTrace:
    """
    Simulate one configuration.

    Worker randomness comes from per-(seed, purpose, worker, iteration)
    streams and uploads are aggregated in worker-index order, so the trace is
    identical for any thread count.

    Args:
        config: Fully-resolved run configuration
        threads: Size of the worker thread pool
        strict: Raise instead of warning when hyperparameters violate the theorem
        problem: Prebuilt problem (built and cached from config.problem when omitted)

    Returns:
        RunTrace; a run whose iterates stop being finite ends early with `diverged` set
    """
    algorithm = config.algorithm
    if problem is None:
        problem = build_problem(config.problem, config.n_workers, algorithm.regularizer, config.batch_size)
    n = problem.n_workers
    if config.batch_size is not None and any(config.batch_size > shard.rows for shard in problem.shards):
        raise ValueError(f"batch_size={config.batch_size} exceeds the smallest shard")

    report = theorem_report(config, problem)
    if report is not None:
        enforce(report, strict)
    manifest = _build_manifest(config, problem, report)

    method = create_method(algorithm, n)
    x0 = np.zeros(problem.d)
    ctx = _RunContext(
        config=config,
        problem=problem,
        method=method,
        workers=[method.init_worker(x0) for _ in range(n)],
        master=method.init_master(x0),
    )

    logger.info(
        f"🚀 Run {config.preset}/{algorithm.method.value} seed={config.seed}: "
        f"K={config.iterations} n={n} d={problem.d} threads={threads}"
    )
    start = time.perf_counter()
    diverged_at = None
    final_model = x0

    def worker_round(index: int, iteration: int, gamma: float) -> Tuple[WorkerState, CompressedVector]:
        worker = ctx.workers[index]
        shard = problem.shards[index]
        if config.batch_size is None:
            grad = full_gradient(shard, worker.x_hat)
        else:
            grad_rng = random_stream(config.seed, StreamPurpose.gradient, node=index, iteration=iteration)
            grad = stochastic_gradient(shard, worker.x_hat, config.batch_size, grad_rng)
        if not np.all(np.isfinite(grad)):
            raise NonFiniteIterateError(iteration + 1, f"gradient on worker {index}")
        rng = random_stream(
            config.seed, StreamPurpose.worker_compression,
            node=index, iteration=iteration, stream=algorithm.worker_compressor.seed_stream,
        )
        return method.worker_step(worker, grad, rng)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as executor, \
            np.errstate(over="ignore", invalid="ignore"):
        done = 0
        try:
            _record(ctx, 0)
            for iteration in range(config.iterations):
                gamma = config.schedule.gamma_at(algorithm.hyper.gamma, iteration)
                if threads > 1:
                    results = list(executor.map(lambda i: worker_round(i, iteration, gamma), range(n)))
                else:
                    results = [worker_round(i, iteration, gamma) for i in range(n)]
                uploads = [upload for _, upload in results]
                ctx.bits_up += sum(upload.bit_cost for upload in uploads)

                master_rng = random_stream(
                    config.seed, StreamPurpose.master_compression,
                    iteration=iteration, stream=algorithm.master_compressor.seed_stream,
                )
                ctx.master, broadcast = method.master_step(ctx.master, uploads, master_rng, gamma)
                ctx.bits_down += broadcast.bit_cost
                ctx.workers = [method.apply_broadcast(state, broadcast, gamma) for state, _ in results]

                done = iteration + 1
                if not np.all(np.isfinite(ctx.master.x_hat)):
                    raise NonFiniteIterateError(done, "model")
                final_model = ctx.master.x_hat
                if done % config.cadence == 0 or done == config.iterations:
                    _record(ctx, done)
        except (NonFiniteIterateError, NonFiniteError) as exc:
            diverged_at = getattr(exc, "iteration", done + 1)
            logger.warning(f"⚠️  {algorithm.method.value} seed={config.seed} diverged: {exc}")

    elapsed = time.perf_counter() - start
    manifest["outcome"] = {
        "diverged": diverged_at is not None,
        "diverged_at": diverged_at,
        "rows": len(ctx.rows),
    }
    logger.info(
        f"✓ Run {algorithm.method.value} seed={config.seed} finished in {elapsed:.2f}s "
        f"({len(ctx.rows)} rows{', diverged' if diverged_at is not None else ''})"
    )
    return RunTrace(
        config=config,
        frame=_frame(ctx.rows),
        manifest=manifest,
        final_model=final_model.copy(),
        diverged=diverged_at is not None,
        diverged_at=diverged_at,
    )


def summarize_bits(frame: pd.DataFrame, d: int, n_workers: int) -> CommunicationSummary:
    """
    Bits of a recorded trace frame.

    per_iter_bits follows the per-link convention (bits_up/n + bits_down)/K and
    reduction = 1 − per_iter_bits/(2·32d); total_reduction compares the raw
    total with (n+1)·32d per iteration.
    """
    if len(frame) == 0:
        raise ValueError("trace has no rows")
    last = frame.iloc[-1]
    iterations = int(last["iter"])
    bits_up = int(last["bits_up_cumulative"])
    bits_down = int(last["bits_down_cumulative"])
    if iterations == 0:
        return CommunicationSummary(0, 0, 0, 0, 0.0, 0.0, 0.0)
    per_iter = (bits_up / n_workers + bits_down) / iterations
    return CommunicationSummary(
        iterations=iterations,
        bits_up=bits_up,
        bits_down=bits_down,
        total_bits=bits_up + bits_down,
        per_iter_bits=per_iter,
        reduction=1.0 - per_iter / (2.0 * FLOAT_BITS * d),
        total_reduction=1.0 - (bits_up + bits_down) / (iterations * (n_workers + 1.0) * FLOAT_BITS * d),
    )


def communication_summary(trace: RunTrace) -> CommunicationSummary:
    """Bits of a run; d and n come from the trace manifest"""
    derived = trace.manifest["derived"]
    return summarize_bits(trace.frame, derived["d"], derived["n_workers"])


def lyapunov_series(trace: RunTrace) -> LyapunovSeries:
    """
    Realized V = β(1 − (C_m+1)β)‖q‖² + ‖x̂ − x*‖² + ((1+η)cβγ²/n) Σ‖h_i − ∇f_i(x*)‖²
    per recorded row, with ‖q‖ the residual that produced the row's x̂.
    """
    dist_sq = trace.column("dist_sq")
    tracker = trace.column("tracker_error_sq")
    if np.any(np.isnan(dist_sq)) or np.any(np.isnan(tracker)):
        raise NeedsOptimumError("the Lyapunov function needs x* and per-worker trackers")
    derived = trace.manifest["derived"]
    C_q_m = derived["C_q_m"]
    if C_q_m is None:
        raise NeedsOptimumError("the Lyapunov function needs an unbiased master compressor")
    hyper = trace.config.algorithm.hyper
    w_q, w_h = lyapunov_weights(hyper, C_q_m, derived["n_workers"])
    values = w_q * trace.column("master_residual_norm") ** 2 + dist_sq + w_h * tracker
    return LyapunovSeries(iterations=trace.column("iter"), values=values, rho=derived["rho"])
