"""Base interface and shared state for distributed optimization methods"""

from abc import ABC, abstractmethod
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple

import numpy as np

from app.compression import CompressedVector, DenseVector, compress, reconstruct
from app.models import AlgorithmConfig, CompressorSpec, Method
from app.problems import prox
from app.rng import RandomStream


class DimensionMismatchError(ValueError):
    """Raised when a vector or payload has the wrong length"""
    pass


class WrongUploadCountError(ValueError):
    """Raised when the master receives a number of uploads other than n"""
    pass


@dataclass
class WorkerState:
    """
    Per-worker protocol state.

    h: gradient tracker h_i (zeros for methods without a tracker)
    x_hat: local model replica x̂_i
    e: error-feedback buffer e_i (empty for methods without error feedback)
    residual_norm: norm of the vector compressed by the latest upload
    """
    h: DenseVector
    x_hat: DenseVector
    e: DenseVector
    residual_norm: float = 0.0


@dataclass
class MasterState:
    """
    Master protocol state.

    h: average tracker; x_hat: compressed-model iterate; x: latest prox iterate;
    e: model-residual compensation error; last_q_hat: latest broadcast payload;
    residual_norm: norm of the vector compressed (or stepped) by the latest broadcast
    """
    h: DenseVector
    x_hat: DenseVector
    x: DenseVector
    e: DenseVector
    last_q_hat: Optional[CompressedVector] = None
    residual_norm: float = 0.0


def check_dimension(vector: DenseVector, d: int, what: str) -> None:
    if vector.shape != (d,):
        raise DimensionMismatchError(f"{what} has shape {vector.shape}, expected ({d},)")


def average_uploads(uploads: Sequence[CompressedVector], n: int, d: int) -> DenseVector:
    """
    Index-ordered mean of the reconstructed uploads.

    Summation order is fixed by worker index so the result never depends on
    which worker finished first.
    """
    if len(uploads) != n:
        raise WrongUploadCountError(f"expected {n} uploads, got {len(uploads)}")
    total = np.zeros(d)
    for index, upload in enumerate(uploads):
        if upload.d != d:
            raise DimensionMismatchError(f"upload {index} has d={upload.d}, expected {d}")
        total += reconstruct(upload)
    return total / n


class DistributedMethod(ABC):
    """
    One synchronous round of a parameter-server method, split into phases:
    worker_step (upload), master_step (aggregate + broadcast) and
    apply_broadcast (worker model update).
    """

    method: Method
    tracks_gradient: bool = False
    worker_error_feedback: bool = False

    def __init__(self, config: AlgorithmConfig, n_workers: int):
        self.config = config
        self.hyper = config.hyper
        self.n_workers = n_workers

    @property
    def worker_compressor(self) -> CompressorSpec:
        return self.config.worker_compressor

    @property
    def master_compressor(self) -> CompressorSpec:
        return self.config.master_compressor

    def prox(self, gamma: float, v: DenseVector) -> DenseVector:
        return prox(self.config.regularizer, gamma, v)

    def init_worker(self, x0: DenseVector) -> WorkerState:
        """h_i⁰ = 0 and x̂_i⁰ = x̂⁰"""
        d = x0.size
        buffer = np.zeros(d) if self.worker_error_feedback else np.zeros(0)
        return WorkerState(h=np.zeros(d), x_hat=x0.copy(), e=buffer)

    def init_master(self, x0: DenseVector) -> MasterState:
        """h⁰ = 0, x̂⁰ = x⁰ and e⁰ = 0"""
        d = x0.size
        return MasterState(h=np.zeros(d), x_hat=x0.copy(), x=x0.copy(), e=np.zeros(d))

    def compress_worker(self, vector: DenseVector, rng: RandomStream) -> CompressedVector:
        return compress(self.worker_compressor, vector, rng)

    def compress_master(self, vector: DenseVector, rng: RandomStream) -> CompressedVector:
        return compress(self.master_compressor, vector, rng)

    @abstractmethod
    def worker_step(
        self,
        state: WorkerState,
        grad: DenseVector,
        rng: RandomStream,
    ) -> Tuple[WorkerState, CompressedVector]:
        """
        Build the worker's upload from a fresh gradient.

        Args:
            state: Worker state before the step
            grad: Stochastic gradient g_i at the worker's x̂_i
            rng: The worker's compression stream for this iteration

        Returns:
            (new state, upload payload)
        """
        pass

    @abstractmethod
    def master_step(
        self,
        state: MasterState,
        uploads: Sequence[CompressedVector],
        rng: RandomStream,
        gamma: float,
    ) -> Tuple[MasterState, CompressedVector]:
        """
        Aggregate uploads in worker-index order and build the broadcast.

        Args:
            state: Master state before the step
            uploads: Exactly n payloads, index-ordered
            rng: The master's compression stream for this iteration
            gamma: Learning rate of this iteration

        Returns:
            (new state, broadcast payload)
        """
        pass

    @abstractmethod
    def apply_broadcast(
        self,
        state: WorkerState,
        broadcast: CompressedVector,
        gamma: float,
    ) -> WorkerState:
        """Update the worker's model replica from the broadcast payload"""
        pass


class ModelBroadcastMethod(DistributedMethod):
    """
    Master takes a proximal step on the averaged upload and broadcasts the new
    model uncompressed; workers adopt it.
    """

    def master_step(self, state, uploads, rng, gamma):
        d = state.x.size
        average = average_uploads(uploads, self.n_workers, d)
        x_next = self.prox(gamma, state.x - gamma * average)
        broadcast = self.compress_master(x_next, rng)
        model = reconstruct(broadcast)
        new_state = replace(
            state,
            x=model,
            x_hat=model.copy(),
            last_q_hat=broadcast,
            residual_norm=float(np.linalg.norm(x_next - state.x)),
        )
        return new_state, broadcast

    def apply_broadcast(self, state, broadcast, gamma):
        return replace(state, x_hat=reconstruct(broadcast))
