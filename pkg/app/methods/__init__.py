"""Distributed optimization methods package"""

from typing import Dict, Optional, Sequence, Tuple, Type

from app.compression import CompressedVector, DenseVector
from app.methods.base import (
    DimensionMismatchError,
    DistributedMethod,
    MasterState,
    WorkerState,
    WrongUploadCountError,
    average_uploads,
)
from app.methods.diana import DIANA
from app.methods.dore import DORE, DORESmooth
from app.methods.double_squeeze import DoubleSqueeze, DoubleSqueezeTopK
from app.methods.sgd import MEMSGD, PSGD, QSGD
from app.models import AlgorithmConfig, BiasedOperatorError, Method
from app.rng import RandomStream

METHOD_CLASSES: Dict[Method, Type[DistributedMethod]] = {
    Method.psgd: PSGD,
    Method.qsgd: QSGD,
    Method.memsgd: MEMSGD,
    Method.diana: DIANA,
    Method.double_squeeze: DoubleSqueeze,
    Method.double_squeeze_topk: DoubleSqueezeTopK,
    Method.dore: DORE,
    Method.dore_smooth: DORESmooth,
}


def create_method(config: AlgorithmConfig, n_workers: int) -> DistributedMethod:
    """Instantiate the stepper for a validated AlgorithmConfig"""
    return METHOD_CLASSES[config.method](config, n_workers)


def worker_step(
    config: AlgorithmConfig,
    state: WorkerState,
    grad: DenseVector,
    rng: RandomStream,
) -> Tuple[WorkerState, CompressedVector]:
    """Upload phase of one worker (the worker count does not affect it)"""
    return create_method(config, 1).worker_step(state, grad, rng)


def master_step(
    config: AlgorithmConfig,
    state: MasterState,
    uploads: Sequence[CompressedVector],
    rng: RandomStream,
    gamma: Optional[float] = None,
) -> Tuple[MasterState, CompressedVector]:
    """Aggregate-and-broadcast phase; n is the number of uploads received"""
    if not uploads:
        raise WrongUploadCountError("the master needs at least one upload")
    step_size = config.hyper.gamma if gamma is None else gamma
    return create_method(config, len(uploads)).master_step(state, uploads, rng, step_size)


def apply_broadcast(
    config: AlgorithmConfig,
    state: WorkerState,
    broadcast: CompressedVector,
    gamma: Optional[float] = None,
) -> WorkerState:
    """Model update of one worker from the broadcast payload"""
    step_size = config.hyper.gamma if gamma is None else gamma
    return create_method(config, 1).apply_broadcast(state, broadcast, step_size)


__all__ = [
    "BiasedOperatorError",
    "DIANA",
    "DORE",
    "DORESmooth",
    "DimensionMismatchError",
    "DistributedMethod",
    "DoubleSqueeze",
    "DoubleSqueezeTopK",
    "MEMSGD",
    "METHOD_CLASSES",
    "MasterState",
    "PSGD",
    "QSGD",
    "WorkerState",
    "WrongUploadCountError",
    "apply_broadcast",
    "average_uploads",
    "create_method",
    "master_step",
    "worker_step",
]
