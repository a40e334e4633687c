"""Shared fixtures for the simulator test suite"""

from typing import Optional

import pytest

from app.models import (
    AlgorithmConfig,
    CompressorSpec,
    Hyperparams,
    Method,
    ProblemKind,
    ProblemSpec,
    Regularizer,
    RunConfig,
)

TINY_RIDGE = ProblemSpec(kind=ProblemKind.ridge, m=40, d=10, noise_std=0.1, l2=0.5, data_seed=3)


@pytest.fixture
def tiny_ridge() -> ProblemSpec:
    """40×10 ridge problem split across 4 workers"""
    return TINY_RIDGE


@pytest.fixture
def make_config():
    """Factory for small RunConfigs on the tiny ridge problem"""

    def factory(
        method: Method = Method.dore,
        worker: Optional[CompressorSpec] = None,
        master: Optional[CompressorSpec] = None,
        hyper: Optional[Hyperparams] = None,
        iterations: int = 20,
        n_workers: int = 4,
        seed: int = 0,
        cadence: int = 1,
        batch_size: Optional[int] = None,
        problem: ProblemSpec = TINY_RIDGE,
        regularizer: Optional[Regularizer] = None,
        preset: str = "tiny",
    ) -> RunConfig:
        algorithm = AlgorithmConfig(
            method=method,
            worker_compressor=worker or CompressorSpec.pnorm("inf", 256),
            master_compressor=master or CompressorSpec.pnorm("inf", 256),
            hyper=hyper or Hyperparams(alpha=0.25, beta=0.5, gamma=0.02, eta=0.0, c=1.0),
            regularizer=regularizer or Regularizer(),
        )
        return RunConfig(
            preset=preset,
            algorithm=algorithm,
            problem=problem,
            n_workers=n_workers,
            iterations=iterations,
            batch_size=batch_size,
            seed=seed,
            cadence=cadence,
        )

    return factory
