"""
Double residual compression (DORE)

Workers compress the gradient residual Δ_i = g_i − h_i against a tracker that
follows their local gradient; the master compresses the model residual
q = x_next − x̂ + ηe and feeds the compression error back with weight η.
Both residuals vanish as the iterates converge, so compression stops costing
accuracy.
"""

from dataclasses import replace
from typing import Tuple

import numpy as np

from app.compression import CompressedVector, DenseVector, reconstruct
from app.methods.base import (
    DistributedMethod,
    MasterState,
    WorkerState,
    average_uploads,
    check_dimension,
)
from app.models import Method


class ResidualWorkerMixin:
    """Worker side shared by DORE, DORE-smooth and DIANA"""

    tracks_gradient = True

    def worker_step(self, state: WorkerState, grad: DenseVector, rng) -> Tuple[WorkerState, CompressedVector]:
        check_dimension(grad, state.h.size, "gradient")
        residual = grad - state.h
        upload = self.compress_worker(residual, rng)
        tracker = state.h + self.hyper.alpha * reconstruct(upload)
        return replace(state, h=tracker, residual_norm=float(np.linalg.norm(residual))), upload


class DORE(ResidualWorkerMixin, DistributedMethod):
    """Proximal DORE: x_next = prox_{γR}(x̂ − γĝ), broadcast Q(x_next − x̂ + ηe)"""

    method = Method.dore

    def _gradient_estimate(self, state: MasterState, uploads) -> Tuple[DenseVector, DenseVector]:
        delta = average_uploads(uploads, self.n_workers, state.h.size)
        return state.h + delta, delta

    def _model_residual(self, state: MasterState, g_hat: DenseVector, gamma: float) -> Tuple[DenseVector, DenseVector]:
        x_next = self.prox(gamma, state.x_hat - gamma * g_hat)
        return x_next, x_next - state.x_hat

    def master_step(self, state, uploads, rng, gamma):
        g_hat, delta = self._gradient_estimate(state, uploads)
        x_next, q = self._model_residual(state, g_hat, gamma)
        if self.hyper.eta:
            q = q + self.hyper.eta * state.e
        broadcast = self.compress_master(q, rng)
        q_hat = reconstruct(broadcast)
        new_state = MasterState(
            h=state.h + self.hyper.alpha * delta,
            x_hat=state.x_hat + self.hyper.beta * q_hat,
            x=x_next,
            e=q - q_hat,
            last_q_hat=broadcast,
            residual_norm=float(np.linalg.norm(q)),
        )
        return new_state, broadcast

    def apply_broadcast(self, state, broadcast, gamma):
        return replace(state, x_hat=state.x_hat + self.hyper.beta * reconstruct(broadcast))


class DORESmooth(DORE):
    """DORE for R = 0: the model residual is the compensated step q = −γĝ + ηe"""

    method = Method.dore_smooth

    def _model_residual(self, state, g_hat, gamma):
        step = -gamma * g_hat
        return state.x_hat + step, step
