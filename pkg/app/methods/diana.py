"""DIANA: gradient-difference compression up, exact model step down"""

from dataclasses import replace

import numpy as np

from app.compression import reconstruct
from app.methods.base import DistributedMethod, MasterState, average_uploads
from app.methods.dore import ResidualWorkerMixin
from app.models import Method


class DIANA(ResidualWorkerMixin, DistributedMethod):
    """
    Workers upload Q(g_i − h_i) like DORE. The master broadcasts the model step
    x_next − x̂ uncompressed (32d bits) and every node adds it to its replica.
    """

    method = Method.diana

    def master_step(self, state, uploads, rng, gamma):
        delta = average_uploads(uploads, self.n_workers, state.h.size)
        g_hat = state.h + delta
        x_next = self.prox(gamma, state.x_hat - gamma * g_hat)
        broadcast = self.compress_master(x_next - state.x_hat, rng)
        step = reconstruct(broadcast)
        new_state = MasterState(
            h=state.h + self.hyper.alpha * delta,
            x_hat=state.x_hat + step,
            x=x_next,
            e=state.e,
            last_q_hat=broadcast,
            residual_norm=float(np.linalg.norm(step)),
        )
        return new_state, broadcast

    def apply_broadcast(self, state, broadcast, gamma):
        return replace(state, x_hat=state.x_hat + reconstruct(broadcast))
