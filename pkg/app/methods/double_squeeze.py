"""
DoubleSqueeze: error-compensated compression on both links

Workers upload Q(g_i + e_i) and keep their compression error. The master
compresses the averaged gradient plus its own error, broadcasts it, and every
node applies the same proximal step with the decompressed average.
"""

from dataclasses import replace

import numpy as np

from app.compression import reconstruct
from app.methods.base import DistributedMethod, MasterState, average_uploads
from app.methods.sgd import ErrorFeedbackWorkerMixin
from app.models import Method


class DoubleSqueeze(ErrorFeedbackWorkerMixin, DistributedMethod):
    """Unbiased-compressor DoubleSqueeze"""

    method = Method.double_squeeze

    def master_step(self, state, uploads, rng, gamma):
        average = average_uploads(uploads, self.n_workers, state.x.size)
        corrected = average + state.e
        broadcast = self.compress_master(corrected, rng)
        v_hat = reconstruct(broadcast)
        x_next = self.prox(gamma, state.x - gamma * v_hat)
        new_state = MasterState(
            h=state.h,
            x_hat=x_next,
            x=x_next,
            e=corrected - v_hat,
            last_q_hat=broadcast,
            residual_norm=float(np.linalg.norm(corrected)),
        )
        return new_state, broadcast

    def apply_broadcast(self, state, broadcast, gamma):
        return replace(state, x_hat=self.prox(gamma, state.x_hat - gamma * reconstruct(broadcast)))


class DoubleSqueezeTopK(DoubleSqueeze):
    """DoubleSqueeze with top-k compressors on both links"""

    method = Method.double_squeeze_topk
