"""Gradient-compression baselines that broadcast the full model: P-SGD, QSGD, MEM-SGD"""

from dataclasses import replace

import numpy as np

from app.compression import reconstruct
from app.methods.base import ModelBroadcastMethod, check_dimension
from app.models import Method


class ErrorFeedbackWorkerMixin:
    """Worker uploads Q(g + e_i) and keeps e_i = (g + e_i) − Q(g + e_i)"""

    worker_error_feedback = True

    def worker_step(self, state, grad, rng):
        check_dimension(grad, state.x_hat.size, "gradient")
        corrected = grad + state.e
        upload = self.compress_worker(corrected, rng)
        error = corrected - reconstruct(upload)
        return replace(state, e=error, residual_norm=float(np.linalg.norm(corrected))), upload


class PSGD(ModelBroadcastMethod):
    """Proximal (parallel) SGD without any compression"""

    method = Method.psgd

    def worker_step(self, state, grad, rng):
        check_dimension(grad, state.x_hat.size, "gradient")
        upload = self.compress_worker(grad, rng)
        return replace(state, residual_norm=float(np.linalg.norm(grad))), upload


class QSGD(PSGD):
    """Compressed gradients up, full model down"""

    method = Method.qsgd


class MEMSGD(ErrorFeedbackWorkerMixin, ModelBroadcastMethod):
    """Error-feedback SGD with an uncompressed model broadcast"""

    method = Method.memsgd
