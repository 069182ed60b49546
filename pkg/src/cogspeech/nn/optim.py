"""AdaDelta optimizer and gradient clipping.

Update per parameter, with running averages decayed by rho:

    E[g^2]  <- rho E[g^2]  + (1 - rho) g^2
    delta    = -(sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps)) * g
    E[dx^2] <- rho E[dx^2] + (1 - rho) delta^2
    param   += delta
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import NumericError
from .params import Model, zero_frozen_grads


class AdaDeltaState:
    """Per-tensor running averages of squared gradients and updates."""

    def __init__(self, rho: float = 0.95, eps: float = 1e-6):
        if not 0.0 < rho < 1.0:
            raise ValueError(f"rho must lie in (0, 1), got {rho}")
        if eps <= 0.0:
            raise ValueError(f"eps must be positive, got {eps}")
        self.rho = rho
        self.eps = eps
        self.accum_grad_sq: dict[str, np.ndarray] = {}
        self.accum_update_sq: dict[str, np.ndarray] = {}

    @classmethod
    def for_model(cls, model: Model, rho: float = 0.95, eps: float = 1e-6) -> "AdaDeltaState":
        state = cls(rho=rho, eps=eps)
        for gname, tname, tensor in model.named_tensors():
            key = f"{gname}/{tname}"
            state.accum_grad_sq[key] = np.zeros_like(tensor.data)
            state.accum_update_sq[key] = np.zeros_like(tensor.data)
        return state


def adadelta_update(param: np.ndarray, grad: np.ndarray, sq: np.ndarray,
                    dx_sq: np.ndarray, rho: float, eps: float) -> None:
    """In-place AdaDelta update of one parameter array and its accumulators."""
    sq *= rho
    sq += (1.0 - rho) * grad * grad
    delta = -(np.sqrt(dx_sq + eps) / np.sqrt(sq + eps)) * grad
    dx_sq *= rho
    dx_sq += (1.0 - rho) * delta * delta
    param += delta


def adadelta_step(model: Model, state: AdaDeltaState) -> None:
    """Apply one AdaDelta step to the trainable groups of `model`.

    Frozen-group gradients are zeroed first and their tensors and
    accumulators never touched. A non-finite gradient anywhere aborts the
    whole step before any parameter changes.
    """
    zero_frozen_grads(model)
    updates = []
    for group in model.groups.values():
        if not group.trainable:
            continue
        for tname, tensor in group.tensors.items():
            if tensor.grad is None:
                continue
            if not np.all(np.isfinite(tensor.grad)):
                raise NumericError(
                    f"non-finite gradient in {group.name}/{tname}; step aborted")
            updates.append((f"{group.name}/{tname}", tensor))
    for key, tensor in updates:
        adadelta_update(tensor.data, tensor.grad, state.accum_grad_sq[key],
                        state.accum_update_sq[key], state.rho, state.eps)


def clip_global_norm(model: Model, max_norm: float = 5.0) -> float:
    """Scale all trainable gradients so their global L2 norm is <= max_norm."""
    total = 0.0
    grads = []
    for group in model.groups.values():
        if not group.trainable:
            continue
        for tensor in group.tensors.values():
            if tensor.grad is not None:
                total += float(np.sum(tensor.grad.astype(np.float64) ** 2))
                grads.append(tensor)
    norm = math.sqrt(total)
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for tensor in grads:
            tensor.grad = tensor.grad * scale
    return norm
