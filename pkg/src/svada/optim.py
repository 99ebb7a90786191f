"""Adam with decoupled weight decay and a polynomial decay LR schedule."""

from __future__ import annotations

import numpy as np

from .autodiff import ShapeMismatch, Tensor


def lr_schedule(lr0: float, epoch: int, total_epochs: int) -> float:
    """Effective learning rate lr0 / (1 + 10 p)^0.75 with p = epoch/total."""
    p = epoch / total_epochs
    return lr0 / (1.0 + 10.0 * p) ** 0.75


class AdamState:
    """Per-parameter first/second moment buffers plus the step counter."""

    def __init__(self, params: list[Tensor], lr0: float = 1e-3,
                 weight_decay: float = 1e-4, betas=(0.9, 0.999), eps: float = 1e-8,
                 lr_mult: list[float] | None = None):
        self.step = 0
        self.lr0 = lr0
        self.weight_decay = weight_decay
        self.betas = betas
        self.eps = eps
        self.lr_mult = list(lr_mult) if lr_mult is not None else [1.0] * len(params)
        if len(self.lr_mult) != len(params):
            raise ValueError("lr_mult must have one entry per parameter")
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]


def adam_step(state: AdamState, params: list[Tensor], grads: list[np.ndarray],
              epoch: int, total_epochs: int) -> float:
    """One in-place Adam update; returns the effective learning rate used.

    Decoupled weight decay shrinks each parameter before the Adam delta.
    Parameters with a ``None`` gradient (unreachable from the loss) are
    decayed but receive no moment update.
    """
    state.step += 1
    lr = lr_schedule(state.lr0, epoch, total_epochs)
    b1, b2 = state.betas
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    for i, (p, g) in enumerate(zip(params, grads)):
        lr_i = lr * state.lr_mult[i]
        if state.weight_decay:
            p.data -= (lr_i * state.weight_decay) * p.data
        if g is None:
            continue
        if g.shape != p.data.shape:
            raise ShapeMismatch("adam_step", p.data.shape, g.shape)
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * (g * g)
        m_hat = state.m[i] / bc1
        v_hat = state.v[i] / bc2
        p.data -= (lr_i * m_hat / (np.sqrt(v_hat) + state.eps)).astype(p.data.dtype)
    return lr
