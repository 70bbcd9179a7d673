"""AdamW with decoupled weight decay, global-norm clipping and the warmup/cosine schedule"""

import math
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from ..config.constants import ADAM_BETA1, ADAM_BETA2, ADAM_EPS, MIN_LR, WEIGHT_DECAY
from ..core.errors import ConfigError, DomainError, NumericalError
from .params import ModelParams


def adamw_step(
        params: ModelParams,
        grads: Mapping[str, np.ndarray],
        lr: float,
        beta1: float = ADAM_BETA1,
        beta2: float = ADAM_BETA2,
        eps: float = ADAM_EPS,
        weight_decay: float = WEIGHT_DECAY,
) -> ModelParams:
    """
    One AdamW update, in place

    The decay theta <- theta - lr * wd * theta is applied separately from
    the bias-corrected moment step.

    Returns:
        ``params``, updated
    """
    unknown = sorted(set(grads) - set(params.values))
    if unknown:
        raise DomainError(f"gradients for unknown parameters: {unknown[:5]}")
    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            raise NumericalError(f"non-finite gradient for {name}")
        if np.shape(grad) != params[name].shape:
            raise DomainError(
                f"gradient for {name} has shape {np.shape(grad)}, expected {params[name].shape}"
            )

    for name, grad in grads.items():
        value = params[name]
        state = params.state[name]
        state.step += 1
        g = np.asarray(grad, dtype=np.float64)
        m = beta1 * state.m.astype(np.float64) + (1.0 - beta1) * g
        v = beta2 * state.v.astype(np.float64) + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1 ** state.step)
        v_hat = v / (1.0 - beta2 ** state.step)
        theta = value.astype(np.float64)
        theta = theta - lr * weight_decay * theta
        theta = theta - lr * m_hat / (np.sqrt(v_hat) + eps)
        state.m = m.astype(value.dtype)
        state.v = v.astype(value.dtype)
        params.values[name] = theta.astype(value.dtype)
    return params


def global_norm(grads: Mapping[str, np.ndarray]) -> float:
    # fixed name order keeps the sum deterministic
    total = 0.0
    for name in sorted(grads):
        g = np.asarray(grads[name], dtype=np.float64)
        total += float(np.dot(g.ravel(), g.ravel()))
    return math.sqrt(total)


def clip_grad_norm(
        grads: Mapping[str, np.ndarray], max_norm: float
) -> Tuple[Dict[str, np.ndarray], float]:
    """
    Scale gradients so their global L2 norm is at most ``max_norm``

    Returns:
        (clipped gradients, norm before clipping)
    """
    norm = global_norm(grads)
    if not math.isfinite(norm):
        raise NumericalError("non-finite gradient norm")
    if max_norm <= 0 or norm <= max_norm:
        return dict(grads), norm
    scale = max_norm / (norm + 1e-6)
    return {k: np.asarray(g, dtype=np.float64) * scale for k, g in grads.items()}, norm


def lr_schedule(
        step: int,
        base_lr: float,
        warmup: int,
        total: int,
        min_lr: float = MIN_LR,
) -> float:
    """Linear warmup 0 -> base_lr, then cosine decay to ``min_lr`` at ``total``"""
    if warmup > total:
        raise ConfigError(f"warmup ({warmup}) exceeds total steps ({total})")
    if step < 0 or step > total:
        raise DomainError(f"step {step} outside [0, {total}]")
    if step < warmup:
        return base_lr * step / warmup
    if total == warmup:
        return base_lr
    progress = (step - warmup) / (total - warmup)
    return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + math.cos(math.pi * progress))


class Optimizer:
    """AdamW plus clipping and schedule bound to one parameter set"""

    def __init__(
            self,
            params: ModelParams,
            base_lr: float,
            warmup: int,
            total: int,
            beta1: float = ADAM_BETA1,
            beta2: float = ADAM_BETA2,
            eps: float = ADAM_EPS,
            weight_decay: float = WEIGHT_DECAY,
            clip_norm: Optional[float] = None,
            min_lr: float = MIN_LR,
    ):
        lr_schedule(0, base_lr, warmup, total, min_lr)
        self.params = params
        self.base_lr = base_lr
        self.warmup = warmup
        self.total = total
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.clip_norm = clip_norm
        self.min_lr = min_lr

    def lr_at(self, step: int) -> float:
        return lr_schedule(min(step, self.total), self.base_lr, self.warmup, self.total, self.min_lr)

    def step(self, grads: Mapping[str, np.ndarray], step: int) -> Dict[str, float]:
        """Clip, update; returns lr and gradient norms before/after clipping"""
        if self.clip_norm is not None:
            grads, norm_pre = clip_grad_norm(grads, self.clip_norm)
        else:
            norm_pre = global_norm(grads)
        norm_post = global_norm(grads)
        lr = self.lr_at(step)
        adamw_step(
            self.params, grads, lr,
            beta1=self.beta1, beta2=self.beta2, eps=self.eps, weight_decay=self.weight_decay,
        )
        return {"lr": lr, "grad_norm_pre": norm_pre, "grad_norm_post": norm_post}
