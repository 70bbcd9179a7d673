"""Minimal deterministic neural toolkit: kernels, layers, models, AdamW, gradient checks"""

from .gradcheck import grad_check
from .model import init_params, m2d_forward, m3d_forward, model_backward, model_forward
from .optim import Optimizer, adamw_step, clip_grad_norm, lr_schedule
from .params import ModelParams, load_params, save_params

__all__ = [
    "ModelParams", "Optimizer", "adamw_step", "clip_grad_norm", "grad_check", "init_params",
    "load_params", "lr_schedule", "m2d_forward", "m3d_forward", "model_backward",
    "model_forward", "save_params",
]
