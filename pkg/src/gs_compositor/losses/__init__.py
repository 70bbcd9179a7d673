"""Training losses and evaluation metrics"""

from .losses import LossResult, loss_2d, loss_3d, mse_loss, perceptual_loss
from .metrics import psnr, psnr_masked, ssim, ssim_masked

__all__ = [
    "LossResult", "loss_2d", "loss_3d", "mse_loss", "perceptual_loss",
    "psnr", "psnr_masked", "ssim", "ssim_masked",
]
