# src/gs_compositor/config/constants.py
"""Numeric conventions shared across modules"""

# Hilbert serialization
MAX_HILBERT_ORDER = 20
DEFAULT_HILBERT_ORDER = 10

# Rasterizer
ZNEAR = 0.01
COV2D_REGULARIZATION = 0.1      # px^2 added to the 2D covariance diagonal
MAHALANOBIS_CUTOFF = 3.0        # splat footprint radius in standard deviations
ALPHA_MAX = 0.99
TRANSMITTANCE_MIN = 1e-4

# Scene
QUATERNION_TOLERANCE = 1e-6
FD_STEP = 1e-3                  # relative step for shape finite differences
MIN_SCALE = 1e-4
SINGLE_POINT_SCALE = 0.05       # initial scale when only one Gaussian is sampled

# Neural network
LAYER_NORM_EPS = 1e-5
MLP_RATIO = 4
INIT_STD = 0.02
GRAD_CHECK_FLOOR = 1e-6

# Optimizer defaults
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.95
ADAM_EPS = 1e-8
BASE_LR = 2e-3
WEIGHT_DECAY = 0.05
CLIP_NORM = 10.0
MIN_LR = 1e-6

# Losses / metrics
PERCEPTUAL_MIN_SIDE = 8
PERCEPTUAL_SEED = 0
PERCEPTUAL_CHANNELS = (8, 16, 32)
PSNR_CAP_DB = 99.0
PSNR_MSE_FLOOR = 1e-12
SSIM_WINDOW = 8
SSIM_K1 = 0.01
SSIM_K2 = 0.03

# Synthetic scenes
SKY_COLOR = (0.7, 0.8, 0.9)
MAX_PLACEMENT_ATTEMPTS = 1000
RAY_EPSILON = 1e-6
SHADOW_BIAS = 1e-4

# Parameter checkpoint format
PARAMS_MAGIC = b"MVCL"
PARAMS_VERSION = 1
