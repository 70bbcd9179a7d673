"""Central-difference verification of analytic backward passes"""

from typing import Callable, Dict, Mapping, Optional, Tuple

import numpy as np
import structlog

from ..config.constants import GRAD_CHECK_FLOOR
from ..core.utils import make_rng

logger = structlog.get_logger()

# op(params, x) -> (output, backward) with backward(d_output) -> (dx, grads)
Backward = Callable[[np.ndarray], Tuple[Optional[np.ndarray], Dict[str, np.ndarray]]]
Op = Callable[[Dict[str, np.ndarray], np.ndarray], Tuple[np.ndarray, Backward]]


def relative_error(analytic: float, numeric: float, floor: float = GRAD_CHECK_FLOOR) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def grad_check(
        op: Op,
        params: Mapping[str, np.ndarray],
        x: np.ndarray,
        eps: float = 1e-5,
        samples: int = 12,
        seed: int = 0,
        check_input: bool = True,
) -> float:
    """
    Compare an op's analytic gradients with central differences

    The output is reduced to a scalar with fixed random weights, so every
    output element takes part. Up to ``samples`` entries of each parameter
    (and of the input) are checked; everything runs in float64.

    Args:
        op: ``op(params, x) -> (out, backward)``
        params: parameter arrays by name
        x: input array
        eps: finite-difference step
        samples: entries checked per tensor
        seed: seed for the projection weights and the sampled entries
        check_input: also check the gradient w.r.t. ``x``

    Returns:
        Maximum relative error |a - n| / max(|a|, |n|, 1e-6)
    """
    rng = make_rng(seed)
    params64 = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    x64 = np.array(x, dtype=np.float64)

    out, backward = op(params64, x64)
    weights = rng.standard_normal(np.shape(out))
    dx, grads = backward(weights)

    def objective() -> float:
        value, _ = op(params64, x64)
        return float(np.sum(weights * value))

    def check(target: np.ndarray, analytic: np.ndarray, name: str) -> float:
        flat = target.reshape(-1)
        picks = rng.choice(flat.size, size=min(samples, flat.size), replace=False)
        worst = 0.0
        for i in picks:
            saved = flat[i]
            flat[i] = saved + eps
            plus = objective()
            flat[i] = saved - eps
            minus = objective()
            flat[i] = saved
            numeric = (plus - minus) / (2.0 * eps)
            worst = max(worst, relative_error(float(analytic.reshape(-1)[i]), numeric))
        logger.debug("Gradient checked", tensor=name, max_rel_error=worst)
        return worst

    worst = 0.0
    for name in sorted(params64):
        worst = max(worst, check(params64[name], np.asarray(grads[name]), name))
    if check_input and dx is not None:
        worst = max(worst, check(x64, np.asarray(dx), "input"))
    return worst
