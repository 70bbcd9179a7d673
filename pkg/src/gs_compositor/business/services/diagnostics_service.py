"""Self-checks: gradient verification of every backward pass and the locality benchmark"""

from pathlib import Path
from typing import Callable, Dict, Optional, Tuple, Union

import numpy as np
import structlog

from ...config.settings import LossWeights, ModelConfig
from ...core.errors import NumericalError
from ...core.logging import log_execution
from ...core.utils import make_rng
from ...formats.documents import write_json
from ...losses.losses import loss_2d, loss_3d
from ...nn import functional as F
from ...nn import layers as L
from ...nn.gradcheck import Op, grad_check
from ...nn.model import init_params, model_backward, model_forward
from ...render.rasterizer import color_backward, render
from ...scene.camera import Camera, CameraView
from ...scene.gaussians import GaussianScene
from ...serialization.benchmark import run_locality_benchmark
from ...serialization.mapping import build_grid_mapping

logger = structlog.get_logger()

PathLike = Union[str, Path]

GRAD_TOLERANCE = 1e-3

Case = Tuple[Op, Dict[str, np.ndarray], np.ndarray]


def _layer_params(rng: np.random.Generator, c: int) -> Dict[str, np.ndarray]:
    params = {
        "ln1.gamma": 1.0 + 0.1 * rng.standard_normal(c), "ln1.beta": 0.1 * rng.standard_normal(c),
        "ln2.gamma": 1.0 + 0.1 * rng.standard_normal(c), "ln2.beta": 0.1 * rng.standard_normal(c),
        "mlp.w1": 0.3 * rng.standard_normal((c, 4 * c)), "mlp.b1": 0.1 * rng.standard_normal(4 * c),
        "mlp.w2": 0.3 * rng.standard_normal((4 * c, c)), "mlp.b2": 0.1 * rng.standard_normal(c),
    }
    for proj in "qkvo":
        params[f"attn.w{proj}"] = 0.3 * rng.standard_normal((c, c))
        params[f"attn.b{proj}"] = 0.1 * rng.standard_normal(c)
    return params


def _layer_norm_case(rng) -> Case:
    def op(p, x):
        out, cache = F.layer_norm_fwd(x, p["gamma"], p["beta"])
        return out, lambda d: F.layer_norm_bwd(d, cache)
    c = 6
    return op, {"gamma": 1.0 + 0.2 * rng.standard_normal(c), "beta": rng.standard_normal(c)}, rng.standard_normal((5, c))


def _attention_case(rng) -> Case:
    def op(p, x):
        out, cache = L.w_atten_fwd(x, p, heads=2)
        return out, lambda d: L.w_atten_bwd(d, cache)
    params = {k[len("attn."):]: v for k, v in _layer_params(rng, 4).items() if k.startswith("attn.")}
    return op, params, rng.standard_normal((2, 4, 4))


def _mlp_case(rng) -> Case:
    def op(p, x):
        out, cache = L.mlp_fwd(x, p)
        return out, lambda d: L.mlp_bwd(d, cache)
    params = {k[len("mlp."):]: v for k, v in _layer_params(rng, 4).items() if k.startswith("mlp.")}
    return op, params, rng.standard_normal((3, 4))


def _swin_layer_case(rng) -> Case:
    def op(p, x):
        out, cache = L.swin_layer_fwd(x, p, heads=2, window=2)
        return out, lambda d: L.swin_layer_bwd(d, cache)
    return op, _layer_params(rng, 4), rng.standard_normal((4, 4, 4))


def _patch_embed_case(rng) -> Case:
    def op(p, x):
        out, cache = L.patch_embed_fwd(x, p, patch=2)
        return out, lambda d: L.patch_embed_bwd(d, cache)
    params = {
        "conv1.w": 0.3 * rng.standard_normal((3, 2, 3, 3)), "conv1.b": 0.1 * rng.standard_normal(3),
        "conv2.w": 0.3 * rng.standard_normal((3, 3, 3, 3)), "conv2.b": 0.1 * rng.standard_normal(3),
        "proj.w": 0.3 * rng.standard_normal((12, 4)), "proj.b": 0.1 * rng.standard_normal(4),
    }
    return op, params, rng.standard_normal((2, 4, 4))


def _unpatch_head_case(rng) -> Case:
    def op(p, x):
        out, cache = L.unpatch_head_fwd(x, p, patch=2)
        return out, lambda d: L.unpatch_head_bwd(d, cache)
    params = {"w": rng.standard_normal((4, 12)), "b": rng.standard_normal(3)}
    return op, params, rng.standard_normal((4, 2, 2))


def _model_case(rng, input_channels: int) -> Case:
    cfg = ModelConfig(
        embed_dim=8, blocks=1, layers_per_block=2, heads=2, window=2, patch=2,
        stem_channels=4, input_channels=input_channels, output_channels=3,
    )
    params = {k: v.astype(np.float64) for k, v in init_params(cfg, 0).values.items()}
    # larger weights so every path carries a measurable gradient
    for name in params:
        if name.endswith((".w", "w1", "w2", "wq", "wk", "wv", "wo")):
            params[name] = params[name] + 0.2 * rng.standard_normal(params[name].shape)

    def op(p, x):
        output = model_forward(x, p, cfg)
        return output.out, lambda d: model_backward(d, output.cache)
    return op, params, rng.standard_normal((input_channels, 8, 8))


def _toy_scene(rng) -> Tuple[GaussianScene, CameraView]:
    camera = Camera(fx=20.0, fy=20.0, cx=7.5, cy=7.5, width=16, height=16)
    m = 4
    mu = np.column_stack([rng.uniform(-0.3, 0.3, m), rng.uniform(-0.3, 0.3, m), rng.uniform(2.0, 3.0, m)])
    scene = GaussianScene(
        mu=mu, rot=np.tile([1.0, 0.0, 0.0, 0.0], (m, 1)), scale=np.full((m, 3), 0.15),
        opacity=np.full(m, 0.8), color=rng.random((m, 3)), provenance=np.zeros((m, 3), dtype=np.int64),
    )
    view = CameraView(camera=camera, image=rng.random((3, 16, 16)))
    return scene, view


def _color_backward_case(rng) -> Case:
    scene, view = _toy_scene(rng)

    def op(p, x):
        out = render(scene.with_colors(p["color"]), view, dtype=np.float64)
        return out, lambda d: (None, {"color": color_backward(scene, view, d)})
    return op, {"color": scene.color.copy()}, np.zeros(1)


def _loss_2d_case(rng) -> Case:
    target = rng.random((3, 16, 16))
    weights = LossWeights(lam=0.05)

    def op(p, x):
        result = loss_2d(x, target, weights)
        return np.array(result.value), lambda d: (float(d) * result.grad, {})
    return op, {}, rng.random((3, 16, 16))


def _loss_3d_case(rng) -> Case:
    scene, view = _toy_scene(rng)
    mapping = build_grid_mapping(scene.size)
    colors_gt = rng.random((scene.size, 3))
    weights = LossWeights(lam=0.05, beta=0.5)

    def op(p, x):
        result = loss_3d(x, colors_gt, scene, [view], mapping, weights)
        return np.array(result.value), lambda d: (float(d) * result.grad, {})
    return op, {}, rng.random((3, mapping.side, mapping.side))


GRAD_CASES: Dict[str, Callable[[np.random.Generator], Case]] = {
    "layer_norm": _layer_norm_case,
    "w_atten": _attention_case,
    "mlp": _mlp_case,
    "swin_layer": _swin_layer_case,
    "patch_embed": _patch_embed_case,
    "unpatch_head": _unpatch_head_case,
    "m2d": lambda rng: _model_case(rng, 7),
    "m3d": lambda rng: _model_case(rng, 11),
    "loss_2d": _loss_2d_case,
    "loss_3d": _loss_3d_case,
    "color_backward": _color_backward_case,
}


@log_execution(log_args=False)
def run_grad_checks(seed: int = 0, out_path: Optional[PathLike] = None) -> Dict[str, float]:
    """
    Central-difference check of every analytic backward

    Raises NumericalError naming the failing ops when any relative error
    exceeds 1e-3; the report is written first.
    """
    errors: Dict[str, float] = {}
    for index, (name, build) in enumerate(GRAD_CASES.items()):
        op, params, x = build(make_rng(seed, index))
        errors[name] = grad_check(op, params, x, seed=seed, check_input=name != "color_backward")
        logger.info("Gradient check", op=name, max_rel_error=errors[name])
    failed = sorted(name for name, err in errors.items() if err > GRAD_TOLERANCE)
    if out_path is not None:
        write_json(out_path, {"tolerance": GRAD_TOLERANCE, "errors": errors, "failed": failed})
    if failed:
        raise NumericalError(f"gradient check failed for {failed}")
    return errors


@log_execution(log_args=False)
def run_hilbert_bench(
        n_points: int = 1000,
        seed: int = 0,
        p: int = 10,
        out_path: Optional[PathLike] = None,
) -> Dict[str, float]:
    """Spearman locality of Hilbert, Morton and random orderings"""
    scores = run_locality_benchmark(n_points=n_points, seed=seed, p=p)
    if out_path is not None:
        write_json(out_path, {"n_points": n_points, "seed": seed, "order": p, "spearman": scores})
    return scores
