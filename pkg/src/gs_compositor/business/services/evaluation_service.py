"""Image-quality evaluation of predicted views against ground truth"""

from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Union

import numpy as np
import structlog

from ...config.settings import PipelineConfig
from ...core.errors import DomainError
from ...core.logging import log_execution
from ...core.utils import deterministic_blas
from ...formats.documents import write_json
from ...formats.images import read_mask_ppm, read_pfm
from ...losses.metrics import psnr, psnr_masked, ssim, ssim_masked
from ...nn.params import ModelParams
from ...synthkit.dataset import CompositeView
from .inputs import predict_views

logger = structlog.get_logger()

PathLike = Union[str, Path]

METRIC_NAMES = ("psnr", "ssim", "psnr_masked", "ssim_masked")


def collect_images(directory: PathLike, filename: str = "gt.pfm") -> Dict[str, Path]:
    """
    Float images keyed by view name

    Flat ``<name>.pfm`` files are taken as-is; dataset view directories
    contribute ``<name>/<filename>``.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise DomainError(f"not a directory: {directory}")
    found = {p.stem: p for p in sorted(directory.glob("*.pfm"))}
    for sub in sorted(p for p in directory.iterdir() if p.is_dir()):
        if (sub / filename).exists():
            found.setdefault(sub.name, sub / filename)
    return found


def collect_masks(directory: PathLike) -> Dict[str, Path]:
    directory = Path(directory)
    return {
        sub.name: sub / "mask.ppm"
        for sub in sorted(p for p in directory.iterdir() if p.is_dir())
        if (sub / "mask.ppm").exists()
    }


def view_metrics(pred: np.ndarray, gt: np.ndarray, mask: Optional[np.ndarray] = None) -> Dict[str, Optional[float]]:
    scores: Dict[str, Optional[float]] = {"psnr": psnr(pred, gt), "ssim": ssim(pred, gt)}
    if mask is not None:
        scores["psnr_masked"] = psnr_masked(pred, gt, mask)
        scores["ssim_masked"] = ssim_masked(pred, gt, mask)
    return scores


def mean_metrics(per_view: Dict[str, Dict[str, Optional[float]]]) -> Dict[str, Optional[float]]:
    """Arithmetic mean per metric over the views where it is defined"""
    means: Dict[str, Optional[float]] = {}
    for name in METRIC_NAMES:
        values = [s[name] for s in per_view.values() if s.get(name) is not None]
        if any(name in s for s in per_view.values()):
            means[name] = float(np.mean(values)) if values else None
    return means


@log_execution(log_args=False)
def evaluate(
        pred_dir: PathLike,
        gt_dir: PathLike,
        out_path: Optional[PathLike] = None,
        mask_dir: Optional[PathLike] = None,
) -> Dict[str, Any]:
    """
    Per-view and mean PSNR/SSIM of ``pred_dir`` against ``gt_dir``

    Both sides must hold the same view names. Masks (``<name>/mask.ppm``
    under ``mask_dir``, or under ``gt_dir`` when it is a dataset scene)
    add composite-region variants.
    """
    preds = collect_images(pred_dir)
    gts = collect_images(gt_dir)
    missing_pred = sorted(set(gts) - set(preds))
    missing_gt = sorted(set(preds) - set(gts))
    if missing_pred or missing_gt or not preds:
        raise DomainError(
            f"prediction and ground-truth sets differ: missing predictions {missing_pred}, "
            f"missing ground truth {missing_gt}"
        )
    masks = collect_masks(mask_dir if mask_dir is not None else gt_dir)

    per_view: Dict[str, Dict[str, Optional[float]]] = {}
    for name in sorted(preds):
        pred, gt = read_pfm(preds[name]), read_pfm(gts[name])
        if pred.shape != gt.shape:
            raise DomainError(f"{name}: prediction {pred.shape} vs ground truth {gt.shape}")
        mask = read_mask_ppm(masks[name]) if name in masks else None
        per_view[name] = view_metrics(pred, gt, mask)

    report = {"views": per_view, "mean": mean_metrics(per_view)}
    if out_path is not None:
        write_json(out_path, report)
    logger.info("Evaluation finished", views=len(per_view), **{
        k: v for k, v in report["mean"].items() if v is not None
    })
    return report


def evaluate_2d(
        config: PipelineConfig,
        params_2d: ModelParams,
        views: Sequence[CompositeView],
) -> Dict[str, Any]:
    """Per-view model output and unmodified composite, both scored against ground truth"""
    if not views:
        raise DomainError("no views to evaluate")
    with deterministic_blas():
        predictions = predict_views(
            [v.view for v in views], params_2d, config.m2d, config.ablation, config.threads
        )
    model: Dict[str, Dict[str, Optional[float]]] = {}
    composite: Dict[str, Dict[str, Optional[float]]] = {}
    for index, (view, prediction) in enumerate(zip(views, predictions)):
        key = f"{index:04d}_{view.name}"
        model[key] = view_metrics(np.clip(prediction.harmonized, 0.0, 1.0), view.gt, view.mask)
        composite[key] = view_metrics(view.composite, view.gt, view.mask)
    return {
        "model": {"views": model, "mean": mean_metrics(model)},
        "composite": {"views": composite, "mean": mean_metrics(composite)},
    }
