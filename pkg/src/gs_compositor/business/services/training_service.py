"""Stage-1 (per-view) and stage-2 (Gaussian grid) training loops"""

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import structlog

from ...config.settings import OptimizerConfig, PipelineConfig
from ...core.errors import DomainError, NumericalError
from ...core.logging import ContextLogger, log_execution
from ...core.utils import deterministic_blas, make_rng, ordered_map
from ...formats.documents import write_csv, write_json
from ...losses.losses import LossResult, loss_2d, loss_3d
from ...nn.model import init_params, model_backward, model_forward
from ...nn.optim import Optimizer
from ...nn.params import ModelParams, check_compatible, load_params, save_params
from ...synthkit.dataset import CompositeView, Dataset
from .inputs import gaussian_features, m2d_input, m3d_input, predict_views
from .scene_service import FittedScene, SceneService

logger = structlog.get_logger()

PathLike = Union[str, Path]

LOSS_COLUMNS = ("step", "lr", "loss", "grad_norm_pre", "grad_norm_post")
SMOOTHING_WINDOW = 20
CHECKPOINT_FILE = "model.mvcl"
METRICS_FILE = "metrics.json"
LOSS_CURVE_FILE = "loss.csv"

Gradients = Dict[str, np.ndarray]


@dataclass(frozen=True)
class RunArtifacts:
    checkpoint: Path
    metrics: Path
    loss_curve: Path


def smoothed_ends(losses: Sequence[float], window: int = SMOOTHING_WINDOW) -> Tuple[float, float]:
    """Mean of the first and of the last ``window`` losses"""
    if not losses:
        raise DomainError("no losses to smooth")
    window = min(window, len(losses))
    return float(np.mean(losses[:window])), float(np.mean(losses[-window:]))


def batch_indices(rng: np.random.Generator, count: int, batch: int):
    """Endless batches drawn from per-epoch shuffles of range(count)"""
    order: List[int] = []
    while True:
        picked = []
        while len(picked) < batch:
            if not order:
                order = rng.permutation(count).tolist()
            picked.append(order.pop(0))
        yield picked


def make_optimizer(params: ModelParams, cfg: OptimizerConfig) -> Optimizer:
    return Optimizer(
        params, base_lr=cfg.lr, warmup=cfg.warmup_steps, total=cfg.total_steps,
        beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps, weight_decay=cfg.weight_decay,
        clip_norm=cfg.clip_norm, min_lr=cfg.min_lr,
    )


def _accumulate(results: Sequence[Tuple[LossResult, Gradients]]) -> Tuple[float, Dict[str, float], Gradients]:
    """Batch mean of losses, terms and gradients, summed in batch order"""
    n = len(results)
    loss = sum(r.value for r, _ in results) / n
    terms: Dict[str, float] = {}
    grads: Gradients = {}
    for result, g in results:
        for name, value in result.terms.items():
            terms[name] = terms.get(name, 0.0) + value / n
        for name, value in g.items():
            contribution = np.asarray(value, dtype=np.float64) / n
            grads[name] = grads[name] + contribution if name in grads else contribution
    return loss, terms, grads


def _train_loop(
        stage: str,
        params: ModelParams,
        opt_cfg: OptimizerConfig,
        count: int,
        plan: Callable[[List[int]], List[Any]],
        run: Callable[[Any], Tuple[LossResult, Gradients]],
        rng: np.random.Generator,
        out_dir: Path,
        threads: int,
        seed: int,
) -> RunArtifacts:
    """
    Shared optimizer loop

    ``plan`` turns a batch of sample indices into jobs on the calling
    thread (all random draws happen here); ``run`` evaluates one job and may
    fan out across threads.
    """
    optimizer = make_optimizer(params, opt_cfg)
    batches = batch_indices(rng, count, opt_cfg.batch_size)
    rows: List[Dict[str, Any]] = []
    losses: List[float] = []
    term_names: List[str] = []

    with ContextLogger(f"train_{stage}", include_caller=False, steps=opt_cfg.total_steps, samples=count):
        for step in range(opt_cfg.total_steps):
            jobs = plan(next(batches))
            loss, terms, grads = _accumulate(ordered_map(run, jobs, threads))
            if not np.isfinite(loss):
                raise NumericalError(f"non-finite {stage} loss", iteration=step)
            stats = optimizer.step(grads, step)
            losses.append(loss)
            for name in terms:
                if name not in term_names:
                    term_names.append(name)
            rows.append({"step": step, "loss": loss, **stats, **terms})

            logger.debug("Training step", stage=stage, step=step, loss=loss, **stats)
            if (step + 1) % opt_cfg.log_every == 0:
                logger.info("Training progress", stage=stage, step=step + 1, loss=loss, lr=stats["lr"])
            if (step + 1) % opt_cfg.checkpoint_every == 0 and step + 1 < opt_cfg.total_steps:
                save_params(params, out_dir / "checkpoints" / f"step_{step + 1:06d}.mvcl")

    checkpoint = save_params(params, out_dir / CHECKPOINT_FILE)
    loss_curve = write_csv(out_dir / LOSS_CURVE_FILE, list(LOSS_COLUMNS) + term_names, rows)
    first, last = smoothed_ends(losses)
    metrics = write_json(out_dir / METRICS_FILE, {
        "stage": stage,
        "seed": seed,
        "steps": opt_cfg.total_steps,
        "parameters": params.size,
        "initial_loss": losses[0],
        "final_loss": losses[-1],
        "smoothed_initial_loss": first,
        "smoothed_final_loss": last,
        "max_grad_norm_post": max(r["grad_norm_post"] for r in rows),
    })
    return RunArtifacts(checkpoint=checkpoint, metrics=metrics, loss_curve=loss_curve)


@log_execution(log_args=False)
def train_stage1(config: PipelineConfig, dataset: Dataset, out_dir: PathLike) -> RunArtifacts:
    """
    Train the per-view compositing model on composite/GT pairs

    Each step draws a batch from seeded per-epoch shuffles, runs the model
    on {I, G, D}, takes loss_2d against the ground truth and applies one
    clipped AdamW update under the warmup/cosine schedule.
    """
    pairs = dataset.pairs()
    if not pairs:
        raise DomainError("dataset has no training views")
    cfg = config.m2d
    params = init_params(cfg, config.seed)

    def run(pair: CompositeView) -> Tuple[LossResult, Gradients]:
        output = model_forward(m2d_input(pair.view, config.ablation), params, cfg)
        result = loss_2d(output.out, pair.gt, config.loss)
        _, grads = model_backward(result.grad, output.cache)
        return result, grads

    with deterministic_blas():
        return _train_loop(
            "stage1", params, config.stage1, len(pairs),
            plan=lambda batch: [pairs[i] for i in batch],
            run=run,
            rng=make_rng(config.seed, 1),
            out_dir=Path(out_dir),
            threads=config.threads,
            seed=config.seed,
        )


@dataclass(frozen=True)
class Stage2Sample:
    """Frozen inputs of one fitted scene: model grid, target colors, GT views"""
    fitted: FittedScene
    grid_input: np.ndarray
    colors_gt: np.ndarray

    @property
    def n_views(self) -> int:
        return len(self.fitted.record.views)


def load_stage1(config: PipelineConfig, checkpoint: PathLike) -> ModelParams:
    params = load_params(checkpoint)
    check_compatible(params, init_params(config.m2d, 0).values, checkpoint)
    return params


def prepare_stage2_sample(
        config: PipelineConfig, fitted: FittedScene, params_2d: ModelParams
) -> Stage2Sample:
    predictions = predict_views(
        fitted.scene.views, params_2d, config.m2d, config.ablation, config.threads
    )
    features = gaussian_features(predictions, fitted.scene, config.ablation)
    return Stage2Sample(
        fitted=fitted,
        grid_input=m3d_input(features, fitted.scene.color, fitted.mapping),
        colors_gt=fitted.colors_gt,
    )


@log_execution(log_args=False)
def train_stage2(
        config: PipelineConfig,
        dataset: Dataset,
        stage1_checkpoint: PathLike,
        out_dir: PathLike,
        scene_service: Optional[SceneService] = None,
) -> RunArtifacts:
    """
    Train the Gaussian-grid model with the per-view model frozen

    Scenes are fitted on demand (cached by ``scene_service``). Each step
    renders ``n_render_views`` randomly chosen views per scene for the
    render term of loss_3d; only the grid model is updated.
    """
    if not dataset.scenes:
        raise DomainError("dataset has no scenes")
    params_2d = load_stage1(config, stage1_checkpoint)
    service = scene_service or SceneService(config)
    with deterministic_blas():
        samples = [
            prepare_stage2_sample(config, service.fitted(record), params_2d)
            for record in dataset.scenes
        ]
    cfg = config.m3d
    params = init_params(cfg, config.seed)
    rng = make_rng(config.seed, 2)

    def plan(batch: List[int]) -> List[Tuple[Stage2Sample, np.ndarray]]:
        jobs = []
        for index in batch:
            sample = samples[index]
            n = min(config.loss.n_render_views, sample.n_views)
            jobs.append((sample, np.sort(rng.choice(sample.n_views, size=n, replace=False))))
        return jobs

    def run(job: Tuple[Stage2Sample, np.ndarray]) -> Tuple[LossResult, Gradients]:
        sample, chosen = job
        gt_views = sample.fitted.record.gt_views()
        output = model_forward(sample.grid_input, params, cfg)
        result = loss_3d(
            output.out, sample.colors_gt, sample.fitted.scene,
            [gt_views[i] for i in chosen], sample.fitted.mapping, config.loss,
        )
        _, grads = model_backward(result.grad, output.cache)
        return result, grads

    with deterministic_blas():
        return _train_loop(
            "stage2", params, config.stage2, len(samples),
            plan=plan, run=run, rng=rng,
            out_dir=Path(out_dir), threads=config.threads, seed=config.seed,
        )
