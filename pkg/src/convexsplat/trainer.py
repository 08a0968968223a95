"""Optimization loop: render, loss, analytic backward, Adam, densify/prune."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, fields

import numpy as np

from .backward import backward
from .density import densify_and_prune
from .field import ScalingMode
from .losses import image_loss, psnr
from .model import Scene
from .optim import Adam, position_lr
from .rasterize import RenderSettings, render


@dataclass
class TrainConfig:
    total_iterations: int = 30000
    lambda_dssim: float = 0.2
    beta_mask: float = 0.0005
    lr_position_init: float = 5e-4
    lr_position_final: float = 5e-6
    lr_delta: float = 0.005
    lr_sigma: float = 0.0045
    lr_opacity: float = 0.05
    lr_sh: float = 0.0025
    lr_mask: float = 0.01
    densify_start: int = 500
    densify_interval: int = 200
    densify_stop: int = 9000
    sigma_loss_threshold: float = 4e-6
    prune_opacity: float = 0.03
    prune_size_fraction: float = 0.3
    split_scale: float = 0.7
    split_sigma_boost: float = 1.25
    split_opacity_factor: float = 0.8
    scaling_mode: ScalingMode = ScalingMode.DEPTH
    seed: int = 0
    eval_interval: int = 0  # 0: evaluate PSNR only at the end

    @classmethod
    def from_mapping(cls, mapping: dict) -> "TrainConfig":
        """Build from string key/value pairs (config files, CLI overrides)."""
        known = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, value in mapping.items():
            if key not in known:
                raise KeyError(f"unknown config key {key!r}")
            current = getattr(cls, key, None)
            if key == "scaling_mode":
                kwargs[key] = value if isinstance(value, ScalingMode) \
                    else ScalingMode(str(value))
            elif isinstance(current, bool):
                kwargs[key] = str(value).lower() in ("1", "true", "yes")
            elif isinstance(current, int):
                kwargs[key] = int(value)
            else:
                kwargs[key] = float(value)
        return cls(**kwargs)


class TrainingDiverged(RuntimeError):
    """Raised when the loss stops being finite; carries diagnostic state."""

    def __init__(self, iteration: int, loss_value: float, scene: Scene):
        super().__init__(
            f"non-finite loss {loss_value} at iteration {iteration} "
            f"({len(scene.primitives)} primitives)"
        )
        self.iteration = iteration
        self.scene = scene


@dataclass
class TrainResult:
    scene: Scene
    history: list
    final_psnr: float


PARAM_GROUPS = ("points", "delta", "sigma", "opacity", "sh", "mask")


def gather_params(scene: Scene) -> dict:
    return {
        "points": np.stack([c.points for c in scene.primitives]),
        "delta": np.array([c.raw_delta for c in scene.primitives]),
        "sigma": np.array([c.raw_sigma for c in scene.primitives]),
        "opacity": np.array([c.raw_opacity for c in scene.primitives]),
        "sh": np.stack([c.sh for c in scene.primitives]),
        "mask": np.array([c.raw_mask for c in scene.primitives]),
    }


def scatter_params(scene: Scene, params: dict):
    for i, conv in enumerate(scene.primitives):
        conv.points = params["points"][i]
        conv.raw_delta = float(params["delta"][i])
        conv.raw_sigma = float(params["sigma"][i])
        conv.raw_opacity = float(params["opacity"][i])
        conv.sh = params["sh"][i]
        conv.raw_mask = float(params["mask"][i])


def _grad_dict(grads) -> dict:
    return {
        "points": grads.d_points,
        "delta": grads.d_raw_delta,
        "sigma": grads.d_raw_sigma,
        "opacity": grads.d_raw_opacity,
        "sh": grads.d_sh,
        "mask": grads.d_raw_mask,
    }


def evaluate_psnr(scene: Scene, views, mode: ScalingMode,
                  settings: RenderSettings = RenderSettings()) -> float:
    values = [psnr(render(scene, cam, mode, settings).image, target)
              for cam, target in views]
    return float(np.mean(values)) if values else 0.0


def train(
    scene: Scene,
    views: list,
    config: TrainConfig = TrainConfig(),
    settings: RenderSettings = RenderSettings(),
    metrics_path=None,
    callbacks=(),
) -> TrainResult:
    """Fit the scene to (camera, target image) pairs.

    Views are visited in reshuffled epochs from a seeded generator, so a
    fixed seed reproduces the run exactly.  Metrics rows are appended to
    ``metrics_path`` as CSV when given.
    """
    if not views:
        raise ValueError("training needs at least one view")
    rng = np.random.default_rng(config.seed)
    mode = config.scaling_mode

    adam = Adam({name: arr.shape for name, arr in gather_params(scene).items()})
    sigma_sum = np.zeros(len(scene.primitives))
    sigma_views = np.zeros(len(scene.primitives))

    history = []
    writer = None
    csv_file = None
    if metrics_path is not None:
        csv_file = open(metrics_path, "w", newline="")
        writer = csv.writer(csv_file)
        writer.writerow(["iteration", "loss", "l1", "dssim", "lm",
                         "primitive_count", "psnr"])

    order = []
    cursor = 0
    try:
        for iteration in range(1, config.total_iterations + 1):
            if cursor >= len(order):
                order = rng.permutation(len(views))
                cursor = 0
            cam, target = views[order[cursor]]
            cursor += 1

            out = render(scene, cam, mode, settings)
            raw_masks = np.array([c.raw_mask for c in scene.primitives])
            loss = image_loss(out.image, target, raw_masks,
                              config.lambda_dssim, config.beta_mask)
            if not np.isfinite(loss.total):
                raise TrainingDiverged(iteration, loss.total, scene)

            grads = backward(scene, cam, loss.d_image, mode, settings)
            grads.d_raw_mask += loss.d_raw_mask

            params = gather_params(scene)
            lrs = {
                "points": position_lr(iteration, config.lr_position_init,
                                      config.lr_position_final,
                                      config.total_iterations),
                "delta": config.lr_delta,
                "sigma": config.lr_sigma,
                "opacity": config.lr_opacity,
                "sh": config.lr_sh,
                "mask": config.lr_mask,
            }
            adam.step(params, _grad_dict(grads), lrs)
            scatter_params(scene, params)

            sigma_sum += np.abs(grads.d_raw_sigma) * grads.visible
            sigma_views += grads.visible

            if iteration >= config.densify_start \
                    and iteration % config.densify_interval == 0:
                signal = sigma_sum / np.maximum(sigma_views, 1.0)
                index_map, _ = densify_and_prune(scene, signal, config, iteration)
                if len(scene.primitives) == 0:
                    raise TrainingDiverged(iteration, float("nan"), scene)
                adam.remap(index_map)
                sigma_sum = np.zeros(len(scene.primitives))
                sigma_views = np.zeros(len(scene.primitives))

            psnr_value = None
            if config.eval_interval and iteration % config.eval_interval == 0:
                psnr_value = evaluate_psnr(scene, views, mode, settings)
            row = {
                "iteration": iteration,
                "loss": loss.total,
                "l1": loss.l1,
                "dssim": loss.dssim,
                "lm": loss.mask_term,
                "primitive_count": len(scene.primitives),
                "psnr": psnr_value,
            }
            history.append(row)
            if writer is not None:
                writer.writerow([
                    iteration, f"{loss.total:.8f}", f"{loss.l1:.8f}",
                    f"{loss.dssim:.8f}", f"{loss.mask_term:.8f}",
                    len(scene.primitives),
                    "" if psnr_value is None else f"{psnr_value:.4f}",
                ])
            for callback in callbacks:
                callback(iteration, scene, row)
    finally:
        if csv_file is not None:
            csv_file.close()

    final_psnr = evaluate_psnr(scene, views, mode, settings)
    return TrainResult(scene=scene, history=history, final_psnr=final_psnr)
