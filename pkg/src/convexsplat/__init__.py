"""Differentiable splatting of smooth convex primitives.

Scenes are sets of convex point hulls with a log-sum-exp smoothing field;
rendering is tile-based alpha blending with analytic gradients for every
primitive parameter, which makes the whole pipeline optimizable from posed
images alone.
"""

from .backward import backward, fd_check
from .estimator import ConvexSplatter
from .field import ScalingMode, depth_scale
from .initialize import init_scene
from .losses import image_loss, psnr, ssim
from .model import Camera, Scene, SmoothConvex
from .rasterize import RenderSettings, render, render_reference
from .sceneio import (load_bundle, load_cameras, load_checkpoint, load_png,
                      read_ply, save_cameras, save_checkpoint, save_png,
                      write_ply)
from .trainer import TrainConfig, TrainResult, train

__version__ = "0.1.0"

__all__ = [
    "Camera",
    "ConvexSplatter",
    "RenderSettings",
    "ScalingMode",
    "Scene",
    "SmoothConvex",
    "TrainConfig",
    "TrainResult",
    "backward",
    "depth_scale",
    "fd_check",
    "image_loss",
    "init_scene",
    "load_bundle",
    "load_cameras",
    "load_checkpoint",
    "load_png",
    "psnr",
    "read_ply",
    "render",
    "render_reference",
    "save_cameras",
    "save_checkpoint",
    "save_png",
    "ssim",
    "train",
    "write_ply",
    "__version__",
]
