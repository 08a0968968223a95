"""Scikit-learn style wrapper around scene optimization.

`ConvexSplatter.fit` takes cameras as X and images as y, so a fitted model
can be cloned, inspected with get_params, and scored like any estimator.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .field import ScalingMode
from .initialize import camera_extent, init_scene
from .losses import psnr
from .rasterize import RenderSettings, render
from .trainer import TrainConfig, train
from .validation import check_point_cloud, check_views


class ConvexSplatter(BaseEstimator):
    """Fits a set of smooth convex primitives to posed images.

    Parameters mirror the training configuration; `scaling_mode` is one of
    "none", "sqrt", "depth", "depth2".
    """

    def __init__(
        self,
        iterations: int = 2000,
        points_per_convex: int = 6,
        n_init_points: int = 100,
        scaling_mode: str = "depth",
        lambda_dssim: float = 0.2,
        beta_mask: float = 0.0005,
        lr_position_init: float = 5e-4,
        lr_position_final: float = 5e-6,
        lr_delta: float = 0.005,
        lr_sigma: float = 0.0045,
        lr_opacity: float = 0.05,
        lr_sh: float = 0.0025,
        lr_mask: float = 0.01,
        densify_start: int = 500,
        densify_interval: int = 200,
        densify_stop: int = 9000,
        sigma_loss_threshold: float = 4e-6,
        prune_opacity: float = 0.03,
        prune_size_fraction: float = 0.3,
        split_scale: float = 0.7,
        background: tuple = (0.0, 0.0, 0.0),
        seed: int = 0,
    ):
        self.iterations = iterations
        self.points_per_convex = points_per_convex
        self.n_init_points = n_init_points
        self.scaling_mode = scaling_mode
        self.lambda_dssim = lambda_dssim
        self.beta_mask = beta_mask
        self.lr_position_init = lr_position_init
        self.lr_position_final = lr_position_final
        self.lr_delta = lr_delta
        self.lr_sigma = lr_sigma
        self.lr_opacity = lr_opacity
        self.lr_sh = lr_sh
        self.lr_mask = lr_mask
        self.densify_start = densify_start
        self.densify_interval = densify_interval
        self.densify_stop = densify_stop
        self.sigma_loss_threshold = sigma_loss_threshold
        self.prune_opacity = prune_opacity
        self.prune_size_fraction = prune_size_fraction
        self.split_scale = split_scale
        self.background = background
        self.seed = seed

    def _config(self) -> TrainConfig:
        return TrainConfig(
            total_iterations=self.iterations,
            lambda_dssim=self.lambda_dssim,
            beta_mask=self.beta_mask,
            lr_position_init=self.lr_position_init,
            lr_position_final=self.lr_position_final,
            lr_delta=self.lr_delta,
            lr_sigma=self.lr_sigma,
            lr_opacity=self.lr_opacity,
            lr_sh=self.lr_sh,
            lr_mask=self.lr_mask,
            densify_start=self.densify_start,
            densify_interval=self.densify_interval,
            densify_stop=self.densify_stop,
            sigma_loss_threshold=self.sigma_loss_threshold,
            prune_opacity=self.prune_opacity,
            prune_size_fraction=self.prune_size_fraction,
            split_scale=self.split_scale,
            scaling_mode=ScalingMode(self.scaling_mode),
            seed=self.seed,
        )

    def _initial_points(self, cameras):
        """Random ball around the mean camera position, sized to the rig."""
        rng = np.random.default_rng(self.seed)
        centers = np.stack([cam.center() for cam in cameras])
        middle = centers.mean(axis=0)
        radius = 0.25 * camera_extent(cameras)
        direction = rng.normal(size=(self.n_init_points, 3))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        r = radius * np.cbrt(rng.random(self.n_init_points))
        return middle + direction * r[:, None]

    def fit(self, X, y, points=None, colors=None):
        """Optimize a scene for cameras X and target images y.

        `points`/`colors` seed the primitives from a point cloud; without
        them a random cloud inside the camera rig is used.
        """
        views = check_views(X, y)
        cameras = [cam for cam, _ in views]
        if points is None:
            points = self._initial_points(cameras)
        points, colors = check_point_cloud(points, colors)
        scene = init_scene(points, colors, cameras,
                           points_per_convex=self.points_per_convex,
                           background=self.background)
        result = train(scene, views, self._config())
        self.scene_ = result.scene
        self.history_ = result.history
        self.final_psnr_ = result.final_psnr
        self.n_iter_ = self.iterations
        return self

    def predict(self, X):
        """Render each camera in X; returns a list of (H, W, 3) images."""
        check_is_fitted(self, "scene_")
        mode = ScalingMode(self.scaling_mode)
        settings = RenderSettings()
        return [render(self.scene_, cam, mode, settings).image for cam in X]

    def score(self, X, y):
        """Mean reconstruction PSNR in dB over the given views."""
        rendered = self.predict(X)
        views = check_views(X, y)
        return float(np.mean([
            psnr(img, target) for img, (_, target) in zip(rendered, views)
        ]))
