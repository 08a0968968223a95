"""Core scene types: smooth convex primitives, cameras, scenes.

A smooth convex primitive is a set of K 3D points whose convex hull is
softened by a log-sum-exp signed distance field.  All shape parameters are
stored in raw (unconstrained) form; positive quantities go through exp,
bounded ones through a sigmoid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import numpy as np
from scipy.special import expit, logit

# Degree-3 spherical harmonics: (3+1)^2 coefficients per color channel.
SH_COEFFS = 16

MIN_POINTS = 4


def delta_activation(raw):
    """Sharpness of the smooth hull field, strictly positive."""
    return np.exp(raw)


def sigma_activation(raw):
    """Indicator steepness, strictly positive."""
    return np.exp(raw)


def opacity_activation(raw):
    """Opacity in (0, 1)."""
    return expit(raw)


def mask_activation(raw):
    """Pruning mask in (0, 1)."""
    return expit(raw)


def inverse_delta_activation(value):
    return np.log(value)


def inverse_sigma_activation(value):
    return np.log(value)


def inverse_opacity_activation(value):
    return logit(value)


def inverse_mask_activation(value):
    return logit(value)


@dataclass
class SmoothConvex:
    """One primitive: K points plus appearance parameters in raw form.

    points:      (K, 3) float64, K >= 4
    raw_delta:   scalar, delta = exp(raw_delta)
    raw_sigma:   scalar, sigma = exp(raw_sigma)
    raw_opacity: scalar, opacity = sigmoid(raw_opacity)
    sh:          (16, 3) spherical-harmonic color coefficients
    raw_mask:    scalar, mask = sigmoid(raw_mask)
    """

    points: np.ndarray
    raw_delta: float
    raw_sigma: float
    raw_opacity: float
    sh: np.ndarray
    raw_mask: float

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[1] != 3:
            raise ValueError(f"points must be (K, 3), got {self.points.shape}")
        if self.points.shape[0] < MIN_POINTS:
            raise ValueError(
                f"a smooth convex needs at least {MIN_POINTS} points, "
                f"got {self.points.shape[0]}"
            )
        self.sh = np.asarray(self.sh, dtype=np.float64)
        if self.sh.shape != (SH_COEFFS, 3):
            raise ValueError(f"sh must be ({SH_COEFFS}, 3), got {self.sh.shape}")

    @property
    def num_points(self) -> int:
        return self.points.shape[0]

    @property
    def delta(self) -> float:
        return float(delta_activation(self.raw_delta))

    @property
    def sigma(self) -> float:
        return float(sigma_activation(self.raw_sigma))

    @property
    def opacity(self) -> float:
        return float(opacity_activation(self.raw_opacity))

    @property
    def mask(self) -> float:
        return float(mask_activation(self.raw_mask))

    def center(self) -> np.ndarray:
        """Arithmetic mean of the K points."""
        return self.points.mean(axis=0)

    def diameter(self) -> float:
        """Largest pairwise distance among the K points."""
        diff = self.points[:, None, :] - self.points[None, :, :]
        return float(np.sqrt((diff * diff).sum(axis=2)).max())

    def copy(self) -> "SmoothConvex":
        return SmoothConvex(
            points=self.points.copy(),
            raw_delta=float(self.raw_delta),
            raw_sigma=float(self.raw_sigma),
            raw_opacity=float(self.raw_opacity),
            sh=self.sh.copy(),
            raw_mask=float(self.raw_mask),
        )


def convex_center(points: np.ndarray) -> np.ndarray:
    """Center of a primitive = mean of its defining points."""
    points = np.asarray(points, dtype=np.float64)
    return points.mean(axis=0)


@dataclass
class Camera:
    """Pinhole camera with world-to-camera extrinsics x_cam = R @ p + t.

    Pixel coordinates follow (fx * x/z + cx, fy * y/z + cy); pixel (i, j)
    covers the unit square centered at (j + 0.5, i + 0.5).  When ``ortho``
    is set the projection drops the perspective divide (used by the 2D
    fitting harness) and the scaling depth is fixed to 1.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    R: np.ndarray
    t: np.ndarray
    z_near: float = 0.01
    ortho: bool = False
    image_name: str = ""

    def __post_init__(self):
        self.R = np.asarray(self.R, dtype=np.float64).reshape(3, 3)
        self.t = np.asarray(self.t, dtype=np.float64).reshape(3)

    def world_to_cam(self, points: np.ndarray) -> np.ndarray:
        return points @ self.R.T + self.t

    def center(self) -> np.ndarray:
        """Camera position in world coordinates."""
        return -self.R.T @ self.t

    def pixel_grid(self):
        """Pixel-center coordinates: xs (W,), ys (H,)."""
        xs = np.arange(self.width, dtype=np.float64) + 0.5
        ys = np.arange(self.height, dtype=np.float64) + 0.5
        return xs, ys


@dataclass
class Scene:
    """A renderable collection of smooth convex primitives."""

    primitives: list
    background: np.ndarray = field(default_factory=lambda: np.zeros(3))
    scene_extent: float = 1.0

    def __post_init__(self):
        self.background = np.asarray(self.background, dtype=np.float64).reshape(3)

    def __len__(self) -> int:
        return len(self.primitives)

    def copy(self) -> "Scene":
        return Scene(
            primitives=[p.copy() for p in self.primitives],
            background=self.background.copy(),
            scene_extent=float(self.scene_extent),
        )
