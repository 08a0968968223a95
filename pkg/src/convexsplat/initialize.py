"""Scene initialization from a sparse point cloud.

Every input point becomes one smooth convex whose K points sample a
Fibonacci sphere sized by the local point density; colors seed the SH DC
term, everything else starts at fixed raw values.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .harmonics import SH_C0
from .model import (
    SH_COEFFS,
    Scene,
    SmoothConvex,
    inverse_delta_activation,
    inverse_mask_activation,
    inverse_opacity_activation,
    inverse_sigma_activation,
)

INIT_DELTA = 0.1
INIT_SIGMA = 0.00095
INIT_OPACITY = 0.1
INIT_MASK = 0.99
RADIUS_FACTOR = 1.2
RADIUS_NEIGHBORS = 3
MIN_RADIUS = 1e-9


def fibonacci_sphere(count: int, center, radius: float) -> np.ndarray:
    """count points on a sphere: golden-angle longitude, uniform-z latitude."""
    center = np.asarray(center, dtype=np.float64)
    golden = np.pi * (3.0 - np.sqrt(5.0))
    i = np.arange(count, dtype=np.float64)
    z = 1.0 - 2.0 * (i + 0.5) / count
    ring = np.sqrt(np.maximum(1.0 - z * z, 0.0))
    theta = golden * i
    pts = np.stack([ring * np.cos(theta), ring * np.sin(theta), z], axis=1)
    return center + radius * pts


def neighbor_radii(points: np.ndarray, neighbors: int = RADIUS_NEIGHBORS) -> np.ndarray:
    """Mean distance to the nearest ``neighbors`` other points, per point."""
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    k = min(neighbors, n - 1)
    if k <= 0:
        return np.ones(n)
    tree = cKDTree(points)
    dist, _ = tree.query(points, k=k + 1)  # column 0 is the point itself
    return dist[:, 1:].mean(axis=1)


def camera_extent(cameras) -> float:
    """Radius of the camera rig: max distance from the mean camera center."""
    if not cameras:
        return 1.0
    centers = np.stack([cam.center() for cam in cameras])
    middle = centers.mean(axis=0)
    extent = float(np.linalg.norm(centers - middle, axis=1).max())
    return extent if extent > 0 else 1.0


def init_scene(
    points: np.ndarray,
    colors: np.ndarray,
    cameras=(),
    points_per_convex: int = 6,
    background=(0.0, 0.0, 0.0),
) -> Scene:
    """Build the starting scene: one smooth convex per input point."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    colors = np.asarray(colors, dtype=np.float64).reshape(-1, 3)
    if points.shape[0] != colors.shape[0]:
        raise ValueError(
            f"{points.shape[0]} points but {colors.shape[0]} colors"
        )
    if points.shape[0] == 0:
        raise ValueError("cannot initialize from an empty point cloud")

    radii = np.maximum(RADIUS_FACTOR * neighbor_radii(points), MIN_RADIUS)
    raw_delta = float(inverse_delta_activation(INIT_DELTA))
    raw_sigma = float(inverse_sigma_activation(INIT_SIGMA))
    raw_opacity = float(inverse_opacity_activation(INIT_OPACITY))
    raw_mask = float(inverse_mask_activation(INIT_MASK))

    primitives = []
    for p, color, radius in zip(points, colors, radii):
        sh = np.zeros((SH_COEFFS, 3))
        sh[0] = (color - 0.5) / SH_C0
        primitives.append(SmoothConvex(
            points=fibonacci_sphere(points_per_convex, p, radius),
            raw_delta=raw_delta,
            raw_sigma=raw_sigma,
            raw_opacity=raw_opacity,
            sh=sh,
            raw_mask=raw_mask,
        ))
    return Scene(
        primitives=primitives,
        background=np.asarray(background, dtype=np.float64),
        scene_extent=camera_extent(list(cameras)),
    )
