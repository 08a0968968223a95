"""Smooth convex field: log-sum-exp over hull lines and sigmoid indicator.

Sharpness (delta) shapes how closely the field hugs the true hull;
steepness (sigma) shapes how fast the indicator falls off across the
boundary.  Both are multiplied by a depth-dependent scale so projected
appearance tracks distance to the camera.
"""

from __future__ import annotations

from enum import Enum

import numpy as np
from scipy.special import expit


class ScalingMode(Enum):
    """Depth multiplier applied to both delta and sigma."""

    NONE = "none"
    SQRT_DEPTH = "sqrt"
    DEPTH = "depth"
    DEPTH_SQUARED = "depth2"


def depth_scale(mode: ScalingMode, depth: float) -> float:
    if mode is ScalingMode.NONE:
        return 1.0
    if mode is ScalingMode.SQRT_DEPTH:
        return float(np.sqrt(depth))
    if mode is ScalingMode.DEPTH:
        return float(depth)
    if mode is ScalingMode.DEPTH_SQUARED:
        return float(depth * depth)
    raise ValueError(f"unknown scaling mode {mode!r}")


def depth_scale_grad(mode: ScalingMode, depth: float) -> float:
    """d scale / d depth for the depth path of the backward pass."""
    if mode is ScalingMode.NONE:
        return 0.0
    if mode is ScalingMode.SQRT_DEPTH:
        return float(0.5 / np.sqrt(depth))
    if mode is ScalingMode.DEPTH:
        return 1.0
    if mode is ScalingMode.DEPTH_SQUARED:
        return float(2.0 * depth)
    raise ValueError(f"unknown scaling mode {mode!r}")


def smooth_sdf(distances: np.ndarray, delta_s: float) -> np.ndarray:
    """log sum exp(delta_s * L_j) over the trailing axis, stabilized.

    Negative deep inside the hull, positive outside, approaches
    delta_s * max_j L_j as delta_s grows.
    """
    z = delta_s * distances
    m = z.max(axis=-1)
    return m + np.log(np.exp(z - m[..., None]).sum(axis=-1))


def softmax_over_lines(distances: np.ndarray, delta_s: float) -> np.ndarray:
    """Weights of each line in the smooth field gradient; rows sum to 1."""
    z = delta_s * distances
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def indicator(phi: np.ndarray, sigma_s: float) -> np.ndarray:
    """Soft inside/outside response in (0, 1); exactly 0.5 where phi = 0."""
    return expit(-sigma_s * phi)


def evaluate_contribution(pc, q: np.ndarray) -> np.ndarray:
    """Indicator of a projected primitive at pixel positions q (..., 2)."""
    distances = q @ pc.normals.T + pc.offsets
    phi = smooth_sdf(distances, pc.delta_s)
    return indicator(phi, pc.sigma_s)
