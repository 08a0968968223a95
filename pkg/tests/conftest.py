import numpy as np
import pytest

from convexsplat.model import (SH_COEFFS, Camera, Scene, SmoothConvex,
                               inverse_mask_activation,
                               inverse_opacity_activation)


@pytest.fixture
def simple_camera():
    return Camera(fx=50.0, fy=50.0, cx=16.0, cy=16.0, width=32, height=32,
                  R=np.eye(3), t=np.zeros(3))


def make_convex(center=(0.0, 0.0, 3.0), radius=0.5, delta=1.0, sigma=0.1,
                opacity=0.9, color=(1.0, 0.2, 0.2), mask=0.99, num_points=6,
                seed=None):
    """Hand-rolled hexagonal prism-ish point set; deterministic unless seeded."""
    center = np.asarray(center, dtype=np.float64)
    angles = 2.0 * np.pi * np.arange(num_points) / num_points
    points = center + radius * np.stack(
        [np.cos(angles), np.sin(angles), 0.05 * np.sin(3 * angles)], axis=1)
    if seed is not None:
        rng = np.random.default_rng(seed)
        points = points + rng.normal(0.0, 0.1 * radius, size=points.shape)
    sh = np.zeros((SH_COEFFS, 3))
    sh[0] = (np.asarray(color) - 0.5) / 0.28209479177387814
    return SmoothConvex(
        points=points,
        raw_delta=np.log(delta),
        raw_sigma=np.log(sigma),
        raw_opacity=inverse_opacity_activation(opacity),
        sh=sh,
        raw_mask=inverse_mask_activation(mask),
    )


def single_scene(**kwargs):
    background = kwargs.pop("background", (0.0, 0.0, 0.0))
    return Scene(primitives=[make_convex(**kwargs)],
                 background=np.asarray(background, dtype=np.float64),
                 scene_extent=4.0)
