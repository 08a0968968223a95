"""Synthetic scenes and procedural targets for tests and demos.

Everything here is seeded and deterministic so fixtures can be regenerated
bit-identically from the command line.
"""

from __future__ import annotations

import numpy as np

from .harmonics import SH_C0
from .initialize import fibonacci_sphere
from .model import (SH_COEFFS, Camera, Scene, SmoothConvex,
                    inverse_mask_activation, inverse_opacity_activation)
from .rasterize import render, RenderSettings
from .field import ScalingMode


def look_at(eye, target, up=(0.0, 1.0, 0.0)) -> tuple:
    """World-to-camera rotation and translation for a camera at `eye`
    looking toward `target` (camera z axis points at the target)."""
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    forward = forward / np.linalg.norm(forward)
    right = np.cross(np.asarray(up, dtype=np.float64), forward)
    norm = np.linalg.norm(right)
    if norm < 1e-9:
        right = np.cross(np.array([1.0, 0.0, 0.0]), forward)
        norm = np.linalg.norm(right)
    right = right / norm
    down = np.cross(forward, right)
    rot = np.stack([right, down, forward])
    return rot, -rot @ eye


def ring_cameras(count: int, radius: float = 4.0, size: int = 96,
                 fov_degrees: float = 50.0, elevations=(0.35, -0.2),
                 target=(0.0, 0.0, 0.0)) -> list:
    """Cameras on a circle around the origin, alternating elevation so the
    rig is not coplanar."""
    focal = size / (2.0 * np.tan(np.radians(fov_degrees) / 2.0))
    cams = []
    for i in range(count):
        angle = 2.0 * np.pi * i / count
        elev = elevations[i % len(elevations)]
        eye = radius * np.array([
            np.cos(angle) * np.cos(elev),
            np.sin(elev),
            np.sin(angle) * np.cos(elev),
        ])
        rot, t = look_at(eye, target)
        cams.append(Camera(
            fx=focal, fy=focal, cx=size / 2.0, cy=size / 2.0,
            width=size, height=size, R=rot, t=t,
            image_name=f"view_{i:03d}.png",
        ))
    return cams


def make_scene(num_primitives: int = 5, points_per_convex: int = 6,
               seed: int = 0, spread: float = 1.0,
               background=(0.0, 0.0, 0.0)) -> Scene:
    """Random well-conditioned scene near the origin.

    Sharpness and density are drawn so primitives are crisp but not hard-edged
    when viewed from the standard ring rig at radius ~4.
    """
    rng = np.random.default_rng(seed)
    primitives = []
    for _ in range(num_primitives):
        center = rng.uniform(-spread, spread, size=3) * np.array([1.0, 0.6, 1.0])
        radius = rng.uniform(0.25, 0.45)
        pts = fibonacci_sphere(points_per_convex, center, radius)
        pts += rng.normal(0.0, 0.08 * radius, size=pts.shape)
        sh = np.zeros((SH_COEFFS, 3))
        sh[0] = rng.uniform(-1.4, 1.4, size=3)
        sh[1:4] = rng.normal(0.0, 0.05, size=(3, 3))
        primitives.append(SmoothConvex(
            points=pts,
            raw_delta=np.log(rng.uniform(0.8, 1.5)),
            raw_sigma=np.log(rng.uniform(0.05, 0.12)),
            raw_opacity=inverse_opacity_activation(rng.uniform(0.75, 0.95)),
            sh=sh,
            raw_mask=inverse_mask_activation(0.995),
        ))
    return Scene(primitives=primitives,
                 background=np.asarray(background, dtype=np.float64),
                 scene_extent=2.0 * spread)


def render_dataset(scene: Scene, cameras,
                   mode: ScalingMode = ScalingMode.DEPTH,
                   settings: RenderSettings = RenderSettings()) -> list:
    return [render(scene, cam, mode, settings).image for cam in cameras]


def perturb_scene(scene: Scene, seed: int = 0,
                  position_fraction: float = 0.05) -> Scene:
    """Shift each primitive by `position_fraction` of the scene extent, jitter
    the shape slightly, and rerandomize appearance.  Used to start recovery
    runs from a wrong-but-nearby configuration."""
    rng = np.random.default_rng(seed)
    out = scene.copy()
    for conv in out.primitives:
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        conv.points += position_fraction * scene.scene_extent * direction
        conv.points += rng.normal(
            0.0, 0.01 * scene.scene_extent, size=conv.points.shape)
        conv.sh[:] = 0.0
        conv.sh[0] = rng.uniform(-1.0, 1.0, size=3)
        conv.raw_opacity = inverse_opacity_activation(rng.uniform(0.4, 0.9))
        conv.raw_delta += np.log(rng.uniform(0.8, 1.25))
        conv.raw_sigma += np.log(rng.uniform(0.8, 1.25))
        conv.raw_mask = inverse_mask_activation(0.995)
    return out


# --------------------------------------------------------------------------
# Procedural 2D targets (supersampled so edges are one soft pixel wide)

_SUPERSAMPLE = 4


def _grid(size: int):
    step = 1.0 / _SUPERSAMPLE
    coords = (np.arange(size * _SUPERSAMPLE) + 0.5) * step
    return np.meshgrid(coords, coords, indexing="xy")


def _downsample(hi: np.ndarray, size: int) -> np.ndarray:
    return hi.reshape(size, _SUPERSAMPLE, size, _SUPERSAMPLE).mean(axis=(1, 3))


def target_image(kind: str, size: int = 64, color=(0.9, 0.85, 0.2),
                 background=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Antialiased test patterns: rectangle, circle, gaussian, anisotropic."""
    xs, ys = _grid(size)
    cx = cy = size / 2.0
    if kind == "rectangle":
        half_w, half_h = 0.28 * size, 0.18 * size
        field = ((np.abs(xs - cx) <= half_w) & (np.abs(ys - cy) <= half_h))
        field = field.astype(np.float64)
    elif kind == "circle":
        r = np.hypot(xs - cx, ys - cy)
        field = (r <= 0.3 * size).astype(np.float64)
    elif kind == "gaussian":
        s = 0.14 * size
        field = np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / (2.0 * s * s))
    elif kind == "anisotropic":
        theta = np.radians(30.0)
        u = (xs - cx) * np.cos(theta) + (ys - cy) * np.sin(theta)
        v = -(xs - cx) * np.sin(theta) + (ys - cy) * np.cos(theta)
        su, sv = 0.22 * size, 0.08 * size
        field = np.exp(-(u ** 2) / (2.0 * su * su) - (v ** 2) / (2.0 * sv * sv))
    else:
        raise ValueError(f"unknown target kind '{kind}'")
    field = _downsample(field, size)
    color = np.asarray(color, dtype=np.float64)
    background = np.asarray(background, dtype=np.float64)
    return field[:, :, None] * color + (1.0 - field[:, :, None]) * background


TARGET_KINDS = ("rectangle", "circle", "gaussian", "anisotropic")


def seed_scene_from_target(scene: Scene, target: np.ndarray):
    """Data-driven start for flat fits, in place.

    Every primitive's DC color is seeded from the bright target pixels
    near it.  A single primitive is additionally moment-matched: its
    points are placed on the ellipse given by the luminance-weighted mean
    and covariance of the target, which puts the initial hull roughly on
    top of the shape to recover.
    """
    size = target.shape[0]
    lum = target.max(axis=2)
    ys, xs = np.mgrid[0:size, 0:size]
    px, py = xs + 0.5, ys + 0.5

    if len(scene.primitives) == 1 and lum.sum() > 0:
        conv = scene.primitives[0]
        w = lum / lum.sum()
        mean = np.array([(w * px).sum(), (w * py).sum()])
        dx, dy = px - mean[0], py - mean[1]
        cov = np.array([[(w * dx * dx).sum(), (w * dx * dy).sum()],
                        [(w * dx * dy).sum(), (w * dy * dy).sum()]])
        evals, evecs = np.linalg.eigh(cov)
        axes = 2.0 * np.sqrt(np.maximum(evals, 1e-6))
        k = conv.num_points
        ang = 2.0 * np.pi * np.arange(k) / k
        ring = np.stack([axes[0] * np.cos(ang), axes[1] * np.sin(ang)],
                        axis=1) @ evecs.T
        conv.points[:, 0] = mean[0] + ring[:, 0]
        conv.points[:, 1] = mean[1] + ring[:, 1]

    for conv in scene.primitives:
        cx, cy = conv.center()[:2]
        radius = max(conv.diameter() / 2.0, 1.0)
        near = (px - cx) ** 2 + (py - cy) ** 2 <= radius ** 2
        patch = target[near & (lum > 0.05)]
        color = patch.mean(axis=0) if patch.size else np.full(3, 0.5)
        conv.sh[0] = (color - 0.5) / SH_C0


def flat_camera(size: int) -> Camera:
    """Orthographic unit-scale camera: world xy are pixel coordinates."""
    return Camera(fx=1.0, fy=1.0, cx=0.0, cy=0.0, width=size, height=size,
                  R=np.eye(3), t=np.zeros(3), ortho=True, image_name="flat.png")


def flat_scene(size: int, num_primitives: int, points_per_convex: int = 6,
               seed: int = 0, background=(0.0, 0.0, 0.0)) -> Scene:
    """Initial primitives for 2D fitting: circles of points in the image
    plane, slightly staggered in depth so the blend order is deterministic."""
    rng = np.random.default_rng(seed)
    cols = int(np.ceil(np.sqrt(num_primitives)))
    rows = int(np.ceil(num_primitives / cols))
    primitives = []
    for i in range(num_primitives):
        gx = (i % cols + 0.5) / cols
        gy = (i // cols + 0.5) / rows
        center = np.array([
            size * (0.2 + 0.6 * gx) + rng.normal(0.0, 0.02 * size),
            size * (0.2 + 0.6 * gy) + rng.normal(0.0, 0.02 * size),
        ])
        radius = 0.22 * size / max(cols, rows)
        angles = 2.0 * np.pi * (np.arange(points_per_convex) + 0.3 * rng.random()) \
            / points_per_convex
        pts = np.stack([
            center[0] + radius * np.cos(angles),
            center[1] + radius * np.sin(angles),
            np.full(points_per_convex, 1.0 + 0.001 * i),
        ], axis=1)
        sh = np.zeros((SH_COEFFS, 3))
        primitives.append(SmoothConvex(
            points=pts,
            raw_delta=np.log(1.0),
            # falloff width ~4.4/(sigma*delta) pixels: keep the halo at
            # blob scale instead of bleeding across the whole image
            raw_sigma=np.log(0.15),
            raw_opacity=inverse_opacity_activation(0.9),
            sh=sh,
            raw_mask=inverse_mask_activation(0.995),
        ))
    return Scene(primitives=primitives,
                 background=np.asarray(background, dtype=np.float64),
                 scene_extent=float(size))
