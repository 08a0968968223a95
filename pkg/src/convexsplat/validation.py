"""Input validation for user-supplied cameras, images and point clouds."""

from __future__ import annotations

import numpy as np


def check_rotation(rot: np.ndarray, tolerance: float = 1e-5) -> np.ndarray:
    """Require a proper rotation matrix: orthonormal with determinant +1."""
    rot = np.asarray(rot, dtype=np.float64)
    if rot.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got {rot.shape}")
    err = np.max(np.abs(rot @ rot.T - np.eye(3)))
    if err > tolerance:
        raise ValueError(f"rotation is not orthonormal (|R R^T - I| = {err:.2e})")
    det = np.linalg.det(rot)
    if abs(det - 1.0) > tolerance:
        raise ValueError(f"rotation determinant is {det:.6f}, expected +1")
    return rot


def check_image(image: np.ndarray, camera=None) -> np.ndarray:
    """Coerce to float64 (H, W, 3) in [0, 1]; checks size against camera."""
    image = np.asarray(image)
    if image.dtype == np.uint8:
        image = image.astype(np.float64) / 255.0
    else:
        image = image.astype(np.float64)
    if image.ndim == 2:
        image = np.repeat(image[:, :, None], 3, axis=2)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"image must be (H, W, 3), got {image.shape}")
    if not np.isfinite(image).all():
        raise ValueError("image contains NaN or infinite values")
    lo, hi = image.min(), image.max()
    if lo < -1e-9 or hi > 1.0 + 1e-9:
        raise ValueError(f"image values outside [0, 1]: range [{lo:.4f}, {hi:.4f}]")
    if camera is not None and image.shape[:2] != (camera.height, camera.width):
        raise ValueError(
            f"image is {image.shape[1]}x{image.shape[0]} but camera expects "
            f"{camera.width}x{camera.height}"
        )
    return np.clip(image, 0.0, 1.0)


def check_views(cameras, images):
    """Validate aligned camera/image lists; returns cleaned (camera, image) pairs."""
    cameras = list(cameras)
    images = list(images)
    if len(cameras) != len(images):
        raise ValueError(f"{len(cameras)} cameras but {len(images)} images")
    if not cameras:
        raise ValueError("need at least one view")
    out = []
    for i, (cam, img) in enumerate(zip(cameras, images)):
        try:
            out.append((cam, check_image(img, cam)))
        except ValueError as exc:
            raise ValueError(f"view {i}: {exc}") from exc
    return out


def check_point_cloud(points, colors=None):
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3:
        raise ValueError(f"points must be (N, 3), got {points.shape}")
    if points.shape[0] == 0:
        raise ValueError("point cloud is empty")
    if not np.isfinite(points).all():
        raise ValueError("points contain NaN or infinite values")
    if colors is None:
        colors = np.full_like(points, 0.5)
    else:
        colors = np.asarray(colors, dtype=np.float64)
        if colors.shape != points.shape:
            raise ValueError(f"colors shape {colors.shape} != points shape {points.shape}")
        colors = np.clip(colors, 0.0, 1.0)
    return points, colors
