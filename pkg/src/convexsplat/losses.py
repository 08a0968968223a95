"""Training loss: weighted L1 + structural dissimilarity + mask sparsity.

SSIM uses an 11x11 Gaussian window (sigma 1.5) with the usual stability
constants, evaluated per channel on the region where the window fits
entirely inside the image, then averaged.  The backward pass is the exact
adjoint of the windowed statistics, so the pixel gradient is analytic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(offsets ** 2) / (2.0 * sigma * sigma))
    return g / g.sum()


_WINDOW = gaussian_window()


def _filter_valid(img: np.ndarray, window: np.ndarray = _WINDOW) -> np.ndarray:
    """Separable windowed mean on the fully-covered interior, (H-s+1, W-s+1)."""
    size = window.shape[0]
    h = img.shape[0] - size + 1
    w = img.shape[1] - size + 1
    rows = np.zeros((h, img.shape[1]))
    for u in range(size):
        rows += window[u] * img[u:u + h, :]
    out = np.zeros((h, w))
    for u in range(size):
        out += window[u] * rows[:, u:u + w]
    return out


def _filter_valid_adjoint(grad, full_shape, window: np.ndarray = _WINDOW) -> np.ndarray:
    """Adjoint of _filter_valid: scatter a valid-grid field back to full size."""
    size = window.shape[0]
    h, w = grad.shape
    rows = np.zeros((h, full_shape[1]))
    for u in range(size):
        rows[:, u:u + w] += window[u] * grad
    out = np.zeros(full_shape)
    for u in range(size):
        out[u:u + h, :] += window[u] * rows
    return out


def ssim_with_grad(img: np.ndarray, target: np.ndarray):
    """Mean SSIM of two (H, W, 3) images and its gradient w.r.t. ``img``."""
    if img.shape != target.shape:
        raise ValueError(f"shape mismatch {img.shape} vs {target.shape}")
    if img.shape[0] < SSIM_WINDOW or img.shape[1] < SSIM_WINDOW:
        raise ValueError(f"image smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    channels = img.shape[2]
    total = 0.0
    d_img = np.zeros_like(img)
    for c in range(channels):
        x = img[..., c]
        y = target[..., c]
        mu_x = _filter_valid(x)
        mu_y = _filter_valid(y)
        vxx = _filter_valid(x * x)
        vyy = _filter_valid(y * y)
        vxy = _filter_valid(x * y)
        sxx = vxx - mu_x * mu_x
        syy = vyy - mu_y * mu_y
        sxy = vxy - mu_x * mu_y

        a1 = 2.0 * mu_x * mu_y + SSIM_C1
        a2 = 2.0 * sxy + SSIM_C2
        b1 = mu_x * mu_x + mu_y * mu_y + SSIM_C1
        b2 = sxx + syy + SSIM_C2
        smap = (a1 * a2) / (b1 * b2)
        total += smap.mean()

        # d(mean smap)/d(windowed fields), then the filter adjoint.
        scale = 1.0 / (channels * smap.size)
        d_mu_x = scale * (
            (2.0 * mu_y * (a2 - a1)) / (b1 * b2)
            - smap * 2.0 * mu_x * (1.0 / b1 - 1.0 / b2)
        )
        d_vxx = scale * (-smap / b2)
        d_vxy = scale * (2.0 * a1 / (b1 * b2))

        shape = x.shape
        d_img[..., c] = (
            _filter_valid_adjoint(d_mu_x, shape)
            + _filter_valid_adjoint(d_vxx, shape) * 2.0 * x
            + _filter_valid_adjoint(d_vxy, shape) * y
        )
    return total / channels, d_img


def ssim(img: np.ndarray, target: np.ndarray) -> float:
    value, _ = ssim_with_grad(np.asarray(img, dtype=np.float64),
                              np.asarray(target, dtype=np.float64))
    return float(value)


def psnr(img: np.ndarray, target: np.ndarray) -> float:
    """Peak signal-to-noise ratio for images in [0, 1], capped at 100 dB."""
    diff = np.asarray(img, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    mse = float(np.mean(diff * diff))
    if mse < 1e-10:
        return 100.0
    return float(10.0 * np.log10(1.0 / mse))


@dataclass
class LossResult:
    total: float
    l1: float
    dssim: float
    mask_term: float
    d_image: np.ndarray     # gradient w.r.t. the rendered image
    d_raw_mask: np.ndarray  # gradient w.r.t. each primitive's raw mask


def image_loss(
    rendered: np.ndarray,
    target: np.ndarray,
    raw_masks: np.ndarray,
    lambda_dssim: float = 0.2,
    beta_mask: float = 0.0005,
) -> LossResult:
    """(1 - lambda) L1 + lambda (1 - SSIM)/2 + beta mean(sigmoid(raw_mask))."""
    diff = rendered - target
    l1 = float(np.abs(diff).mean())
    d_l1 = np.sign(diff) / diff.size

    ssim_value, d_ssim = ssim_with_grad(rendered, target)
    dssim = (1.0 - ssim_value) / 2.0

    raw_masks = np.asarray(raw_masks, dtype=np.float64)
    if raw_masks.size:
        masks = expit(raw_masks)
        mask_term = float(masks.mean())
        d_raw_mask = beta_mask * masks * (1.0 - masks) / raw_masks.size
    else:
        mask_term = 0.0
        d_raw_mask = np.zeros(0)

    total = (1.0 - lambda_dssim) * l1 + lambda_dssim * dssim + beta_mask * mask_term
    d_image = (1.0 - lambda_dssim) * d_l1 - 0.5 * lambda_dssim * d_ssim
    return LossResult(total, l1, dssim, mask_term, d_image, d_raw_mask)
