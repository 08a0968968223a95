import numpy as np
import pytest

from convexsplat.losses import (SSIM_C1, SSIM_WINDOW, gaussian_window,
                                image_loss, psnr, ssim, ssim_with_grad)
from oracles import reference_ssim


def test_gaussian_window_normalized_and_symmetric():
    w = gaussian_window()
    assert w.shape == (SSIM_WINDOW,)
    assert w.sum() == pytest.approx(1.0, rel=1e-12)
    np.testing.assert_allclose(w, w[::-1])
    assert w.argmax() == SSIM_WINDOW // 2


def test_psnr_known_values():
    a = np.zeros((8, 8, 3))
    b = np.full((8, 8, 3), 0.1)
    assert psnr(a, b) == pytest.approx(20.0, abs=1e-9)
    assert psnr(a, a) == 100.0
    c = np.full((8, 8, 3), 0.5)
    assert psnr(a, c) == pytest.approx(10.0 * np.log10(1 / 0.25), abs=1e-9)


def test_ssim_identity_is_one():
    rng = np.random.default_rng(0)
    img = rng.uniform(0, 1, size=(24, 24, 3))
    assert ssim(img, img) == pytest.approx(1.0, abs=1e-12)


def test_ssim_constant_images_closed_form():
    # constant inputs zero out all variances, leaving the luminance term
    mu1, mu2 = 0.3, 0.7
    a = np.full((16, 16, 3), mu1)
    b = np.full((16, 16, 3), mu2)
    expected = (2 * mu1 * mu2 + SSIM_C1) / (mu1 ** 2 + mu2 ** 2 + SSIM_C1)
    assert ssim(a, b) == pytest.approx(expected, rel=1e-12)


def test_ssim_checkerboard_against_inverse_is_negative():
    idx = np.indices((22, 22)).sum(axis=0) % 2
    a = np.repeat(idx[..., None], 3, axis=2).astype(np.float64)
    assert ssim(a, 1.0 - a) < 0.0


def test_ssim_matches_direct_reference():
    rng = np.random.default_rng(1)
    window = np.outer(gaussian_window(), gaussian_window())
    for _ in range(3):
        a = rng.uniform(0, 1, size=(20, 26, 3))
        b = np.clip(a + rng.normal(0, 0.1, size=a.shape), 0, 1)
        assert ssim(a, b) == pytest.approx(reference_ssim(a, b, window),
                                           abs=1e-10)


def test_ssim_rejects_mismatched_or_tiny_images():
    with pytest.raises(ValueError):
        ssim(np.zeros((16, 16, 3)), np.zeros((16, 18, 3)))
    with pytest.raises(ValueError):
        ssim(np.zeros((8, 8, 3)), np.zeros((8, 8, 3)))


def test_ssim_gradient_matches_finite_differences():
    rng = np.random.default_rng(2)
    img = rng.uniform(0.2, 0.8, size=(14, 14, 3))
    target = np.clip(img + rng.normal(0, 0.05, size=img.shape), 0, 1)
    _, grad = ssim_with_grad(img, target)
    h = 1e-6
    for pix in [(0, 0, 0), (6, 7, 1), (13, 13, 2), (3, 11, 0)]:
        shifted = img.copy()
        shifted[pix] += h
        up = ssim(shifted, target)
        shifted[pix] -= 2 * h
        down = ssim(shifted, target)
        fd = (up - down) / (2 * h)
        assert grad[pix] == pytest.approx(fd, rel=1e-4, abs=1e-10)


def test_image_loss_components_and_total():
    rng = np.random.default_rng(3)
    rendered = rng.uniform(0, 1, size=(16, 16, 3))
    target = rng.uniform(0, 1, size=(16, 16, 3))
    raw_masks = rng.normal(size=5)
    res = image_loss(rendered, target, raw_masks,
                     lambda_dssim=0.2, beta_mask=0.0005)
    l1 = np.abs(rendered - target).mean()
    dssim = (1.0 - ssim(rendered, target)) / 2.0
    from scipy.special import expit
    mask_term = expit(raw_masks).mean()
    assert res.l1 == pytest.approx(l1, rel=1e-12)
    assert res.dssim == pytest.approx(dssim, rel=1e-12)
    assert res.mask_term == pytest.approx(mask_term, rel=1e-12)
    assert res.total == pytest.approx(
        0.8 * l1 + 0.2 * dssim + 0.0005 * mask_term, rel=1e-12)


def test_image_loss_gradient_matches_finite_differences():
    rng = np.random.default_rng(4)
    rendered = rng.uniform(0.1, 0.9, size=(14, 14, 3))
    target = rng.uniform(0, 1, size=(14, 14, 3))
    raw_masks = rng.normal(size=4)
    res = image_loss(rendered, target, raw_masks)
    h = 1e-6
    for pix in [(2, 3, 0), (7, 7, 1), (12, 5, 2)]:
        shifted = rendered.copy()
        shifted[pix] += h
        up = image_loss(shifted, target, raw_masks).total
        shifted[pix] -= 2 * h
        down = image_loss(shifted, target, raw_masks).total
        fd = (up - down) / (2 * h)
        assert res.d_image[pix] == pytest.approx(fd, rel=1e-3, abs=1e-9)
    for j in range(4):
        bumped = raw_masks.copy()
        bumped[j] += h
        up = image_loss(rendered, target, bumped).total
        bumped[j] -= 2 * h
        down = image_loss(rendered, target, bumped).total
        fd = (up - down) / (2 * h)
        assert res.d_raw_mask[j] == pytest.approx(fd, rel=1e-5, abs=1e-12)


def test_image_loss_perfect_match_zero_image_gradient_l1_part():
    img = np.full((16, 16, 3), 0.4)
    res = image_loss(img, img.copy(), np.zeros(0))
    assert res.l1 == 0.0
    assert res.dssim == pytest.approx(0.0, abs=1e-12)
    assert res.mask_term == 0.0
    assert res.d_raw_mask.size == 0
    np.testing.assert_allclose(res.d_image, 0.0, atol=1e-12)


def test_l1_dominates_when_lambda_zero():
    rng = np.random.default_rng(5)
    rendered = rng.uniform(0, 1, size=(16, 16, 3))
    target = rng.uniform(0, 1, size=(16, 16, 3))
    res = image_loss(rendered, target, np.zeros(0),
                     lambda_dssim=0.0, beta_mask=0.0)
    assert res.total == pytest.approx(res.l1, rel=1e-12)
    np.testing.assert_allclose(
        res.d_image, np.sign(rendered - target) / rendered.size, atol=1e-15)
