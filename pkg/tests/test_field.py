import numpy as np
import pytest

from convexsplat.field import (ScalingMode, depth_scale, depth_scale_grad,
                               indicator, smooth_sdf, softmax_over_lines)


def test_depth_scale_table():
    d = 3.7
    assert depth_scale(ScalingMode.NONE, d) == 1.0
    assert depth_scale(ScalingMode.SQRT_DEPTH, d) == pytest.approx(np.sqrt(d))
    assert depth_scale(ScalingMode.DEPTH, d) == pytest.approx(d)
    assert depth_scale(ScalingMode.DEPTH_SQUARED, d) == pytest.approx(d * d)


def test_depth_scale_grad_matches_finite_differences():
    d = 2.3
    h = 1e-7
    for mode in ScalingMode:
        fd = (depth_scale(mode, d + h) - depth_scale(mode, d - h)) / (2 * h)
        assert depth_scale_grad(mode, d) == pytest.approx(fd, abs=1e-6)


def test_default_mode_is_depth():
    from convexsplat.trainer import TrainConfig
    assert TrainConfig().scaling_mode is ScalingMode.DEPTH


def test_single_line_sdf():
    # log exp(delta * L) collapses to the product
    assert smooth_sdf(np.array([3.0]), 2.0) == pytest.approx(6.0)


def test_two_equal_lines_add_log_two():
    assert smooth_sdf(np.array([0.0, 0.0]), 1.0) == pytest.approx(np.log(2.0))


def test_sdf_matches_naive_formula():
    rng = np.random.default_rng(0)
    for _ in range(50):
        dists = rng.uniform(-5, 5, size=rng.integers(3, 9))
        delta_s = rng.uniform(0.1, 4.0)
        naive = np.log(np.exp(delta_s * dists).sum())
        assert smooth_sdf(dists, delta_s) == pytest.approx(naive, rel=1e-12)


def test_sdf_is_stable_for_large_arguments():
    phi = smooth_sdf(np.array([500.0, 450.0]), 10.0)
    assert np.isfinite(phi)
    assert phi == pytest.approx(5000.0, abs=1e-6)


def test_sdf_bounds_scaled_max():
    rng = np.random.default_rng(1)
    for _ in range(30):
        dists = rng.uniform(-3, 3, size=6)
        delta_s = rng.uniform(0.5, 20.0)
        phi = smooth_sdf(dists, delta_s)
        hard = delta_s * dists.max()
        assert phi >= hard - 1e-12
        assert phi - hard <= np.log(len(dists)) + 1e-12


def test_sdf_sharp_limit_approaches_max():
    rng = np.random.default_rng(2)
    dists = rng.uniform(-2, 2, size=8)
    phi = smooth_sdf(dists, 200.0)
    assert phi / 200.0 == pytest.approx(dists.max(), abs=np.log(8) / 200.0)


def test_indicator_anchor_half_at_zero():
    assert indicator(np.array([0.0]), 3.0)[0] == 0.5


def test_indicator_limits_and_monotonicity():
    assert indicator(np.array([1e6]), 1.0)[0] == pytest.approx(0.0, abs=1e-12)
    assert indicator(np.array([-1e6]), 1.0)[0] == pytest.approx(1.0, abs=1e-12)
    phi = np.array([0.8])
    assert indicator(phi, 2.0)[0] < indicator(phi, 1.0)[0]


def test_softmax_weights_match_analytic_gradient():
    """d phi / d(L_j) finite-difference check of the softmax identity."""
    rng = np.random.default_rng(3)
    dists = rng.uniform(-2, 2, size=6)
    delta_s = 1.7
    weights = softmax_over_lines(dists, delta_s)
    assert weights.sum() == pytest.approx(1.0, rel=1e-12)
    h = 1e-7
    for j in range(6):
        step = np.zeros(6)
        step[j] = h
        fd = (smooth_sdf(dists + step, delta_s)
              - smooth_sdf(dists - step, delta_s)) / (2 * h)
        assert delta_s * weights[j] == pytest.approx(fd, rel=1e-6)


def test_field_translation_equivariance():
    from convexsplat.projection import graham_scan, hull_lines, line_distances
    rng = np.random.default_rng(4)
    pts = rng.uniform(0, 40, size=(7, 2))
    hull = graham_scan(pts)
    normals, offsets = hull_lines(pts[hull])
    q = rng.uniform(0, 40, size=(5, 2))
    shift = np.array([13.7, -4.2])
    normals2, offsets2 = hull_lines(pts[hull] + shift)
    d1 = line_distances(normals, offsets, q)
    d2 = line_distances(normals2, offsets2, q + shift)
    np.testing.assert_allclose(d1, d2, atol=1e-9)
    np.testing.assert_allclose(smooth_sdf(d1, 1.3), smooth_sdf(d2, 1.3),
                               atol=1e-9)


def test_indicator_unimodal_along_line():
    # phi is convex along any line (affine maps into log-sum-exp), so the
    # indicator rises to a single peak and decays on both sides.
    from convexsplat.projection import graham_scan, hull_lines, line_distances
    rng = np.random.default_rng(5)
    pts = rng.uniform(10, 50, size=(6, 2))
    hull = graham_scan(pts)
    hull_pts = pts[hull]
    normals, offsets = hull_lines(hull_pts)
    center = hull_pts.mean(axis=0)
    direction = np.array([0.31, 0.95])
    direction /= np.linalg.norm(direction)
    radii = np.linspace(-60.0, 60.0, 240)
    q = center + radii[:, None] * direction
    values = indicator(smooth_sdf(line_distances(normals, offsets, q), 0.8), 0.3)
    peak = int(values.argmax())
    assert 0 < peak < len(values) - 1
    assert np.all(np.diff(values[:peak + 1]) >= -1e-12)
    assert np.all(np.diff(values[peak:]) <= 1e-12)
    assert values[0] < 0.01 and values[-1] < 0.01
