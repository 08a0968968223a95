import numpy as np
import pytest

from convexsplat.model import (MIN_POINTS, SH_COEFFS, Camera, Scene,
                               SmoothConvex, convex_center, delta_activation,
                               inverse_delta_activation,
                               inverse_mask_activation,
                               inverse_opacity_activation,
                               inverse_sigma_activation, mask_activation,
                               opacity_activation, sigma_activation)
from conftest import make_convex, single_scene


def test_activation_inverses_roundtrip():
    values = np.array([1e-4, 0.037, 0.5, 1.0, 12.0])
    for v in values:
        assert delta_activation(inverse_delta_activation(v)) == pytest.approx(v, rel=1e-12)
        assert sigma_activation(inverse_sigma_activation(v)) == pytest.approx(v, rel=1e-12)
    for v in [1e-4, 0.03, 0.5, 0.97]:
        assert opacity_activation(inverse_opacity_activation(v)) == pytest.approx(v, rel=1e-10)
        assert mask_activation(inverse_mask_activation(v)) == pytest.approx(v, rel=1e-10)


def test_activations_stay_in_range():
    raw = np.linspace(-30, 30, 101)
    assert np.all(delta_activation(raw) > 0)
    assert np.all(sigma_activation(raw) > 0)
    o = opacity_activation(raw)
    assert np.all((o > 0) & (o < 1))


def test_convex_requires_minimum_points():
    conv = make_convex()
    with pytest.raises(ValueError):
        SmoothConvex(points=conv.points[:MIN_POINTS - 1],
                     raw_delta=0.0, raw_sigma=0.0, raw_opacity=0.0,
                     sh=conv.sh, raw_mask=0.0)


def test_convex_requires_full_sh_table():
    conv = make_convex()
    with pytest.raises(ValueError):
        SmoothConvex(points=conv.points, raw_delta=0.0, raw_sigma=0.0,
                     raw_opacity=0.0, sh=conv.sh[:4], raw_mask=0.0)


def test_center_is_point_mean():
    conv = make_convex(center=(1.0, -2.0, 5.0))
    np.testing.assert_allclose(conv.center(), conv.points.mean(axis=0))
    np.testing.assert_allclose(convex_center(conv.points), conv.center())


def test_diameter_is_max_pairwise_distance():
    conv = make_convex()
    expected = max(
        np.linalg.norm(a - b) for a in conv.points for b in conv.points)
    assert conv.diameter() == pytest.approx(expected)


def test_copy_is_deep():
    conv = make_convex()
    dup = conv.copy()
    dup.points[0, 0] += 1.0
    dup.sh[0, 0] += 1.0
    assert conv.points[0, 0] != dup.points[0, 0]
    assert conv.sh[0, 0] != dup.sh[0, 0]

    scene = single_scene()
    scene2 = scene.copy()
    scene2.primitives[0].raw_delta += 1.0
    assert scene.primitives[0].raw_delta != scene2.primitives[0].raw_delta


def test_camera_world_to_cam_and_center():
    rng = np.random.default_rng(0)
    # random rotation via QR, det fixed to +1
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    t = rng.normal(size=3)
    cam = Camera(fx=10, fy=10, cx=8, cy=8, width=16, height=16, R=q, t=t)
    p = rng.normal(size=(5, 3))
    np.testing.assert_allclose(cam.world_to_cam(p), p @ q.T + t, atol=1e-12)
    # camera center maps to the camera-frame origin
    np.testing.assert_allclose(cam.world_to_cam(cam.center()[None]),
                               np.zeros((1, 3)), atol=1e-12)


def test_pixel_grid_uses_pixel_centers(simple_camera):
    xs, ys = simple_camera.pixel_grid()
    assert xs.shape == (32,) and ys.shape == (32,)
    assert xs[0] == 0.5 and ys[0] == 0.5
    assert xs[7] == 7.5 and ys[3] == 3.5


def test_scene_len_and_background():
    scene = single_scene(background=(0.1, 0.2, 0.3))
    assert len(scene) == 1
    np.testing.assert_allclose(scene.background, [0.1, 0.2, 0.3])
