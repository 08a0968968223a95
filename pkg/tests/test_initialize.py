import numpy as np
import pytest

from convexsplat.harmonics import SH_C0, eval_sh_color
from convexsplat.initialize import (INIT_DELTA, INIT_MASK, INIT_OPACITY,
                                    INIT_SIGMA, RADIUS_FACTOR, camera_extent,
                                    fibonacci_sphere, init_scene,
                                    neighbor_radii)
from convexsplat.model import Camera


def test_fibonacci_points_on_sphere_exact_radius():
    pts = fibonacci_sphere(32, center=(1.0, -2.0, 3.0), radius=0.75)
    dist = np.linalg.norm(pts - np.array([1.0, -2.0, 3.0]), axis=1)
    np.testing.assert_allclose(dist, 0.75, atol=1e-12)


def test_fibonacci_centroid_near_center():
    # golden-angle samples are balanced: centroid well inside the sphere
    for count in (6, 8, 16):
        pts = fibonacci_sphere(count, center=(0.0, 0.0, 0.0), radius=1.0)
        assert np.linalg.norm(pts.mean(axis=0)) <= 0.15


def test_fibonacci_scale_homogeneity():
    a = fibonacci_sphere(10, (0, 0, 0), 1.0)
    b = fibonacci_sphere(10, (0, 0, 0), 2.0)
    np.testing.assert_allclose(b, 2.0 * a, atol=1e-12)


def test_fibonacci_points_are_distinct():
    pts = fibonacci_sphere(16, (0, 0, 0), 1.0)
    pairwise = np.linalg.norm(pts[:, None] - pts[None, :], axis=2)
    pairwise[np.diag_indices(16)] = np.inf
    assert pairwise.min() > 0.1


def test_neighbor_radii_on_regular_grid():
    xs, ys = np.meshgrid(np.arange(4.0), np.arange(4.0))
    grid = np.stack([xs.ravel(), ys.ravel(), np.zeros(16)], axis=1)
    radii = neighbor_radii(grid, neighbors=1)
    np.testing.assert_allclose(radii, 1.0, atol=1e-12)


def test_neighbor_radii_tracks_local_density():
    tight = np.random.default_rng(0).normal(0, 0.01, size=(20, 3))
    loose = np.random.default_rng(1).normal(0, 1.0, size=(20, 3)) + 100.0
    radii = neighbor_radii(np.vstack([tight, loose]))
    assert radii[:20].mean() < radii[20:].mean() / 10


def test_neighbor_radii_single_point():
    np.testing.assert_array_equal(neighbor_radii(np.zeros((1, 3))), [1.0])


def test_init_scene_one_primitive_per_point():
    rng = np.random.default_rng(2)
    pts = rng.normal(size=(9, 3))
    colors = rng.uniform(0, 1, size=(9, 3))
    scene = init_scene(pts, colors, points_per_convex=8)
    assert len(scene.primitives) == 9
    for conv, p in zip(scene.primitives, pts):
        assert conv.num_points == 8
        np.testing.assert_allclose(conv.points.mean(axis=0), p, atol=0.2)
        assert conv.delta == pytest.approx(INIT_DELTA, rel=1e-9)
        assert conv.sigma == pytest.approx(INIT_SIGMA, rel=1e-9)
        assert conv.opacity == pytest.approx(INIT_OPACITY, rel=1e-9)
        assert conv.mask == pytest.approx(INIT_MASK, rel=1e-9)


def test_init_scene_radius_follows_spacing():
    pts = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0],
                    [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]], dtype=np.float64)
    colors = np.full((4, 3), 0.5)
    scene = init_scene(pts, colors)
    expected = RADIUS_FACTOR * neighbor_radii(pts)[0]
    radius = np.linalg.norm(
        scene.primitives[0].points - pts[0], axis=1)
    np.testing.assert_allclose(radius, expected, atol=1e-12)


def test_init_scene_color_seeds_dc_band():
    pts = np.zeros((1, 3))
    color = np.array([[0.9, 0.4, 0.1]])
    scene = init_scene(pts, color)
    sh = scene.primitives[0].sh
    np.testing.assert_allclose(sh[0], (color[0] - 0.5) / SH_C0, atol=1e-12)
    assert np.all(sh[1:] == 0.0)
    rendered = eval_sh_color(sh, np.array([0.0, 0.0, 1.0]), 3)
    np.testing.assert_allclose(rendered, color[0], atol=1e-12)


def test_init_scene_gray_means_zero_dc():
    scene = init_scene(np.zeros((1, 3)), np.full((1, 3), 0.5))
    assert np.all(scene.primitives[0].sh == 0.0)


def test_init_scene_input_validation():
    with pytest.raises(ValueError):
        init_scene(np.zeros((3, 3)), np.zeros((2, 3)))
    with pytest.raises(ValueError):
        init_scene(np.zeros((0, 3)), np.zeros((0, 3)))


def test_camera_extent_of_rig():
    def cam_at(x, y, z):
        return Camera(fx=1.0, fy=1.0, cx=0.0, cy=0.0, width=8, height=8,
                      R=np.eye(3), t=-np.array([x, y, z], dtype=np.float64))
    cams = [cam_at(1, 0, 0), cam_at(-1, 0, 0), cam_at(0, 1, 0), cam_at(0, -1, 0)]
    assert camera_extent(cams) == pytest.approx(1.0, abs=1e-12)
    assert camera_extent([]) == 1.0
    assert camera_extent([cam_at(5, 5, 5)]) == 1.0  # degenerate rig

def test_init_scene_extent_from_cameras():
    def cam_at(x):
        return Camera(fx=1.0, fy=1.0, cx=0.0, cy=0.0, width=8, height=8,
                      R=np.eye(3), t=-np.array([x, 0.0, 0.0]))
    scene = init_scene(np.zeros((1, 3)), np.full((1, 3), 0.5),
                       cameras=[cam_at(2.0), cam_at(-2.0)])
    assert scene.scene_extent == pytest.approx(2.0)
