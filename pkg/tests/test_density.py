import numpy as np
import pytest

from convexsplat.density import densify_and_prune, split_convex
from convexsplat.model import Scene, inverse_opacity_activation
from convexsplat.rasterize import MASK_GATE
from convexsplat.trainer import TrainConfig

from conftest import make_convex


def test_split_produces_one_child_per_point():
    parent = make_convex(seed=0)
    children = split_convex(parent, scale=0.7, sigma_boost=1.25,
                            opacity_factor=0.8)
    assert len(children) == parent.num_points


def test_child_centroids_land_on_parent_points():
    parent = make_convex(seed=1)
    children = split_convex(parent, scale=0.7, sigma_boost=1.25,
                            opacity_factor=0.8)
    for i, child in enumerate(children):
        np.testing.assert_allclose(child.points.mean(axis=0),
                                   parent.points[i], atol=1e-12)


def test_child_shape_is_scaled_parent():
    parent = make_convex(seed=2)
    children = split_convex(parent, scale=0.7, sigma_boost=1.25,
                            opacity_factor=0.8)
    for child in children:
        assert child.diameter() == pytest.approx(0.7 * parent.diameter(),
                                                 rel=1e-12)
    # unit scale gives pure translations of the parent
    copies = split_convex(parent, scale=1.0, sigma_boost=1.0,
                          opacity_factor=1.0)
    spread = parent.points - parent.points.mean(axis=0)
    for child in copies:
        np.testing.assert_allclose(
            child.points - child.points.mean(axis=0), spread, atol=1e-12)


def test_split_parameter_inheritance():
    parent = make_convex(seed=3, opacity=0.9, sigma=0.08)
    children = split_convex(parent, scale=0.7, sigma_boost=1.25,
                            opacity_factor=0.8)
    for child in children:
        assert child.raw_delta == parent.raw_delta  # exact, raw space
        assert child.sigma == pytest.approx(1.25 * parent.sigma, rel=1e-12)
        assert child.opacity == pytest.approx(0.8 * parent.opacity, rel=1e-12)
        assert child.raw_mask == parent.raw_mask
        np.testing.assert_array_equal(child.sh, parent.sh)
    children[0].sh[0, 0] += 1.0
    assert parent.sh[0, 0] != children[0].sh[0, 0]  # no aliasing


def scene_of(*convs, extent=4.0):
    return Scene(primitives=list(convs),
                 background=np.zeros(3), scene_extent=extent)


def test_forced_split_count_change_is_points_minus_one():
    config = TrainConfig()
    convs = [make_convex(seed=s, radius=0.3) for s in range(4)]
    scene = scene_of(*convs)
    k = convs[0].num_points
    signal = np.zeros(4)
    signal[2] = config.sigma_loss_threshold * 10  # force exactly one split
    index_map, stats = densify_and_prune(scene, signal, config, iteration=1000)
    assert len(scene.primitives) == 4 + k - 1
    assert stats.split == 1
    assert stats.before == 4
    assert stats.after == 4 + k - 1
    # survivors keep their old indices, children are marked -1
    assert list(index_map[:3]) == [0, 1, 3]
    assert np.all(index_map[3:] == -1)


def test_no_split_after_stop_iteration():
    config = TrainConfig()
    scene = scene_of(make_convex(seed=4, radius=0.3))
    signal = np.array([1.0])  # far above any threshold
    _, stats = densify_and_prune(scene, signal, config,
                                 iteration=config.densify_stop + 1)
    assert stats.split == 0
    assert len(scene.primitives) == 1


def test_prune_low_opacity():
    config = TrainConfig()
    faint = make_convex(seed=5, radius=0.3)
    faint.raw_opacity = float(inverse_opacity_activation(0.02))
    solid = make_convex(seed=6, radius=0.3)
    scene = scene_of(faint, solid)
    index_map, stats = densify_and_prune(scene, np.zeros(2), config, 1000)
    assert len(scene.primitives) == 1
    assert stats.pruned == 1
    assert list(index_map) == [1]


def test_prune_oversized():
    config = TrainConfig()
    huge = make_convex(seed=7, radius=3.0)   # diameter 6 > 0.3 * 4
    small = make_convex(seed=8, radius=0.3)
    scene = scene_of(huge, small, extent=4.0)
    index_map, _ = densify_and_prune(scene, np.zeros(2), config, 1000)
    assert list(index_map) == [1]


def test_prune_closed_mask():
    config = TrainConfig()
    ghost = make_convex(seed=9, radius=0.3, mask=MASK_GATE / 2)
    scene = scene_of(ghost)
    index_map, stats = densify_and_prune(scene, np.zeros(1), config, 1000)
    assert len(scene.primitives) == 0
    assert index_map.size == 0
    assert stats.pruned == 1


def test_no_rule_violations_after_round():
    config = TrainConfig()
    rng = np.random.default_rng(10)
    convs = [make_convex(seed=100 + s, radius=rng.uniform(0.1, 2.0),
                         opacity=rng.uniform(0.01, 0.99))
             for s in range(12)]
    scene = scene_of(*convs)
    signal = rng.uniform(0.0, 3 * config.sigma_loss_threshold, size=12)
    densify_and_prune(scene, signal, config, iteration=1000)
    limit = config.prune_size_fraction * scene.scene_extent
    for conv in scene.primitives:
        assert conv.opacity >= config.prune_opacity
        assert conv.diameter() <= limit
        assert conv.mask > MASK_GATE


def test_index_map_rows_match_survivors():
    config = TrainConfig()
    convs = [make_convex(seed=200 + s, radius=0.3) for s in range(5)]
    convs[1].raw_opacity = float(inverse_opacity_activation(0.01))
    scene = scene_of(*convs)
    signal = np.zeros(5)
    signal[4] = config.sigma_loss_threshold * 5
    snapshot = [c.points.copy() for c in convs]
    index_map, _ = densify_and_prune(scene, signal, config, 1000)
    for new_row, old_row in enumerate(index_map):
        if old_row >= 0:
            np.testing.assert_array_equal(scene.primitives[new_row].points,
                                          snapshot[old_row])


def test_delta_survives_split_chain_exactly():
    config = TrainConfig()
    conv = make_convex(seed=11, radius=0.3, delta=1.37)
    raw = conv.raw_delta
    scene = scene_of(conv)
    for _ in range(3):
        signal = np.full(len(scene.primitives), config.sigma_loss_threshold * 2)
        densify_and_prune(scene, signal, config, iteration=1000)
        assert scene.primitives  # children survive the prune rules here
        for child in scene.primitives:
            assert child.raw_delta == raw
