"""Adaptive density control: split under-fitting primitives, prune dead ones.

The split signal is the running mean of |dL/d raw_sigma| per primitive
since the last densification round; a large value means the indicator
steepness keeps fighting the photometric loss, i.e. one convex is covering
detail it cannot represent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import SmoothConvex, Scene, inverse_opacity_activation
from .rasterize import MASK_GATE


def split_convex(conv: SmoothConvex, scale: float, sigma_boost: float,
                 opacity_factor: float) -> list:
    """Split one primitive into K children, one per defining point.

    Child i is the parent point set translated so its centroid lands on
    parent point i, then scaled about that centroid; the union of child
    centroids is exactly the parent's point set.  delta is inherited
    unchanged, sigma is multiplied by sigma_boost and opacity by
    opacity_factor, both applied in raw space through the activations.
    """
    centroid = conv.points.mean(axis=0)
    spread = conv.points - centroid
    raw_sigma = conv.raw_sigma + np.log(sigma_boost)
    raw_opacity = float(inverse_opacity_activation(conv.opacity * opacity_factor))
    children = []
    for i in range(conv.num_points):
        children.append(SmoothConvex(
            points=conv.points[i] + scale * spread,
            raw_delta=float(conv.raw_delta),
            raw_sigma=float(raw_sigma),
            raw_opacity=raw_opacity,
            sh=conv.sh.copy(),
            raw_mask=float(conv.raw_mask),
        ))
    return children


@dataclass
class DensifyStats:
    split: int
    pruned: int
    before: int
    after: int


def densify_and_prune(
    scene: Scene,
    sigma_signal: np.ndarray,
    config,
    iteration: int,
) -> tuple:
    """One adaptive-density round, in place on the scene.

    Splitting happens only while iteration <= densify_stop; pruning by
    opacity, screen-independent size and closed mask runs every round.
    Returns (index_map, stats) where index_map[j] is the old primitive
    index behind new row j, or -1 for a new child, so optimizer state can
    follow.
    """
    before = len(scene.primitives)
    allow_split = iteration <= config.densify_stop

    survivors = []     # (old_index, conv)
    children = []      # conv only, index_map entry -1
    split_count = 0
    for i, conv in enumerate(scene.primitives):
        if allow_split and sigma_signal[i] > config.sigma_loss_threshold:
            children.extend(split_convex(
                conv, config.split_scale,
                config.split_sigma_boost, config.split_opacity_factor,
            ))
            split_count += 1
        else:
            survivors.append((i, conv))

    merged = survivors + [(-1, c) for c in children]

    size_limit = config.prune_size_fraction * scene.scene_extent
    kept = []
    for old_index, conv in merged:
        if conv.opacity < config.prune_opacity:
            continue
        if conv.diameter() > size_limit:
            continue
        if conv.mask <= MASK_GATE:
            continue
        kept.append((old_index, conv))

    scene.primitives = [conv for _, conv in kept]
    index_map = np.asarray([idx for idx, _ in kept], dtype=np.int64)
    stats = DensifyStats(
        split=split_count,
        pruned=len(merged) - len(kept),
        before=before,
        after=len(kept),
    )
    return index_map, stats
