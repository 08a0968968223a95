"""Tile-based alpha compositing of smooth convex primitives.

``render`` is the production path: primitives are binned to 16x16 pixel
tiles by conservative screen bounds, sorted once globally by center depth,
and blended front to back with a contribution cutoff and early ray
termination.  ``render_reference`` is the plain-math oracle used to bound
the error of those shortcuts: no tiles, no bounds, no cutoff, no
termination.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .field import ScalingMode, depth_scale, smooth_sdf
from .harmonics import eval_sh_color
from .model import Camera, Scene
from .projection import ProjectedConvex, bbox_with_margin, graham_scan, hull_lines, project_points

TILE_SIZE = 16

# Hard gate on the pruning mask; below this a primitive is invisible.
MASK_GATE = 0.01

# Alpha is kept strictly below 1 so transmittance never reaches zero and
# the backward reconstruction 1/(1 - alpha) stays finite.
ALPHA_MAX = 1.0 - 1e-6


@dataclass(frozen=True)
class RenderSettings:
    """Knobs of the production rasterizer.

    contribution_cutoff: alphas below this are skipped.  Skips accumulate
        across primitives, so the default sits well under one 8-bit
        quantization step: ~40 faint overlapping primitives can each be
        dropped and the pixel still moves less than 2/255.
    transmittance_floor: pixels stop blending once transmittance falls
        below this.
    Setting both to zero yields the exact blend, which is what the
    gradient checker differentiates against.
    """

    contribution_cutoff: float = 2e-4
    transmittance_floor: float = 1e-4
    tile_size: int = TILE_SIZE
    sh_degree: int = 3


EXACT_SETTINGS = RenderSettings(contribution_cutoff=0.0, transmittance_floor=0.0)


@dataclass
class ViewPrimitive:
    """One primitive prepared for a specific view, ready to blend."""

    pc: ProjectedConvex
    opacity: float
    color: np.ndarray
    scale: float           # depth scale applied to delta and sigma
    view_dir: np.ndarray   # unit vector camera center -> primitive center
    view_dist: float


@dataclass
class RenderOutput:
    image: np.ndarray                # (H, W, 3) in [0, 1]
    final_transmittance: np.ndarray  # (H, W), before background compositing
    per_pixel_count: np.ndarray      # (H, W) primitives blended per pixel
    blend_weight_sum: np.ndarray     # (H, W) sum of T * alpha per pixel
    visible: np.ndarray = field(default=None)  # (N,) primitives that reached blending


def prepare_view(scene: Scene, cam: Camera, mode: ScalingMode, settings: RenderSettings):
    """Project, gate, hull, bound, color and depth-sort the scene.

    Returns the list of ViewPrimitive in blending order (ascending center
    depth, ties by primitive index).  Primitives are dropped when any
    point is at or behind the near plane, when the projected hull is
    degenerate, when the mask gate is closed, or when the screen bounds
    are empty.
    """
    cam_center = cam.center()
    prepared = []
    for index, conv in enumerate(scene.primitives):
        if conv.mask <= MASK_GATE:
            continue
        projected = project_points(conv.points, cam)
        if projected is None:
            continue
        pixels, depths = projected
        hull_idx = graham_scan(pixels)
        if hull_idx is None:
            continue
        normals, offsets = hull_lines(pixels[hull_idx])
        depth = float(depths.mean())
        s = depth_scale(mode, 1.0 if cam.ortho else depth)
        delta_s = s * conv.delta
        sigma_s = s * conv.sigma
        opacity = conv.opacity
        bbox = bbox_with_margin(
            pixels[hull_idx], normals, delta_s, sigma_s, opacity,
            settings.contribution_cutoff, cam.width, cam.height,
        )
        if bbox is None:
            continue
        center = conv.center()
        offset_to_cam = center - cam_center
        dist = float(np.linalg.norm(offset_to_cam))
        view_dir = offset_to_cam / dist if dist > 0 else np.array([0.0, 0.0, 1.0])
        color = eval_sh_color(conv.sh, view_dir, settings.sh_degree)
        pc = ProjectedConvex(
            index=index, pixels=pixels, point_depths=depths, depth=depth,
            hull_indices=hull_idx, normals=normals, offsets=offsets,
            delta_s=delta_s, sigma_s=sigma_s, bbox=bbox,
        )
        prepared.append(ViewPrimitive(pc, opacity, color, s, view_dir, dist))
    prepared.sort(key=lambda vp: (vp.pc.depth, vp.pc.index))
    return prepared


def pixel_centers(cam: Camera) -> np.ndarray:
    """(H, W, 2) array of pixel-center coordinates."""
    xs, ys = cam.pixel_grid()
    grid = np.empty((cam.height, cam.width, 2))
    grid[..., 0] = xs[None, :]
    grid[..., 1] = ys[:, None]
    return grid


def bin_tiles(prepared, width: int, height: int, tile_size: int):
    """Candidate index lists per tile, row-major tile order."""
    tiles_x = (width + tile_size - 1) // tile_size
    tiles_y = (height + tile_size - 1) // tile_size
    bins = [[] for _ in range(tiles_x * tiles_y)]
    for k, vp in enumerate(prepared):
        x0, x1, y0, y1 = vp.pc.bbox
        for ty in range(y0 // tile_size, (y1 - 1) // tile_size + 1):
            for tx in range(x0 // tile_size, (x1 - 1) // tile_size + 1):
                bins[ty * tiles_x + tx].append(k)
    return bins, tiles_x, tiles_y


def primitive_alpha(vp: ViewPrimitive, grid: np.ndarray) -> np.ndarray:
    """gate * opacity * indicator on pixel positions, capped at ALPHA_MAX."""
    pc = vp.pc
    distances = grid @ pc.normals.T + pc.offsets
    phi = smooth_sdf(distances, pc.delta_s)
    ind = expit(-pc.sigma_s * phi)
    return np.minimum(vp.opacity * ind, ALPHA_MAX)


def render(
    scene: Scene,
    cam: Camera,
    mode: ScalingMode = ScalingMode.DEPTH,
    settings: RenderSettings = RenderSettings(),
) -> RenderOutput:
    """Tile-based forward render."""
    height, width = cam.height, cam.width
    prepared = prepare_view(scene, cam, mode, settings)
    grid = pixel_centers(cam)

    image = np.zeros((height, width, 3))
    transmittance = np.ones((height, width))
    count = np.zeros((height, width), dtype=np.int32)
    weight_sum = np.zeros((height, width))

    bins, tiles_x, tiles_y = bin_tiles(prepared, width, height, settings.tile_size)
    ts = settings.tile_size
    cutoff = settings.contribution_cutoff
    floor = settings.transmittance_floor
    visible = np.zeros(len(scene.primitives), dtype=bool)

    for ty in range(tiles_y):
        for tx in range(tiles_x):
            candidates = bins[ty * tiles_x + tx]
            if not candidates:
                continue
            ty0, ty1 = ty * ts, min((ty + 1) * ts, height)
            tx0, tx1 = tx * ts, min((tx + 1) * ts, width)
            for k in candidates:
                vp = prepared[k]
                bx0, bx1, by0, by1 = vp.pc.bbox
                y0, y1 = max(by0, ty0), min(by1, ty1)
                x0, x1 = max(bx0, tx0), min(bx1, tx1)
                if y0 >= y1 or x0 >= x1:
                    continue
                alpha = primitive_alpha(vp, grid[y0:y1, x0:x1])
                t_sub = transmittance[y0:y1, x0:x1]
                blend = (t_sub >= floor) & (alpha >= cutoff) if floor > 0.0 \
                    else (alpha >= cutoff)
                if not blend.any():
                    continue
                visible[vp.pc.index] = True
                alpha = np.where(blend, alpha, 0.0)
                w = t_sub * alpha
                image[y0:y1, x0:x1] += w[..., None] * vp.color
                weight_sum[y0:y1, x0:x1] += w
                t_sub *= 1.0 - alpha
                count[y0:y1, x0:x1] += blend

    final_transmittance = transmittance.copy()
    image += transmittance[..., None] * scene.background
    np.clip(image, 0.0, 1.0, out=image)
    return RenderOutput(image, final_transmittance, count, weight_sum, visible)


def render_reference(
    scene: Scene,
    cam: Camera,
    mode: ScalingMode = ScalingMode.DEPTH,
) -> RenderOutput:
    """Oracle renderer: every primitive blended at every pixel, in order.

    Shares projection, hulls, gating, colors and the depth sort with the
    production path (those have their own checks); everything the tile
    machinery approximates is done exactly here.
    """
    height, width = cam.height, cam.width
    prepared = prepare_view(scene, cam, mode, EXACT_SETTINGS)
    grid = pixel_centers(cam)

    image = np.zeros((height, width, 3))
    transmittance = np.ones((height, width))
    count = np.zeros((height, width), dtype=np.int32)
    weight_sum = np.zeros((height, width))
    visible = np.zeros(len(scene.primitives), dtype=bool)

    for vp in prepared:
        alpha = primitive_alpha(vp, grid)
        w = transmittance * alpha
        image += w[..., None] * vp.color
        weight_sum += w
        transmittance = transmittance * (1.0 - alpha)
        count += 1
        visible[vp.pc.index] = True

    final_transmittance = transmittance.copy()
    image = image + transmittance[..., None] * scene.background
    np.clip(image, 0.0, 1.0, out=image)
    return RenderOutput(image, final_transmittance, count, weight_sum, visible)
