"""Perspective projection, robust 2D convex hulls, and screen bounds.

The hull code follows the classical Graham scan: reference point is the
lowest-y (ties: lowest-x) point, candidates are sorted by polar angle with
collinear ties broken by distance, and only strict left turns survive.
Collinearity is decided by a fixed cross-product tolerance so duplicate
and collinear layouts degrade deterministically.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cmp_to_key
from typing import Optional

import numpy as np

# Cross products with absolute value at or below this count as collinear.
CROSS_TOLERANCE = 1e-9


def project_points(points: np.ndarray, cam) -> Optional[tuple]:
    """Project world points into pixel coordinates.

    Returns (pixels (K, 2), depths (K,)) or None when any point lands at or
    in front of the near plane, which culls the whole primitive for this
    view.  Orthographic cameras keep the same camera-space transform but
    skip the perspective divide.
    """
    x_cam = points @ cam.R.T + cam.t
    z = x_cam[:, 2]
    if np.any(z <= cam.z_near):
        return None
    if cam.ortho:
        px = cam.fx * x_cam[:, 0] + cam.cx
        py = cam.fy * x_cam[:, 1] + cam.cy
    else:
        px = cam.fx * x_cam[:, 0] / z + cam.cx
        py = cam.fy * x_cam[:, 1] / z + cam.cy
    return np.stack([px, py], axis=1), z


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def graham_scan(points_2d: np.ndarray, tol: float = CROSS_TOLERANCE) -> Optional[np.ndarray]:
    """Strictly convex hull of 2D points as indices in CCW order.

    The cycle starts at the reference point.  Collinear points on hull
    edges are removed.  Returns None when fewer than three non-collinear
    points exist (degenerate input).
    """
    pts = np.asarray(points_2d, dtype=np.float64)
    n = pts.shape[0]
    if n < 3:
        return None

    # Exact duplicates break the angular sort; keep the first occurrence.
    seen = {}
    unique = []
    for i in range(n):
        key = (pts[i, 0], pts[i, 1])
        if key not in seen:
            seen[key] = i
            unique.append(i)
    if len(unique) < 3:
        return None

    ref = min(unique, key=lambda i: (pts[i, 1], pts[i, 0]))
    rest = [i for i in unique if i != ref]

    def compare(a, b):
        c = _cross(pts[ref], pts[a], pts[b])
        if c > tol:
            return -1
        if c < -tol:
            return 1
        da = np.sum((pts[a] - pts[ref]) ** 2)
        db = np.sum((pts[b] - pts[ref]) ** 2)
        if da < db:
            return -1
        if da > db:
            return 1
        return 0

    rest.sort(key=cmp_to_key(compare))

    stack = [ref]
    for cand in rest:
        while len(stack) >= 2 and _cross(pts[stack[-2]], pts[stack[-1]], pts[cand]) <= tol:
            stack.pop()
        stack.append(cand)

    # The scan guarantees strict turns for interior triples; clean up any
    # collinearity across the closing edges the same way.
    changed = True
    while changed and len(stack) >= 3:
        changed = False
        m = len(stack)
        for k in range(m):
            a, b, c = stack[(k - 1) % m], stack[k], stack[(k + 1) % m]
            if _cross(pts[a], pts[b], pts[c]) <= tol:
                stack.pop(k)
                changed = True
                break

    if len(stack) < 3:
        return None
    # Rotate so the cycle starts at the reference point.
    start = stack.index(ref) if ref in stack else 0
    stack = stack[start:] + stack[:start]
    return np.asarray(stack, dtype=np.int64)


def hull_lines(hull_pts: np.ndarray) -> tuple:
    """Outward unit normals and offsets for the edges of a CCW hull.

    Edge j runs from vertex j to vertex j+1; its line evaluates to zero on
    both endpoints and is negative on every other hull vertex.
    """
    shifted = np.roll(hull_pts, -1, axis=0)
    edges = shifted - hull_pts
    normals = np.stack([edges[:, 1], -edges[:, 0]], axis=1)
    lengths = np.linalg.norm(normals, axis=1)
    normals = normals / lengths[:, None]
    offsets = -(normals * hull_pts).sum(axis=1)
    return normals, offsets


def line_distances(normals: np.ndarray, offsets: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Signed distances of points q (..., 2) to each hull line, (..., n)."""
    return q @ normals.T + offsets


def bbox_with_margin(
    hull_pts: np.ndarray,
    normals: np.ndarray,
    delta_s: float,
    sigma_s: float,
    opacity: float,
    cutoff: float,
    width: int,
    height: int,
) -> Optional[tuple]:
    """Conservative pixel rectangle containing every visible contribution.

    A pixel can contribute at least ``cutoff`` only where the largest line
    distance stays below log((1 - eps) / eps) / (sigma_s * delta_s) with
    eps = cutoff / opacity; the bound comes from the smooth field being at
    least the largest single-line term.  The rectangle is the axis-aligned
    box of the hull offset outward by that margin (computed per vertex from
    its two adjacent edge lines so sharp vertices stay covered), clipped to
    the image.  Returns (x0, x1, y0, y1) half-open pixel indices, or None
    when nothing can contribute.
    """
    if opacity <= cutoff:
        return None
    if cutoff <= 0.0:
        return 0, width, 0, height

    eps = min(cutoff / opacity, 0.5)
    margin = np.log((1.0 - eps) / eps) / (sigma_s * delta_s)

    prev = np.roll(normals, 1, axis=0)  # line ending at each vertex
    denom = np.maximum(1.0 + (prev * normals).sum(axis=1), 1e-12)
    inflated = hull_pts + margin * (prev + normals) / denom[:, None]

    xmin, ymin = inflated.min(axis=0)
    xmax, ymax = inflated.max(axis=0)
    x0 = max(int(np.ceil(xmin - 0.5)), 0)
    x1 = min(int(np.floor(xmax - 0.5)) + 1, width)
    y0 = max(int(np.ceil(ymin - 0.5)), 0)
    y1 = min(int(np.floor(ymax - 0.5)) + 1, height)
    if x0 >= x1 or y0 >= y1:
        return None
    return x0, x1, y0, y1


@dataclass
class ProjectedConvex:
    """Per-view screen-space state of one primitive.

    depth is the camera-frame z of the primitive center (mean of the K
    point depths) and drives both the global sort and distance scaling.
    hull_indices index into the primitive's own point list; only those
    points carry the hull geometry for this view.
    """

    index: int
    pixels: np.ndarray        # (K, 2)
    point_depths: np.ndarray  # (K,)
    depth: float
    hull_indices: np.ndarray  # (H,)
    normals: np.ndarray       # (H, 2)
    offsets: np.ndarray       # (H,)
    delta_s: float
    sigma_s: float
    bbox: tuple               # (x0, x1, y0, y1) half-open pixel rect

    @property
    def hull_pixels(self) -> np.ndarray:
        return self.pixels[self.hull_indices]
