"""Analytic reverse-mode gradients of the tile renderer.

The forward pass stores only O(pixels) state (final transmittance plus the
index of the last blended primitive per pixel); the backward pass walks
each tile's candidates back to front, reconstructing prefix transmittances
by dividing the stored final value by (1 - alpha).  From the per-pixel
alpha gradient the chain runs: sigmoid indicator -> smooth field softmax
-> hull lines -> hull vertices -> projection Jacobian -> 3D points, plus
the depth path through the distance scaling of delta and sigma, and the
spherical-harmonic color path (including the view-direction dependence on
the primitive center).  Sort order, hull membership, the mask gate and the
alpha cap are treated as constants; the mask gate gradient uses a
straight-through estimator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .field import ScalingMode, depth_scale_grad, smooth_sdf, softmax_over_lines
from .harmonics import sh_color_vjp
from .losses import image_loss
from .model import Camera, Scene, SH_COEFFS
from .projection import graham_scan, project_points
from .rasterize import (
    ALPHA_MAX,
    EXACT_SETTINGS,
    RenderSettings,
    bin_tiles,
    pixel_centers,
    prepare_view,
    render,
)


@dataclass
class GradientBuffer:
    """Per-primitive gradients w.r.t. raw parameters for one view."""

    d_points: np.ndarray       # (N, K, 3)
    d_raw_delta: np.ndarray    # (N,)
    d_raw_sigma: np.ndarray    # (N,)
    d_raw_opacity: np.ndarray  # (N,)
    d_sh: np.ndarray           # (N, 16, 3)
    d_raw_mask: np.ndarray     # (N,)
    visible: np.ndarray        # (N,) bool, blended somewhere this view

    @classmethod
    def zeros(cls, scene: Scene) -> "GradientBuffer":
        n = len(scene.primitives)
        k = scene.primitives[0].num_points if n else 0
        return cls(
            d_points=np.zeros((n, k, 3)),
            d_raw_delta=np.zeros(n),
            d_raw_sigma=np.zeros(n),
            d_raw_opacity=np.zeros(n),
            d_sh=np.zeros((n, SH_COEFFS, 3)),
            d_raw_mask=np.zeros(n),
            visible=np.zeros(n, dtype=bool),
        )

    def add(self, other: "GradientBuffer") -> "GradientBuffer":
        self.d_points += other.d_points
        self.d_raw_delta += other.d_raw_delta
        self.d_raw_sigma += other.d_raw_sigma
        self.d_raw_opacity += other.d_raw_opacity
        self.d_sh += other.d_sh
        self.d_raw_mask += other.d_raw_mask
        self.visible |= other.visible
        return self


def backward(
    scene: Scene,
    cam: Camera,
    d_image: np.ndarray,
    mode: ScalingMode = ScalingMode.DEPTH,
    settings: RenderSettings = RenderSettings(),
) -> GradientBuffer:
    """Gradient of sum(d_image * rendered_image) w.r.t. raw scene parameters.

    Reruns the forward walk per tile (the renderer is deterministic, so
    the reconstruction sees exactly the blend the forward pass produced)
    and then traverses back to front.
    """
    height, width = cam.height, cam.width
    prepared = prepare_view(scene, cam, mode, settings)
    grads = GradientBuffer.zeros(scene)
    if not prepared:
        return grads

    grid = pixel_centers(cam)
    bins, tiles_x, tiles_y = bin_tiles(prepared, width, height, settings.tile_size)
    ts = settings.tile_size
    cutoff = settings.contribution_cutoff
    floor = settings.transmittance_floor
    background = scene.background

    m = len(prepared)
    d_color = np.zeros((m, 3))
    d_opacity_eff = np.zeros(m)   # sum over pixels of dA * indicator
    d_sigma_s = np.zeros(m)
    d_delta_s = np.zeros(m)
    line_gn = [np.zeros((vp.pc.normals.shape[0], 2)) for vp in prepared]
    line_gs = [np.zeros(vp.pc.normals.shape[0]) for vp in prepared]

    for ty in range(tiles_y):
        for tx in range(tiles_x):
            candidates = bins[ty * tiles_x + tx]
            if not candidates:
                continue
            ty0, ty1 = ty * ts, min((ty + 1) * ts, height)
            tx0, tx1 = tx * ts, min((tx + 1) * ts, width)

            sub_rects = []
            for k in candidates:
                bx0, bx1, by0, by1 = prepared[k].pc.bbox
                y0, y1 = max(by0, ty0), min(by1, ty1)
                x0, x1 = max(bx0, tx0), min(bx1, tx1)
                if y0 < y1 and x0 < x1:
                    sub_rects.append((k, y0, y1, x0, x1))
            if not sub_rects:
                continue

            th, tw = ty1 - ty0, tx1 - tx0
            transmittance = np.ones((th, tw))
            last = np.full((th, tw), -1, dtype=np.int64)
            c_pre = np.zeros((th, tw, 3))

            # Forward walk: reproduce the blend to recover final
            # transmittance, last contributor and the pre-clamp color.
            for k, y0, y1, x0, x1 in sub_rects:
                vp = prepared[k]
                ly0, ly1, lx0, lx1 = y0 - ty0, y1 - ty0, x0 - tx0, x1 - tx0
                pc = vp.pc
                dist = grid[y0:y1, x0:x1] @ pc.normals.T + pc.offsets
                phi = smooth_sdf(dist, pc.delta_s)
                ind = expit(-pc.sigma_s * phi)
                alpha = np.minimum(vp.opacity * ind, ALPHA_MAX)
                t_sub = transmittance[ly0:ly1, lx0:lx1]
                blend = (t_sub >= floor) & (alpha >= cutoff) if floor > 0.0 \
                    else (alpha >= cutoff)
                alpha = np.where(blend, alpha, 0.0)
                w = t_sub * alpha
                c_pre[ly0:ly1, lx0:lx1] += w[..., None] * vp.color
                t_sub *= 1.0 - alpha
                lsub = last[ly0:ly1, lx0:lx1]
                lsub[blend] = k
                grads.visible[pc.index] |= bool(blend.any())

            final_t = transmittance
            c_pre += final_t[..., None] * background
            inside = (c_pre >= 0.0) & (c_pre <= 1.0)
            g_tile = np.where(inside, d_image[ty0:ty1, tx0:tx1], 0.0)

            # Back-to-front: S holds the color accumulated behind the
            # current primitive (background included).
            rear_color = final_t[..., None] * background
            t_next = final_t.copy()
            for k, y0, y1, x0, x1 in reversed(sub_rects):
                vp = prepared[k]
                pc = vp.pc
                ly0, ly1, lx0, lx1 = y0 - ty0, y1 - ty0, x0 - tx0, x1 - tx0
                q = grid[y0:y1, x0:x1]
                dist = q @ pc.normals.T + pc.offsets
                phi = smooth_sdf(dist, pc.delta_s)
                ind = expit(-pc.sigma_s * phi)
                alpha_raw = vp.opacity * ind
                alpha = np.minimum(alpha_raw, ALPHA_MAX)
                blend = (k <= last[ly0:ly1, lx0:lx1]) & (alpha >= cutoff)
                if not blend.any():
                    continue
                alpha = np.where(blend, alpha, 0.0)

                one_minus = 1.0 - alpha
                t_here = t_next[ly0:ly1, lx0:lx1]
                t_prev = np.where(blend, t_here / one_minus, t_here)

                g = g_tile[ly0:ly1, lx0:lx1]
                s_behind = rear_color[ly0:ly1, lx0:lx1]
                w = np.where(blend, t_prev * alpha, 0.0)
                d_color[k] += np.einsum("hwc,hw->c", g, w)

                d_alpha = (g * (t_prev[..., None] * vp.color - s_behind / one_minus[..., None])).sum(axis=2)
                # The alpha cap and the blend predicate gate the gradient.
                d_alpha = np.where(blend & (alpha_raw < ALPHA_MAX), d_alpha, 0.0)

                d_ind = d_alpha * vp.opacity
                d_opacity_eff[k] += float((d_alpha * ind).sum())
                ind_slope = ind * (1.0 - ind)
                d_phi = d_ind * (-pc.sigma_s) * ind_slope
                d_sigma_s[k] += float((d_ind * (-phi) * ind_slope).sum())

                weights = softmax_over_lines(dist, pc.delta_s)
                d_delta_s[k] += float((d_phi * (weights * dist).sum(axis=-1)).sum())
                d_lines = d_phi[..., None] * pc.delta_s * weights
                line_gn[k] += np.einsum("hwj,hwd->jd", d_lines, q)
                line_gs[k] += d_lines.sum(axis=(0, 1))

                # Step S and T one primitive toward the camera.
                s_behind += w[..., None] * vp.color
                t_next[ly0:ly1, lx0:lx1] = t_prev

    _accumulate_primitive_grads(
        scene, cam, mode, prepared, grads,
        d_color, d_opacity_eff, d_sigma_s, d_delta_s, line_gn, line_gs,
        settings.sh_degree,
    )
    return grads


def _accumulate_primitive_grads(
    scene, cam, mode, prepared, grads,
    d_color, d_opacity_eff, d_sigma_s, d_delta_s, line_gn, line_gs,
    sh_degree,
):
    """Chain per-view screen-space gradients back to raw parameters."""
    rot = cam.R
    for k, vp in enumerate(prepared):
        pc = vp.pc
        i = pc.index
        conv = scene.primitives[i]
        num_points = conv.num_points

        # Lines to hull vertices.  Line j spans hull vertex j -> j+1 with
        # L_j(q) = n_j . (q - v_j); gn is the accumulated dL * (q - v_j)
        # up to the -v_j * gs term folded in below, gs the plain dL sum.
        hull_px = pc.pixels[pc.hull_indices]
        nxt = np.roll(hull_px, -1, axis=0)
        edges = nxt - hull_px
        raw_len = np.hypot(edges[:, 1], edges[:, 0])
        normals = pc.normals
        gn = line_gn[k] - line_gs[k][:, None] * hull_px
        # Through normalization: (I - n n^T) / |raw|.
        gn_raw = (gn - normals * (normals * gn).sum(axis=1, keepdims=True)) / raw_len[:, None]
        # n_raw = (e_y, -e_x), so the adjoint maps to de = (-gy, gx).
        d_edge = np.stack([-gn_raw[:, 1], gn_raw[:, 0]], axis=1)

        d_pix = np.zeros((num_points, 2))
        idx_a = pc.hull_indices
        idx_b = np.roll(pc.hull_indices, -1)
        np.add.at(d_pix, idx_b, d_edge)
        np.add.at(d_pix, idx_a, -d_edge - normals * line_gs[k][:, None])

        # Projection Jacobian back to 3D points.
        x_cam = conv.points @ rot.T + cam.t
        gx, gy = d_pix[:, 0], d_pix[:, 1]
        if cam.ortho:
            d_cam = np.stack([cam.fx * gx, cam.fy * gy, np.zeros(num_points)], axis=1)
        else:
            z = x_cam[:, 2]
            d_cam = np.stack([
                cam.fx / z * gx,
                cam.fy / z * gy,
                -(cam.fx * x_cam[:, 0] / (z * z)) * gx
                - (cam.fy * x_cam[:, 1] / (z * z)) * gy,
            ], axis=1)
        grads.d_points[i] += d_cam @ rot

        # Distance scaling: delta_s = s(depth) * delta, sigma_s likewise.
        grads.d_raw_delta[i] += d_delta_s[k] * vp.scale * conv.delta
        grads.d_raw_sigma[i] += d_sigma_s[k] * vp.scale * conv.sigma
        if not cam.ortho:
            d_depth = (d_delta_s[k] * conv.delta + d_sigma_s[k] * conv.sigma) \
                * depth_scale_grad(mode, pc.depth)
            grads.d_points[i] += d_depth * rot[2] / num_points

        # Opacity and the straight-through mask estimate share dA * I.
        opacity = conv.opacity
        grads.d_raw_opacity[i] += d_opacity_eff[k] * opacity * (1.0 - opacity)
        mask = conv.mask
        grads.d_raw_mask[i] += d_opacity_eff[k] * opacity * mask * (1.0 - mask)

        # Color: SH coefficients plus the view-direction dependence of the
        # primitive center.
        d_sh_i, d_dir = sh_color_vjp(conv.sh, vp.view_dir, d_color[k], sh_degree)
        grads.d_sh[i] += d_sh_i
        d_center = (d_dir - vp.view_dir * (vp.view_dir @ d_dir)) / vp.view_dist
        grads.d_points[i] += d_center / num_points


# ---------------------------------------------------------------------------
# Finite-difference verification harness.

PARAMS_PER_POINT = 3
SCALAR_PARAMS = 3  # raw_delta, raw_sigma, raw_opacity


def params_per_primitive(conv) -> int:
    return conv.num_points * 3 + 3 + SH_COEFFS * 3 + 1


def pack_scene(scene: Scene) -> np.ndarray:
    chunks = []
    for conv in scene.primitives:
        chunks.append(conv.points.ravel())
        chunks.append([conv.raw_delta, conv.raw_sigma, conv.raw_opacity])
        chunks.append(conv.sh.ravel())
        chunks.append([conv.raw_mask])
    return np.concatenate([np.asarray(c, dtype=np.float64) for c in chunks])


def unpack_scene(template: Scene, vec: np.ndarray) -> Scene:
    scene = template.copy()
    pos = 0
    for conv in scene.primitives:
        k = conv.num_points
        conv.points = vec[pos:pos + 3 * k].reshape(k, 3).copy()
        pos += 3 * k
        conv.raw_delta, conv.raw_sigma, conv.raw_opacity = vec[pos:pos + 3]
        pos += 3
        conv.sh = vec[pos:pos + SH_COEFFS * 3].reshape(SH_COEFFS, 3).copy()
        pos += SH_COEFFS * 3
        conv.raw_mask = float(vec[pos])
        pos += 1
    return scene


def pack_grads(grads: GradientBuffer) -> np.ndarray:
    chunks = []
    for i in range(grads.d_points.shape[0]):
        chunks.append(grads.d_points[i].ravel())
        chunks.append([grads.d_raw_delta[i], grads.d_raw_sigma[i], grads.d_raw_opacity[i]])
        chunks.append(grads.d_sh[i].ravel())
        chunks.append([grads.d_raw_mask[i]])
    return np.concatenate([np.asarray(c, dtype=np.float64) for c in chunks])


def parameter_kinds(scene: Scene) -> list:
    kinds = []
    for conv in scene.primitives:
        kinds.extend(["points"] * (conv.num_points * 3))
        kinds.extend(["delta", "sigma", "opacity"])
        kinds.extend(["sh"] * (SH_COEFFS * 3))
        kinds.append("mask")
    return kinds


def position_param_indices(scene: Scene) -> np.ndarray:
    idx = []
    pos = 0
    for conv in scene.primitives:
        k3 = conv.num_points * 3
        idx.extend(range(pos, pos + k3))
        pos += k3 + SCALAR_PARAMS + SH_COEFFS * 3 + 1
    return np.asarray(idx, dtype=np.int64)


def _discrete_signature(scene: Scene, cam: Camera):
    """Hull membership, culling and sort order; flips mark non-smooth points."""
    per_prim = []
    order_keys = []
    for i, conv in enumerate(scene.primitives):
        projected = project_points(conv.points, cam)
        if projected is None:
            per_prim.append(None)
            continue
        pixels, depths = projected
        hull = graham_scan(pixels)
        per_prim.append(None if hull is None else tuple(hull.tolist()))
        if hull is not None:
            order_keys.append((float(depths.mean()), i))
    order = tuple(i for _, i in sorted(order_keys))
    return tuple(per_prim), order


@dataclass
class FDReport:
    rel_errors: np.ndarray
    flagged: np.ndarray
    kinds: list
    max_rel_error: float       # over non-flagged parameters
    mean_rel_error: float
    flagged_fraction: float
    tolerance: float
    passed: bool

    def summary(self) -> str:
        worst = {}
        for kind in ("points", "delta", "sigma", "opacity", "sh", "mask"):
            sel = [r for r, k, f in zip(self.rel_errors, self.kinds, self.flagged)
                   if k == kind and not f]
            if sel:
                worst[kind] = max(sel)
        parts = ", ".join(f"{k}={v:.3e}" for k, v in worst.items())
        return (
            f"max_rel={self.max_rel_error:.3e} (tol {self.tolerance:.1e}), "
            f"flagged {int(self.flagged.sum())}/{self.flagged.size} "
            f"({100 * self.flagged_fraction:.2f}%), per-kind max: {parts}"
        )


def fd_check(
    scene: Scene,
    cam: Camera,
    target: np.ndarray,
    mode: ScalingMode = ScalingMode.DEPTH,
    settings: RenderSettings = EXACT_SETTINGS,
    lambda_dssim: float = 0.2,
    step: float = 1e-5,
    tolerance: float = 1e-4,
    flag_budget: float = 0.05,
) -> FDReport:
    """Compare analytic gradients of the image loss with central differences.

    Runs against the exact blend settings by default so the loss is smooth
    except for genuinely discrete stages.  Parameters whose +/- step flips
    hull membership, culling, sort order, or the sign of any pixel residual
    (the L1 term's kink) are flagged and excluded, as are mask parameters
    (the hard gate's straight-through estimate differs from the true
    derivative by construction).
    """
    base_vec = pack_scene(scene)
    kinds = parameter_kinds(scene)
    n_params = base_vec.size

    def loss_and_signs(vec: np.ndarray) -> tuple:
        candidate = unpack_scene(scene, vec)
        out = render(candidate, cam, mode, settings)
        raw_masks = np.array([c.raw_mask for c in candidate.primitives])
        total = image_loss(out.image, target, raw_masks, lambda_dssim,
                           beta_mask=0.0).total
        return total, np.sign(out.image - target)

    out = render(scene, cam, mode, settings)
    raw_masks = np.array([c.raw_mask for c in scene.primitives])
    loss = image_loss(out.image, target, raw_masks, lambda_dssim, beta_mask=0.0)
    analytic = pack_grads(
        backward(scene, cam, loss.d_image, mode, settings)
    )

    flagged = np.zeros(n_params, dtype=bool)
    flagged[[i for i, k in enumerate(kinds) if k == "mask"]] = True

    base_signature = _discrete_signature(scene, cam)
    fd = np.zeros(n_params)
    for j in range(n_params):
        h = step * (1.0 + abs(base_vec[j]))
        vec_plus = base_vec.copy()
        vec_plus[j] += h
        vec_minus = base_vec.copy()
        vec_minus[j] -= h
        if kinds[j] == "points":
            # Only positions can move hulls, culling or the depth sort.
            sig_p = _discrete_signature(unpack_scene(scene, vec_plus), cam)
            sig_m = _discrete_signature(unpack_scene(scene, vec_minus), cam)
            if sig_p != base_signature or sig_m != base_signature:
                flagged[j] = True
                continue
        if flagged[j]:
            continue
        loss_plus, signs_plus = loss_and_signs(vec_plus)
        loss_minus, signs_minus = loss_and_signs(vec_minus)
        if np.any(signs_plus * signs_minus < 0):
            # a pixel residual crossed zero between the two evaluations, so
            # the central difference straddles the absolute-value kink
            flagged[j] = True
            continue
        fd[j] = (loss_plus - loss_minus) / (2.0 * h)

    denom = np.maximum(np.abs(analytic), np.abs(fd))
    # Noise floor: central differences bottom out near eps * |loss| / step.
    floor = max(1e-6 * denom.max(), 1e-12)
    rel = np.abs(analytic - fd) / np.maximum(denom, floor)
    rel[flagged] = 0.0

    live = ~flagged
    max_rel = float(rel[live].max()) if live.any() else 0.0
    mean_rel = float(rel[live].mean()) if live.any() else 0.0
    flagged_fraction = float(flagged.mean())
    passed = max_rel < tolerance and flagged_fraction < flag_budget
    return FDReport(rel, flagged, kinds, max_rel, mean_rel, flagged_fraction,
                    tolerance, passed)
