"""Real spherical harmonics up to degree 3 for view-dependent color."""

from __future__ import annotations

import numpy as np

SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
)
SH_C3 = (
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
)

MAX_SH_DEGREE = 3


def num_sh_coeffs(degree: int) -> int:
    return (degree + 1) ** 2


def eval_sh_basis(direction: np.ndarray, degree: int = MAX_SH_DEGREE) -> np.ndarray:
    """Basis values Y_0..Y_{(degree+1)^2-1} for a unit direction."""
    if not 0 <= degree <= MAX_SH_DEGREE:
        raise ValueError(f"sh degree must be in [0, {MAX_SH_DEGREE}], got {degree}")
    x, y, z = direction
    out = np.empty(num_sh_coeffs(degree))
    out[0] = SH_C0
    if degree >= 1:
        out[1] = -SH_C1 * y
        out[2] = SH_C1 * z
        out[3] = -SH_C1 * x
    if degree >= 2:
        xx, yy, zz = x * x, y * y, z * z
        out[4] = SH_C2[0] * x * y
        out[5] = SH_C2[1] * y * z
        out[6] = SH_C2[2] * (2.0 * zz - xx - yy)
        out[7] = SH_C2[3] * x * z
        out[8] = SH_C2[4] * (xx - yy)
    if degree >= 3:
        out[9] = SH_C3[0] * y * (3.0 * xx - yy)
        out[10] = SH_C3[1] * x * y * z
        out[11] = SH_C3[2] * y * (4.0 * zz - xx - yy)
        out[12] = SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy)
        out[13] = SH_C3[4] * x * (4.0 * zz - xx - yy)
        out[14] = SH_C3[5] * z * (xx - yy)
        out[15] = SH_C3[6] * x * (xx - 3.0 * yy)
    return out


def eval_sh_basis_grad(direction: np.ndarray, degree: int = MAX_SH_DEGREE) -> np.ndarray:
    """Partial derivatives of each basis value w.r.t. (x, y, z), shape (n, 3)."""
    x, y, z = direction
    n = num_sh_coeffs(degree)
    g = np.zeros((n, 3))
    if degree >= 1:
        g[1] = (0.0, -SH_C1, 0.0)
        g[2] = (0.0, 0.0, SH_C1)
        g[3] = (-SH_C1, 0.0, 0.0)
    if degree >= 2:
        xx, yy, zz = x * x, y * y, z * z
        g[4] = (SH_C2[0] * y, SH_C2[0] * x, 0.0)
        g[5] = (0.0, SH_C2[1] * z, SH_C2[1] * y)
        g[6] = (-2.0 * SH_C2[2] * x, -2.0 * SH_C2[2] * y, 4.0 * SH_C2[2] * z)
        g[7] = (SH_C2[3] * z, 0.0, SH_C2[3] * x)
        g[8] = (2.0 * SH_C2[4] * x, -2.0 * SH_C2[4] * y, 0.0)
    if degree >= 3:
        g[9] = (SH_C3[0] * 6.0 * x * y, SH_C3[0] * 3.0 * (xx - yy), 0.0)
        g[10] = (SH_C3[1] * y * z, SH_C3[1] * x * z, SH_C3[1] * x * y)
        g[11] = (
            -2.0 * SH_C3[2] * x * y,
            SH_C3[2] * (4.0 * zz - xx - 3.0 * yy),
            8.0 * SH_C3[2] * y * z,
        )
        g[12] = (
            -6.0 * SH_C3[3] * x * z,
            -6.0 * SH_C3[3] * y * z,
            SH_C3[3] * (6.0 * zz - 3.0 * xx - 3.0 * yy),
        )
        g[13] = (
            SH_C3[4] * (4.0 * zz - 3.0 * xx - yy),
            -2.0 * SH_C3[4] * x * y,
            8.0 * SH_C3[4] * x * z,
        )
        g[14] = (2.0 * SH_C3[5] * x * z, -2.0 * SH_C3[5] * y * z, SH_C3[5] * (xx - yy))
        g[15] = (SH_C3[6] * 3.0 * (xx - yy), -6.0 * SH_C3[6] * x * y, 0.0)
    return g


def eval_sh_color(sh: np.ndarray, direction: np.ndarray, degree: int = MAX_SH_DEGREE) -> np.ndarray:
    """RGB color for a unit view direction: max(0, 0.5 + sum(coeff * Y)).

    The 0.5 offset centers the DC-only color range; negative evaluations
    clamp to zero per channel.
    """
    basis = eval_sh_basis(direction, degree)
    raw = 0.5 + basis @ sh[: basis.shape[0]]
    return np.maximum(raw, 0.0)


def sh_color_vjp(sh, direction, d_color, degree: int = MAX_SH_DEGREE):
    """Backward of eval_sh_color.

    Returns (d_sh, d_direction) for upstream d_color (3,).  Channels that
    clamped at zero propagate nothing; d_direction is the unconstrained
    partial (normalization of the direction is the caller's chain).
    """
    basis = eval_sh_basis(direction, degree)
    n = basis.shape[0]
    raw = 0.5 + basis @ sh[:n]
    active = raw > 0.0
    d_eff = np.where(active, d_color, 0.0)
    d_sh = np.zeros_like(sh)
    d_sh[:n] = np.outer(basis, d_eff)
    grad = eval_sh_basis_grad(direction, degree)  # (n, 3)
    d_direction = grad.T @ (sh[:n] @ d_eff)
    return d_sh, d_direction
