"""Rotation-group kernels on float64 torch tensors.

All functions broadcast over leading dimensions: axis-angle vectors are
``[..., 3]`` and rotation matrices ``[..., 3, 3]``.  The small-angle and
near-pi branches are written with double ``torch.where`` so autograd never
sees an inf/nan from the branch that is not taken.
"""

import math
from typing import Optional, Union

import torch

from ..errors import InvalidRotationError

ROTATION_TOL = 1e-9

# Below these thresholds the closed forms lose precision
_SMALL_ANGLE_SQ = 1e-6
_SMALL_SIN_SQ = 1e-8
_NEAR_PI_SIN_SQ = 1e-6

TimeLike = Union[float, torch.Tensor]


def hat(v: torch.Tensor) -> torch.Tensor:
    """Skew-symmetric matrix of a 3-vector"""
    x, y, z = v.unbind(-1)
    zero = torch.zeros_like(x)
    return torch.stack(
        [
            torch.stack([zero, -z, y], dim=-1),
            torch.stack([z, zero, -x], dim=-1),
            torch.stack([-y, x, zero], dim=-1),
        ],
        dim=-2,
    )


def vee(m: torch.Tensor) -> torch.Tensor:
    """Inverse of ``hat`` applied to the antisymmetric part's entries"""
    return torch.stack([m[..., 2, 1], m[..., 0, 2], m[..., 1, 0]], dim=-1)


def identity(*batch: int, dtype=torch.float64) -> torch.Tensor:
    return torch.eye(3, dtype=dtype).expand(*batch, 3, 3).clone()


def check_rotation(r: torch.Tensor, tol: float = ROTATION_TOL) -> None:
    """Raise InvalidRotationError unless every matrix is orthonormal with det +1"""
    if r.shape[-2:] != (3, 3):
        raise InvalidRotationError(f"expected [..., 3, 3], got {tuple(r.shape)}")
    with torch.no_grad():
        eye = torch.eye(3, dtype=r.dtype)
        ortho = torch.linalg.matrix_norm(r.transpose(-1, -2) @ r - eye)
        det = torch.linalg.det(r)
        if not torch.isfinite(r).all():
            raise InvalidRotationError("rotation contains non-finite entries")
        if (ortho > tol).any() or ((det - 1.0).abs() > tol).any():
            raise InvalidRotationError(
                f"not a rotation: max |RᵀR - I| = {ortho.max().item():.3e}, "
                f"max |det - 1| = {(det - 1.0).abs().max().item():.3e}"
            )


def so3_exp(v: torch.Tensor) -> torch.Tensor:
    """Rodrigues map from axis-angle ``v`` to a rotation matrix"""
    theta_sq = (v * v).sum(-1)
    small = theta_sq < _SMALL_ANGLE_SQ
    safe_sq = torch.where(small, torch.ones_like(theta_sq), theta_sq)
    theta = safe_sq.sqrt()

    # sin(θ)/θ and (1 - cos θ)/θ² with Taylor series near zero
    a = torch.where(small, 1.0 - theta_sq / 6.0 + theta_sq**2 / 120.0, torch.sin(theta) / theta)
    b = torch.where(
        small, 0.5 - theta_sq / 24.0 + theta_sq**2 / 720.0, (1.0 - torch.cos(theta)) / safe_sq
    )

    k = hat(v)
    eye = torch.eye(3, dtype=v.dtype).expand_as(k)
    return eye + a[..., None, None] * k + b[..., None, None] * (k @ k)


def so3_log(r: torch.Tensor, check: bool = True) -> torch.Tensor:
    """Axis-angle vector of ``r`` with angle in [0, pi].

    Args:
        r: Rotation matrices ``[..., 3, 3]``
        check: Validate orthonormality first (disable inside the network,
            where inputs are renormalized already)

    Returns:
        Axis-angle vectors ``[..., 3]``
    """
    if check:
        check_rotation(r)

    trace = r.diagonal(dim1=-2, dim2=-1).sum(-1)
    cos = ((trace - 1.0) / 2.0).clamp(-1.0, 1.0)
    w = vee(r - r.transpose(-1, -2))  # 2 sin(θ) n
    sin_sq = (w * w).sum(-1) / 4.0

    near_zero = (sin_sq < _SMALL_SIN_SQ) & (cos > 0)
    near_pi = (sin_sq < _NEAR_PI_SIN_SQ) & (cos <= 0)
    generic = ~(near_zero | near_pi)

    sin = torch.where(near_zero, torch.ones_like(sin_sq), sin_sq).sqrt()
    sin = torch.where(near_zero, torch.zeros_like(sin), sin)
    theta = torch.atan2(sin, cos)

    # θ / (2 sin θ), series near zero
    safe_sin = torch.where(generic, sin, torch.ones_like(sin))
    factor = torch.where(
        near_zero, 0.5 + sin_sq / 12.0, theta / (2.0 * safe_sin)
    )
    v_small = factor[..., None] * w

    # Near pi: (R + Rᵀ)/2 - cos θ I = (1 - cos θ) n nᵀ, pivot on its largest diagonal
    sym = 0.5 * (r + r.transpose(-1, -2)) - cos[..., None, None] * torch.eye(3, dtype=r.dtype)
    diag = sym.diagonal(dim1=-2, dim2=-1)
    pivot = diag.argmax(-1, keepdim=True)
    column = torch.gather(sym, -1, pivot[..., None, :].expand(*sym.shape[:-1], 1)).squeeze(-1)
    pivot_val = torch.gather(diag, -1, pivot).squeeze(-1)
    pivot_val = torch.where(near_pi, pivot_val, torch.ones_like(pivot_val))
    axis = column / pivot_val.clamp_min(1e-300).sqrt()[..., None]
    axis_norm_sq = (axis * axis).sum(-1)
    axis_norm_sq = torch.where(near_pi, axis_norm_sq, torch.ones_like(axis_norm_sq))
    axis = axis / axis_norm_sq.sqrt()[..., None]
    sign = torch.where((axis * w).sum(-1) < 0, -torch.ones_like(cos), torch.ones_like(cos))
    v_pi = (sign * theta)[..., None] * axis

    return torch.where(near_pi[..., None], v_pi, v_small)


def rotation_angle(r: torch.Tensor) -> torch.Tensor:
    """Angle in [0, pi] of each rotation"""
    return so3_log(r, check=False).norm(dim=-1)


def relative_angle(r0: torch.Tensor, r1: torch.Tensor) -> torch.Tensor:
    """Geodesic distance between two rotations"""
    return rotation_angle(r0.transpose(-1, -2) @ r1)


def geodesic_interpolate(r0: torch.Tensor, r1: torch.Tensor, t: TimeLike) -> torch.Tensor:
    """r_t = r0 · exp(t · log(r0ᵀ r1))"""
    t = torch.as_tensor(t, dtype=r0.dtype)
    tangent = so3_log(r0.transpose(-1, -2) @ r1, check=False)
    return r0 @ so3_exp(t[..., None] * tangent)


def translation_interpolate(x0: torch.Tensor, x1: torch.Tensor, t: TimeLike) -> torch.Tensor:
    """x_t = (1 - t) x0 + t x1"""
    t = torch.as_tensor(t, dtype=x0.dtype)
    if t.dim() > 0:
        t = t[..., None]
    return (1.0 - t) * x0 + t * x1


def quaternion_to_matrix(q: torch.Tensor) -> torch.Tensor:
    """Unit quaternion (w, x, y, z) to rotation matrix"""
    q = q / q.norm(dim=-1, keepdim=True)
    w, x, y, z = q.unbind(-1)
    return torch.stack(
        [
            torch.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], -1),
            torch.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], -1),
            torch.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], -1),
        ],
        dim=-2,
    )


def matrix_to_quaternion(r: torch.Tensor) -> torch.Tensor:
    """Rotation matrix to unit quaternion (w, x, y, z) with w >= 0"""
    m = r
    # Four candidate denominators; take the best conditioned per matrix
    candidates = torch.stack(
        [
            1.0 + m[..., 0, 0] + m[..., 1, 1] + m[..., 2, 2],
            1.0 + m[..., 0, 0] - m[..., 1, 1] - m[..., 2, 2],
            1.0 - m[..., 0, 0] + m[..., 1, 1] - m[..., 2, 2],
            1.0 - m[..., 0, 0] - m[..., 1, 1] + m[..., 2, 2],
        ],
        dim=-1,
    )
    best = candidates.argmax(-1)
    s = candidates.clamp_min(1e-300).sqrt() * 2.0  # 4·|component|
    q_w = torch.stack(
        [s[..., 0] / 4, (m[..., 2, 1] - m[..., 1, 2]) / s[..., 0],
         (m[..., 0, 2] - m[..., 2, 0]) / s[..., 0], (m[..., 1, 0] - m[..., 0, 1]) / s[..., 0]], -1
    )
    q_x = torch.stack(
        [(m[..., 2, 1] - m[..., 1, 2]) / s[..., 1], s[..., 1] / 4,
         (m[..., 0, 1] + m[..., 1, 0]) / s[..., 1], (m[..., 0, 2] + m[..., 2, 0]) / s[..., 1]], -1
    )
    q_y = torch.stack(
        [(m[..., 0, 2] - m[..., 2, 0]) / s[..., 2], (m[..., 0, 1] + m[..., 1, 0]) / s[..., 2],
         s[..., 2] / 4, (m[..., 1, 2] + m[..., 2, 1]) / s[..., 2]], -1
    )
    q_z = torch.stack(
        [(m[..., 1, 0] - m[..., 0, 1]) / s[..., 3], (m[..., 0, 2] + m[..., 2, 0]) / s[..., 3],
         (m[..., 1, 2] + m[..., 2, 1]) / s[..., 3], s[..., 3] / 4], -1
    )
    stacked = torch.stack([q_w, q_x, q_y, q_z], dim=-2)
    q = torch.gather(stacked, -2, best[..., None, None].expand(*best.shape, 1, 4)).squeeze(-2)
    q = q / q.norm(dim=-1, keepdim=True)
    return torch.where(q[..., :1] < 0, -q, q)


def sample_uniform_rotations(
    n: int, generator: Optional[torch.Generator] = None, dtype=torch.float64
) -> torch.Tensor:
    """Haar-uniform rotations via normalized 4-component Gaussians"""
    q = torch.randn(n, 4, generator=generator, dtype=dtype)
    return quaternion_to_matrix(q)


def project_to_so3(m: torch.Tensor) -> torch.Tensor:
    """Nearest rotation in Frobenius norm (SVD with reflection fix)"""
    u, _, vh = torch.linalg.svd(m)
    det = torch.linalg.det(u @ vh)
    fix = torch.ones(*m.shape[:-2], 3, dtype=m.dtype)
    fix[..., 2] = torch.sign(det)
    return u @ torch.diag_embed(fix) @ vh


def rotation_about_axis(axis: str, angle: float, dtype=torch.float64) -> torch.Tensor:
    """Elementary rotation about x, y or z"""
    index = "xyz".index(axis)
    v = torch.zeros(3, dtype=dtype)
    v[index] = angle
    return so3_exp(v)


def haar_angle_density(theta: Union[float, torch.Tensor]):
    """Density (1 - cos θ)/pi of the rotation angle under the Haar measure"""
    if isinstance(theta, torch.Tensor):
        return (1.0 - torch.cos(theta)) / math.pi
    return (1.0 - math.cos(theta)) / math.pi
