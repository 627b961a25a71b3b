"""Rigid residue frames, backbone reconstruction and the 7-value frame record"""

from dataclasses import dataclass
from typing import Optional, Sequence

import torch

from ..errors import DegenerateGeometryError, ShapeError
from .so3 import (
    matrix_to_quaternion,
    project_to_so3,
    quaternion_to_matrix,
    sample_uniform_rotations,
)

# Input coordinates are Ångström; the network works in Å × 0.1
ANGSTROM_TO_MODEL = 0.1
MODEL_TO_ANGSTROM = 10.0

BACKBONE_ATOMS = ("N", "CA", "C", "O")

# Idealized local backbone geometry in Å: CA at the origin, C along +x,
# N in the xy-plane with y > 0, O trans to N across the C=O bond
BACKBONE_TEMPLATE_ANGSTROM = (
    (-0.525, 1.363, 0.0),
    (0.0, 0.0, 0.0),
    (1.526, 0.0, 0.0),
    (2.153, -1.062, 0.0),
)


def backbone_template(dtype=torch.float64) -> torch.Tensor:
    """Template ``[4, 3]`` in model units"""
    return torch.tensor(BACKBONE_TEMPLATE_ANGSTROM, dtype=dtype) * ANGSTROM_TO_MODEL


@dataclass
class ResidueFrame:
    """One residue: translation, rotation and amino-acid state (20 = mask)"""

    x: torch.Tensor
    r: torch.Tensor
    c: int = 20


@dataclass
class Rigid:
    """A stack of rigid transforms, ``rots [N, 3, 3]`` and ``trans [N, 3]``"""

    rots: torch.Tensor
    trans: torch.Tensor

    def __post_init__(self):
        if self.rots.shape[:-2] != self.trans.shape[:-1]:
            raise ShapeError(
                f"rotation batch {tuple(self.rots.shape[:-2])} does not match "
                f"translation batch {tuple(self.trans.shape[:-1])}"
            )

    def __len__(self) -> int:
        return self.trans.shape[0]

    @classmethod
    def identity(cls, n: int, dtype=torch.float64) -> "Rigid":
        return cls(torch.eye(3, dtype=dtype).expand(n, 3, 3).clone(), torch.zeros(n, 3, dtype=dtype))

    @classmethod
    def from_frames(cls, frames: Sequence[ResidueFrame]) -> "Rigid":
        return cls(torch.stack([f.r for f in frames]), torch.stack([f.x for f in frames]))

    def frame(self, i: int, c: int = 20) -> ResidueFrame:
        return ResidueFrame(x=self.trans[i], r=self.rots[i], c=c)

    def compose(self, other: "Rigid") -> "Rigid":
        """self ∘ other"""
        return Rigid(self.rots @ other.rots, (self.rots @ other.trans[..., None]).squeeze(-1) + self.trans)

    def apply(self, points: torch.Tensor) -> torch.Tensor:
        """Map local points ``[N, ..., 3]`` into the global frame"""
        extra = points.dim() - self.trans.dim()
        rots = self.rots.reshape(*self.rots.shape[:-2], *([1] * extra), 3, 3)
        trans = self.trans.reshape(*self.trans.shape[:-1], *([1] * extra), 3)
        return (rots @ points[..., None]).squeeze(-1) + trans

    def invert_apply(self, points: torch.Tensor) -> torch.Tensor:
        """Express global points ``[N, ..., 3]`` in each local frame"""
        extra = points.dim() - self.trans.dim()
        rots = self.rots.reshape(*self.rots.shape[:-2], *([1] * extra), 3, 3)
        trans = self.trans.reshape(*self.trans.shape[:-1], *([1] * extra), 3)
        return (rots.transpose(-1, -2) @ (points - trans)[..., None]).squeeze(-1)

    def invert(self) -> "Rigid":
        rots_t = self.rots.transpose(-1, -2)
        return Rigid(rots_t, -(rots_t @ self.trans[..., None]).squeeze(-1))

    def left_multiply(self, rot: torch.Tensor, trans: Optional[torch.Tensor] = None) -> "Rigid":
        """Apply one global rigid motion g to every frame: g ∘ self"""
        if trans is None:
            trans = torch.zeros(3, dtype=rot.dtype)
        return Rigid(rot @ self.rots, self.trans @ rot.T + trans)

    def renormalize(self) -> "Rigid":
        return Rigid(project_to_so3(self.rots), self.trans)

    def detach(self) -> "Rigid":
        return Rigid(self.rots.detach(), self.trans.detach())

    def clone(self) -> "Rigid":
        return Rigid(self.rots.clone(), self.trans.clone())

    def scale_translation(self, factor: float) -> "Rigid":
        return Rigid(self.rots, self.trans * factor)

    def to_tensor_7(self) -> torch.Tensor:
        """Serialize to ``[N, 7]``: quaternion (w, x, y, z; w >= 0) then translation"""
        return torch.cat([matrix_to_quaternion(self.rots), self.trans], dim=-1)

    @classmethod
    def from_tensor_7(cls, record: torch.Tensor) -> "Rigid":
        if record.shape[-1] != 7:
            raise ShapeError(f"frame records have 7 values, got {record.shape[-1]}")
        return cls(quaternion_to_matrix(record[..., :4]), record[..., 4:].clone())


def sample_frame_prior(generator: Optional[torch.Generator] = None) -> ResidueFrame:
    """One frame from the prior: x ~ N(0, I), r ~ Haar, amino acid masked"""
    prior = sample_frames_prior(1, generator)
    return prior.frame(0)


def sample_frames_prior(n: int, generator: Optional[torch.Generator] = None) -> Rigid:
    """``n`` independent prior frames; rotations drawn first, then translations"""
    rots = sample_uniform_rotations(n, generator=generator)
    trans = torch.randn(n, 3, generator=generator, dtype=torch.float64)
    return Rigid(rots, trans)


def backbone_atoms_from_frame(frame: ResidueFrame) -> torch.Tensor:
    """N, CA, C, O coordinates ``[4, 3]`` for one frame (model units)"""
    return backbone_template(frame.x.dtype) @ frame.r.T + frame.x


def backbone_atoms(frames: Rigid) -> torch.Tensor:
    """N, CA, C, O coordinates ``[N, 4, 3]`` for a stack of frames"""
    template = backbone_template(frames.trans.dtype)
    return torch.einsum("nij,aj->nai", frames.rots, template) + frames.trans[:, None, :]


def frames_from_backbone(
    n: torch.Tensor, ca: torch.Tensor, c: torch.Tensor, eps: float = 1e-6
) -> Rigid:
    """Gram–Schmidt frames from N/CA/C positions ``[N, 3]``.

    The x axis points from CA to C, N lies in the xy-plane on the +y side,
    and CA is the origin, which matches the backbone template.
    """
    e1 = c - ca
    e1_norm = e1.norm(dim=-1, keepdim=True)
    u2 = n - ca
    u2 = u2 - (u2 * e1).sum(-1, keepdim=True) * e1 / e1_norm.clamp_min(eps) ** 2
    u2_norm = u2.norm(dim=-1, keepdim=True)
    if (e1_norm < eps).any() or (u2_norm < eps).any():
        raise DegenerateGeometryError("collinear or coincident N/CA/C atoms")
    e1 = e1 / e1_norm
    e2 = u2 / u2_norm
    e3 = torch.cross(e1, e2, dim=-1)
    return Rigid(torch.stack([e1, e2, e3], dim=-1), ca.clone())
