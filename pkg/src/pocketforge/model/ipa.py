"""Invariant point attention trunk with ligand point attention and frame updates"""

from typing import Optional, Tuple

import torch
import torch.nn.functional as F
from einops import rearrange
from torch import einsum, nn

from ..geometry.rigid import Rigid
from ..geometry.so3 import so3_exp
from .attention import MASK_LOGIT, Transition


class InvariantPointAttention(nn.Module):
    """Scalar, pairwise and frame-local point attention between residues.

    Every term depends on frames only through distances between globally
    placed points or through points re-expressed in a local frame, so the
    output is invariant to a global rigid motion.
    """

    def __init__(
        self,
        *,
        dim: int,
        pair_dim: int,
        heads: int = 4,
        scalar_dim: int = 16,
        query_points: int = 4,
        value_points: int = 4,
        eps: float = 1e-8,
    ):
        super().__init__()
        self.heads = heads
        self.query_points = query_points
        self.value_points = value_points
        self.eps = eps

        self.scalar_scale = (3 * scalar_dim) ** -0.5
        self.point_scale = (3 * query_points * 9 / 2) ** -0.5
        self.pair_scale = 3 ** -0.5

        self.to_scalar_q = nn.Linear(dim, scalar_dim * heads, bias=False)
        self.to_scalar_k = nn.Linear(dim, scalar_dim * heads, bias=False)
        self.to_scalar_v = nn.Linear(dim, scalar_dim * heads, bias=False)
        self.to_point_q = nn.Linear(dim, query_points * heads * 3, bias=False)
        self.to_point_k = nn.Linear(dim, query_points * heads * 3, bias=False)
        self.to_point_v = nn.Linear(dim, value_points * heads * 3, bias=False)
        self.to_pair_bias = nn.Linear(pair_dim, heads)
        self.point_weights = nn.Parameter(torch.full((heads,), 0.5413))  # softplus⁻¹(1)

        out_dim = heads * (scalar_dim + value_points * 4 + pair_dim)
        self.to_out = nn.Linear(out_dim, dim)

    def forward(self, single: torch.Tensor, pair: torch.Tensor, frames: Rigid, mask: torch.Tensor) -> torch.Tensor:
        h = self.heads
        q = rearrange(self.to_scalar_q(single), "n (h d) -> h n d", h=h)
        k = rearrange(self.to_scalar_k(single), "n (h d) -> h n d", h=h)
        v = rearrange(self.to_scalar_v(single), "n (h d) -> h n d", h=h)

        q_pts = frames.apply(rearrange(self.to_point_q(single), "n (h p c) -> n h p c", h=h, c=3))
        k_pts = frames.apply(rearrange(self.to_point_k(single), "n (h p c) -> n h p c", h=h, c=3))
        v_pts = frames.apply(rearrange(self.to_point_v(single), "n (h p c) -> n h p c", h=h, c=3))

        logits_scalar = einsum("h i d, h j d -> h i j", q, k) * self.scalar_scale
        logits_pair = rearrange(self.to_pair_bias(pair), "i j h -> h i j") * self.pair_scale

        diff = q_pts[:, None] - k_pts[None, :]  # i j h p c
        dist_sq = rearrange((diff * diff).sum(-1).sum(-1), "i j h -> h i j")
        gamma = F.softplus(self.point_weights)[:, None, None]
        logits_point = -0.5 * gamma * dist_sq * self.point_scale

        logits = logits_scalar + logits_pair + logits_point
        pair_mask = mask[:, None] & mask[None, :]
        logits = logits.masked_fill(~pair_mask[None], MASK_LOGIT)
        attn = logits.softmax(dim=-1) * pair_mask[None].to(logits.dtype)

        out_scalar = rearrange(einsum("h i j, h j d -> h i d", attn, v), "h n d -> n (h d)")
        out_pair = rearrange(einsum("h i j, i j d -> h i d", attn, pair), "h n d -> n (h d)")

        out_pts_global = einsum("h i j, j h p c -> i h p c", attn, v_pts)
        out_pts = frames.invert_apply(out_pts_global)
        out_norm = ((out_pts * out_pts).sum(-1) + self.eps).sqrt()

        out = torch.cat(
            [
                out_scalar,
                rearrange(out_pts, "n h p c -> n (h p c)"),
                rearrange(out_norm, "n h p -> n (h p)"),
                out_pair,
            ],
            dim=-1,
        )
        return self.to_out(out)


class LigandPointAttention(nn.Module):
    """Residues attend to substrate atoms placed in each residue's local frame.

    The attended atom positions come back as local coordinates, which lets
    the trunk read the substrate's direction relative to each residue.
    """

    def __init__(
        self,
        *,
        dim: int,
        ligand_dim: int,
        heads: int = 4,
        scalar_dim: int = 16,
        query_points: int = 4,
        eps: float = 1e-8,
    ):
        super().__init__()
        self.heads = heads
        self.eps = eps
        self.scalar_scale = (2 * scalar_dim) ** -0.5
        self.point_scale = (query_points * 9 / 2) ** -0.5

        self.to_q = nn.Linear(dim, scalar_dim * heads, bias=False)
        self.to_k = nn.Linear(ligand_dim, scalar_dim * heads, bias=False)
        self.to_v = nn.Linear(ligand_dim, scalar_dim * heads, bias=False)
        self.to_point_q = nn.Linear(dim, query_points * heads * 3, bias=False)
        self.point_weights = nn.Parameter(torch.full((heads,), 0.5413))
        self.to_out = nn.Linear(heads * (scalar_dim + 4), dim)

    def forward(
        self,
        single: torch.Tensor,
        frames: Rigid,
        ligand: torch.Tensor,
        ligand_coords: torch.Tensor,
        ligand_mask: torch.Tensor,
    ) -> torch.Tensor:
        h = self.heads
        n = single.shape[0]
        q = rearrange(self.to_q(single), "n (h d) -> h n d", h=h)
        k = rearrange(self.to_k(ligand), "l (h d) -> h l d", h=h)
        v = rearrange(self.to_v(ligand), "l (h d) -> h l d", h=h)
        q_pts = frames.apply(rearrange(self.to_point_q(single), "n (h p c) -> n h p c", h=h, c=3))

        diff = q_pts[:, :, :, None, :] - ligand_coords[None, None, None, :, :]  # n h p l c
        dist_sq = rearrange((diff * diff).sum(-1).sum(2), "n h l -> h n l")
        gamma = F.softplus(self.point_weights)[:, None, None]

        logits = einsum("h i d, h j d -> h i j", q, k) * self.scalar_scale
        logits = logits - 0.5 * gamma * dist_sq * self.point_scale
        logits = logits.masked_fill(~ligand_mask[None, None, :], MASK_LOGIT)
        attn = logits.softmax(dim=-1) * ligand_mask[None, None, :].to(logits.dtype)

        out_scalar = rearrange(einsum("h i j, h j d -> h i d", attn, v), "h n d -> n (h d)")

        # every atom in every residue frame: [n, l, 3]
        local = frames.invert_apply(ligand_coords[None, :, :].expand(n, -1, -1))
        out_local = einsum("h i j, i j c -> i h c", attn, local)
        out_norm = ((out_local * out_local).sum(-1) + self.eps).sqrt()

        out = torch.cat([out_scalar, rearrange(out_local, "n h c -> n (h c)"), out_norm], dim=-1)
        return self.to_out(out)


class BackboneUpdate(nn.Module):
    """Per-residue rigid update (so3_exp of a 3-vector, local translation)"""

    def __init__(self, dim: int):
        super().__init__()
        self.linear = nn.Linear(dim, 6)

    def forward(self, single: torch.Tensor, frames: Rigid, mask: torch.Tensor) -> Rigid:
        update = self.linear(single) * mask[:, None].to(single.dtype)
        rot_vec, trans = update[:, :3], update[:, 3:]
        return frames.compose(Rigid(so3_exp(rot_vec), trans))


class EdgeTransition(nn.Module):
    def __init__(self, node_dim: int, edge_dim: int):
        super().__init__()
        self.project = nn.Linear(node_dim, edge_dim)
        self.mlp = nn.Sequential(
            nn.Linear(3 * edge_dim, 2 * edge_dim),
            nn.SiLU(),
            nn.Linear(2 * edge_dim, edge_dim),
        )
        self.norm = nn.LayerNorm(edge_dim)

    def forward(self, single: torch.Tensor, pair: torch.Tensor) -> torch.Tensor:
        s = self.project(single)
        n = s.shape[0]
        features = torch.cat([pair, s[:, None, :].expand(n, n, -1), s[None, :, :].expand(n, n, -1)], dim=-1)
        return self.norm(pair + self.mlp(features))


class StructureBlock(nn.Module):
    """One trunk block: IPA, optional ligand point attention, transition, frame update"""

    def __init__(
        self,
        *,
        node_dim: int,
        edge_dim: int,
        ligand_dim: int,
        heads: int,
        scalar_dim: int,
        query_points: int,
        value_points: int,
    ):
        super().__init__()
        self.ipa = InvariantPointAttention(
            dim=node_dim,
            pair_dim=edge_dim,
            heads=heads,
            scalar_dim=scalar_dim,
            query_points=query_points,
            value_points=value_points,
        )
        self.ipa_norm = nn.LayerNorm(node_dim)
        self.ligand_attn = LigandPointAttention(
            dim=node_dim, ligand_dim=ligand_dim, heads=heads, scalar_dim=scalar_dim, query_points=query_points
        )
        self.ligand_norm = nn.LayerNorm(node_dim)
        self.transition = Transition(node_dim)
        self.backbone_update = BackboneUpdate(node_dim)
        self.edge_transition = EdgeTransition(node_dim, edge_dim)

    def forward(
        self,
        single: torch.Tensor,
        pair: torch.Tensor,
        frames: Rigid,
        mask: torch.Tensor,
        ligand: Optional[Tuple[torch.Tensor, torch.Tensor, torch.Tensor]] = None,
    ) -> Tuple[torch.Tensor, torch.Tensor, Rigid]:
        single = self.ipa_norm(single + self.ipa(single, pair, frames, mask))
        if ligand is not None:
            embedding, coords, ligand_mask = ligand
            single = self.ligand_norm(single + self.ligand_attn(single, frames, embedding, coords, ligand_mask))
        single = self.transition(single)
        frames = self.backbone_update(single, frames, mask)
        pair = self.edge_transition(single, pair)
        return single, pair, frames
