"""Masked multi-head attention blocks shared by the encoders and heads"""

from typing import Optional

import torch
from einops import rearrange
from torch import einsum, nn

# Additive logit for masked keys; exp underflows to exactly zero in float64
MASK_LOGIT = -1e9


class MultiHeadAttention(nn.Module):
    """Multi-head attention with a boolean key mask.

    Queries ``[..., Nq, dim_q]`` attend over keys ``[..., Nk, dim_kv]``.
    """

    def __init__(self, dim_q: int, dim_kv: int, dim_out: int, heads: int = 4, head_dim: Optional[int] = None):
        super().__init__()
        head_dim = head_dim or max(dim_out // heads, 1)
        self.heads = heads
        self.scale = head_dim ** -0.5
        self.to_q = nn.Linear(dim_q, head_dim * heads, bias=False)
        self.to_k = nn.Linear(dim_kv, head_dim * heads, bias=False)
        self.to_v = nn.Linear(dim_kv, head_dim * heads, bias=False)
        self.to_out = nn.Linear(head_dim * heads, dim_out)

    def forward(
        self, queries: torch.Tensor, keys: torch.Tensor, key_mask: Optional[torch.Tensor] = None
    ) -> torch.Tensor:
        h = self.heads
        q = rearrange(self.to_q(queries), "... i (h d) -> ... h i d", h=h)
        k = rearrange(self.to_k(keys), "... j (h d) -> ... h j d", h=h)
        v = rearrange(self.to_v(keys), "... j (h d) -> ... h j d", h=h)

        logits = einsum("... h i d, ... h j d -> ... h i j", q, k) * self.scale
        if key_mask is not None:
            logits = logits.masked_fill(~key_mask[..., None, None, :], MASK_LOGIT)
        attn = logits.softmax(dim=-1)
        if key_mask is not None:
            # a query with no valid key reads nothing
            attn = attn * key_mask[..., None, None, :].to(attn.dtype)

        out = einsum("... h i j, ... h j d -> ... h i d", attn, v)
        return self.to_out(rearrange(out, "... h i d -> ... i (h d)"))


class Transition(nn.Module):
    """Two-layer SiLU MLP with a residual connection and LayerNorm"""

    def __init__(self, dim: int, expansion: int = 2):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(dim, dim * expansion),
            nn.SiLU(),
            nn.Linear(dim * expansion, dim),
        )
        self.norm = nn.LayerNorm(dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.norm(x + self.net(x))


class CrossAttentionFusion(nn.Module):
    """Residual cross-attention of node features onto a conditioning set"""

    def __init__(self, dim: int, dim_context: int, heads: int = 4):
        super().__init__()
        self.attn = MultiHeadAttention(dim, dim_context, dim, heads=heads)
        self.norm = nn.LayerNorm(dim)

    def forward(
        self, x: torch.Tensor, context: torch.Tensor, context_mask: Optional[torch.Tensor] = None
    ) -> torch.Tensor:
        return self.norm(x + self.attn(x, context, context_mask))
