"""coEvoFormer: axial transformer over the co-evolution grid"""

import math

import torch
from einops import rearrange
from torch import nn

from ..data.models import CoEvoMatrix
from ..errors import ShapeError
from ..flows.discrete import COEVO_SPACE
from .attention import MultiHeadAttention


def token_positional_encoding(n_token: int, dim: int) -> torch.Tensor:
    """Standard sinusoidal encoding ``[n_token, dim]`` along the token axis"""
    position = torch.arange(n_token, dtype=torch.float64)[:, None]
    div_term = torch.exp(torch.arange(0, dim, 2, dtype=torch.float64) * (-math.log(10000.0) / dim))
    pe = torch.zeros(n_token, dim, dtype=torch.float64)
    pe[:, 0::2] = torch.sin(position * div_term)
    pe[:, 1::2] = torch.cos(position * div_term)[:, : dim // 2]
    return pe


class AxialEncoderLayer(nn.Module):
    """Masked self-attention along one axis, then a SiLU MLP; both residual"""

    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.attn = MultiHeadAttention(dim, dim, dim, heads=heads)
        self.attn_norm = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(nn.Linear(dim, 2 * dim), nn.SiLU(), nn.Linear(2 * dim, dim))
        self.mlp_norm = nn.LayerNorm(dim)

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        keep = mask[..., None].to(x.dtype)
        x = self.attn_norm(x + self.attn(x, x, mask)) * keep
        return self.mlp_norm(x + self.mlp(x)) * keep


class CoEvoFormer(nn.Module):
    """Token embedding plus positional encoding, then column and row attention.

    Column attention runs across MSA depth for each token position, row
    attention across tokens within each row.  There is no encoding along
    depth, so permuting rows permutes the output rows.
    """

    def __init__(self, dim: int, n_token: int, num_layers: int = 2, heads: int = 4):
        super().__init__()
        self.dim = dim
        self.n_token = n_token
        self.token_embedding = nn.Embedding(COEVO_SPACE.num_states, dim)
        self.register_buffer("positional", token_positional_encoding(n_token, dim), persistent=False)
        self.column_layers = nn.ModuleList(AxialEncoderLayer(dim, heads) for _ in range(num_layers))
        self.row_layers = nn.ModuleList(AxialEncoderLayer(dim, heads) for _ in range(num_layers))

    def forward(self, tokens: torch.Tensor, cell_mask: torch.Tensor) -> torch.Tensor:
        if tokens.dim() != 2 or tokens.shape != cell_mask.shape:
            raise ShapeError(
                f"tokens {tuple(tokens.shape)} and cell mask {tuple(cell_mask.shape)} must be equal 2D grids"
            )
        if tokens.shape[1] > self.n_token:
            raise ShapeError(f"grid has {tokens.shape[1]} tokens per row, encoder supports {self.n_token}")

        keep = cell_mask[..., None].to(self.positional.dtype)
        safe_tokens = torch.where(cell_mask, tokens, torch.zeros_like(tokens))
        x = (self.token_embedding(safe_tokens) + self.positional[: tokens.shape[1]]) * keep

        for column, row in zip(self.column_layers, self.row_layers):
            x = rearrange(x, "m t d -> t m d")
            x = column(x, cell_mask.T)
            x = rearrange(x, "t m d -> m t d")
            x = row(x, cell_mask)
        return x


def pool_over_depth(x: torch.Tensor, cell_mask: torch.Tensor) -> torch.Tensor:
    """Mean over unmasked rows for each token column, ``[N_token, d]``"""
    weights = cell_mask.to(x.dtype)[..., None]
    return (x * weights).sum(0) / weights.sum(0).clamp_min(1.0)


def encode_coevolution(u_t: CoEvoMatrix, params: CoEvoFormer) -> torch.Tensor:
    """Embedding grid ``[N_MSA, N_token, d]``; masked cells are zero"""
    return params(u_t.tokens, u_t.cell_mask)
