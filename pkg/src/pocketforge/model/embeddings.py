"""Sinusoidal, distogram and radial-basis feature functions"""

import math

import torch
import torch.nn.functional as F

MAX_TIME_POSITIONS = 10000
MAX_INDEX_LENGTH = 2056
DISTOGRAM_OPEN_UPPER = 1e8


def timestep_embedding(t: torch.Tensor, dim: int, max_positions: int = MAX_TIME_POSITIONS) -> torch.Tensor:
    """Sinusoidal embedding of ``t * max_positions``: sin block, then cos block.

    Args:
        t: Times in [0, 1], any shape
        dim: Output width; an odd width gets one trailing zero

    Returns:
        Tensor ``[*t.shape, dim]``
    """
    t = torch.as_tensor(t, dtype=torch.float64)
    half = dim // 2
    scale = math.log(max_positions) / max(half - 1, 1)
    freqs = torch.exp(torch.arange(half, dtype=torch.float64) * -scale)
    args = (t * max_positions)[..., None] * freqs
    emb = torch.cat([torch.sin(args), torch.cos(args)], dim=-1)
    if dim % 2 == 1:
        emb = F.pad(emb, (0, 1))
    return emb


def index_embedding(indices: torch.Tensor, dim: int, max_len: int = MAX_INDEX_LENGTH) -> torch.Tensor:
    """Sinusoidal embedding of integer positions, ``[..., dim]``"""
    k = torch.arange(dim // 2, dtype=torch.float64)
    angles = indices[..., None].to(torch.float64) * math.pi / (max_len ** (2 * k / dim))
    emb = torch.cat([torch.sin(angles), torch.cos(angles)], dim=-1)
    if dim % 2 == 1:
        emb = F.pad(emb, (0, 1))
    return emb


def pairwise_distances(a: torch.Tensor, b: torch.Tensor, eps: float = 1e-12) -> torch.Tensor:
    """Euclidean distances ``[..., N, M]`` with a gradient-safe square root"""
    diff = a[..., :, None, :] - b[..., None, :, :]
    return ((diff * diff).sum(-1) + eps).sqrt()


def distogram(positions: torch.Tensor, min_bin: float, max_bin: float, num_bins: int) -> torch.Tensor:
    """One-hot distance bins ``[N, N, num_bins]``.

    Bin b fires when lower[b] < d < upper[b]; lowers are linearly spaced on
    [min_bin, max_bin] and the last upper is open, so self-pairs (d = 0) get
    an all-zero row.
    """
    with torch.no_grad():
        diff = positions[:, None, :] - positions[None, :, :]
        dists = (diff * diff).sum(-1).sqrt()[..., None]
    lower = torch.linspace(min_bin, max_bin, num_bins, dtype=positions.dtype)
    upper = torch.cat([lower[1:], lower.new_tensor([DISTOGRAM_OPEN_UPPER])])
    return ((dists > lower) & (dists < upper)).to(positions.dtype)


def rbf_featurize(d: torch.Tensor, d_min: float, d_max: float, num_rbf: int) -> torch.Tensor:
    """Gaussian radial basis ``exp(-((d - mu_k) / sigma)^2)``, ``[..., num_rbf]``"""
    d = torch.as_tensor(d, dtype=torch.float64)
    mu = torch.linspace(d_min, d_max, num_rbf, dtype=d.dtype)
    sigma = (d_max - d_min) / num_rbf
    return torch.exp(-(((d[..., None] - mu) / sigma) ** 2))
