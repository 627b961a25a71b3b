"""Substrate (3D) and product (2D) molecule encoders"""

import torch
import torch.nn.functional as F
from torch import nn

from ..data.models import Molecule2D, Molecule3D
from ..data.vocab import ELEMENTS, NUM_BOND_TYPES
from ..errors import GraphError, ShapeError
from .attention import MASK_LOGIT
from .embeddings import pairwise_distances, rbf_featurize


class MolEmbedder3D(nn.Module):
    """Distance-RBF message passing over all atom pairs.

    Only interatomic distances enter, so the output is invariant to rigid
    motions of the conformer and equivariant to atom permutations.
    """

    def __init__(self, dim: int, num_rbf: int = 16, d_min: float = 0.0, d_max: float = 2.0, num_layers: int = 2):
        super().__init__()
        self.num_rbf = num_rbf
        self.d_min = d_min
        self.d_max = d_max
        self.atom_embedding = nn.Embedding(len(ELEMENTS), dim)
        self.edge_mlps = nn.ModuleList(
            nn.Sequential(nn.Linear(2 * dim + num_rbf, dim), nn.SiLU(), nn.Linear(dim, dim))
            for _ in range(num_layers)
        )
        self.node_mlps = nn.ModuleList(
            nn.Sequential(nn.Linear(2 * dim, dim), nn.SiLU(), nn.Linear(dim, dim))
            for _ in range(num_layers)
        )

    def forward(self, mol: Molecule3D) -> torch.Tensor:
        n = len(mol)
        mask = mol.atom_mask
        coords = torch.where(mask[:, None], mol.coords, torch.zeros_like(mol.coords))
        if mol.coords.shape != (n, 3):
            raise ShapeError(f"expected coords [{n}, 3], got {tuple(mol.coords.shape)}")
        h = self.atom_embedding(mol.atom_types) * mask[:, None]

        rbf = rbf_featurize(pairwise_distances(coords, coords), self.d_min, self.d_max, self.num_rbf)
        # edges j -> i between distinct unmasked atoms
        pair_mask = mask[:, None] & mask[None, :] & ~torch.eye(n, dtype=torch.bool)
        weights = pair_mask.to(h.dtype)
        counts = weights.sum(-1, keepdim=True).clamp_min(1.0)

        for edge_mlp, node_mlp in zip(self.edge_mlps, self.node_mlps):
            src = h[None, :, :].expand(n, n, -1)
            dst = h[:, None, :].expand(n, n, -1)
            messages = edge_mlp(torch.cat([src, dst, rbf], dim=-1))
            aggregate = (messages * weights[..., None]).sum(1) / counts
            h = (h + node_mlp(torch.cat([h, aggregate], dim=-1))) * mask[:, None]
        return h


class MolEmbedder2D(nn.Module):
    """Attentive message passing over bonds with an attention-pooled readout"""

    def __init__(self, dim: int, num_layers: int = 2, readout_rounds: int = 2):
        super().__init__()
        self.atom_embedding = nn.Embedding(len(ELEMENTS), dim)
        self.bond_embedding = nn.Embedding(NUM_BOND_TYPES, dim)
        self.message = nn.ModuleList(nn.Linear(2 * dim, dim) for _ in range(num_layers))
        self.align = nn.ModuleList(nn.Linear(2 * dim, 1) for _ in range(num_layers))
        self.update = nn.ModuleList(nn.GRUCell(dim, dim) for _ in range(num_layers))
        self.readout_align = nn.ModuleList(nn.Linear(2 * dim, 1) for _ in range(readout_rounds))
        self.readout_project = nn.ModuleList(nn.Linear(dim, dim) for _ in range(readout_rounds))
        self.readout_update = nn.ModuleList(nn.GRUCell(dim, dim) for _ in range(readout_rounds))

    def forward(self, mol: Molecule2D) -> torch.Tensor:
        n = len(mol)
        mask = mol.atom_mask
        bonds = mol.bonds.reshape(-1, 2)
        if bonds.numel() and ((bonds < 0) | (bonds >= n)).any():
            raise GraphError("bond references an atom outside the molecule")
        if bonds.numel() and (~mask[bonds].all(-1)).any():
            raise GraphError("bond references a masked atom")

        h = self.atom_embedding(mol.atom_types) * mask[:, None]
        dim = h.shape[-1]
        adjacency = torch.zeros(n, n, dtype=torch.bool)
        bond_features = torch.zeros(n, n, dim, dtype=h.dtype)
        if bonds.numel():
            adjacency[bonds[:, 0], bonds[:, 1]] = True
            if not torch.equal(adjacency, adjacency.T):
                raise GraphError("bond list is not symmetric")
            bond_features = bond_features.index_put(
                (bonds[:, 0], bonds[:, 1]), self.bond_embedding(mol.bond_types.reshape(-1))
            )
        adjacency_f = adjacency.to(h.dtype)

        for message, align, update in zip(self.message, self.align, self.update):
            # message from neighbour j to atom i
            m = message(torch.cat([h[None, :, :].expand(n, n, dim), bond_features], dim=-1))
            scores = align(torch.cat([h[:, None, :].expand(n, n, dim), m], dim=-1)).squeeze(-1)
            scores = F.leaky_relu(scores).masked_fill(~adjacency, MASK_LOGIT)
            attn = scores.softmax(dim=-1) * adjacency_f
            context = F.elu((attn[..., None] * m).sum(1))
            h = update(context, h) * mask[:, None]

        graph = h.sum(0)
        for align, project, update in zip(self.readout_align, self.readout_project, self.readout_update):
            scores = align(torch.cat([graph.expand(n, dim), h], dim=-1)).squeeze(-1)
            scores = F.leaky_relu(scores).masked_fill(~mask, MASK_LOGIT)
            attn = scores.softmax(dim=-1) * mask.to(h.dtype)
            context = F.elu((attn[:, None] * project(h)).sum(0))
            graph = update(context[None], graph[None])[0]
        return graph


def encode_molecule_3d(mol: Molecule3D, params: MolEmbedder3D) -> torch.Tensor:
    """Per-atom substrate embeddings ``[L, d]``; masked atoms give zero rows"""
    return params(mol)


def encode_molecule_2d(mol: Molecule2D, params: MolEmbedder2D) -> torch.Tensor:
    """One pooled product vector ``[d]``"""
    return params(mol)
