"""The conditional vector-field network and its prediction type"""

import logging
from dataclasses import asdict, dataclass, fields
from typing import Any, Dict, Optional, Tuple

import torch
from torch import nn

from ..data.models import Molecule2D, Molecule3D
from ..errors import DomainError, NumericError, ShapeError
from ..flows.discrete import AA_SPACE, COEVO_SPACE, EC_SPACE
from ..flows.state import FlowState
from ..geometry.rigid import Rigid, backbone_atoms
from ..geometry.so3 import so3_log
from .attention import CrossAttentionFusion, MultiHeadAttention
from .coevo import CoEvoFormer, encode_coevolution, pool_over_depth
from .embeddings import distogram, index_embedding, pairwise_distances, rbf_featurize, timestep_embedding
from .ipa import StructureBlock
from .molecule import MolEmbedder2D, MolEmbedder3D, encode_molecule_2d, encode_molecule_3d

logger = logging.getLogger(__name__)

MIN_DIVISOR = 0.05


@dataclass
class ModelConfig:
    """Network widths and depths"""

    node_dim: int = 64
    edge_dim: int = 32
    num_blocks: int = 3
    num_heads: int = 4
    ipa_head_dim: int = 16
    num_query_points: int = 4
    num_value_points: int = 4
    num_bins: int = 22
    min_bin: float = 1e-3
    max_bin: float = 2.0
    rbf_bins: int = 16
    rbf_d_min: float = 0.0
    rbf_d_max: float = 2.0
    mol_layers: int = 2
    mpnn_layers: int = 2
    readout_rounds: int = 2
    coevo_dim: int = 32
    coevo_layers: int = 2
    coevo_heads: int = 4
    n_msa: int = 8
    n_token: int = 128

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in values.items() if k in known})


@dataclass
class Prediction:
    """Network output at one time point; optional heads are None when not run"""

    frames1_hat: Rigid
    aa_logits: torch.Tensor  # [N, 20]
    atoms_hat: torch.Tensor  # [N, 4, 3]
    affinity_hat: torch.Tensor  # scalar
    ec_logits: Optional[torch.Tensor] = None  # [7]
    coevo_logits: Optional[torch.Tensor] = None  # [M, T, 64]


def _check_finite(value: torch.Tensor, stage: str) -> torch.Tensor:
    if not torch.isfinite(value).all():
        raise NumericError(f"non-finite values in {stage}", stage=stage)
    return value


class VectorFieldNetwork(nn.Module):
    """Predicts clean frames, amino acids, EC class, co-evolution tokens and
    affinity from a corrupted FlowState and the reaction's molecules."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        c = config
        d = c.node_dim

        self.aa_embedding = nn.Embedding(AA_SPACE.num_states, d)
        self.node_in = nn.Sequential(nn.Linear(3 * d + 1, d), nn.SiLU(), nn.Linear(d, d), nn.LayerNorm(d))
        self.node_project = nn.Linear(d, c.edge_dim)
        self.edge_in = nn.Sequential(
            nn.Linear(3 * c.edge_dim + 2 * c.num_bins, c.edge_dim),
            nn.SiLU(),
            nn.Linear(c.edge_dim, c.edge_dim),
            nn.LayerNorm(c.edge_dim),
        )

        self.substrate_encoder = MolEmbedder3D(
            d, num_rbf=c.rbf_bins, d_min=c.rbf_d_min, d_max=c.rbf_d_max, num_layers=c.mol_layers
        )
        self.substrate_fusion = CrossAttentionFusion(d, d, heads=c.num_heads)
        self.ligand_node_rbf = nn.Linear(c.rbf_bins, d)
        self.pocket_edge_rbf = nn.Linear(c.rbf_bins, c.edge_dim)
        self.product_encoder = MolEmbedder2D(d, num_layers=c.mpnn_layers, readout_rounds=c.readout_rounds)
        self.product_fusion = CrossAttentionFusion(d, d, heads=c.num_heads)

        self.blocks = nn.ModuleList(
            StructureBlock(
                node_dim=d,
                edge_dim=c.edge_dim,
                ligand_dim=d,
                heads=c.num_heads,
                scalar_dim=c.ipa_head_dim,
                query_points=c.num_query_points,
                value_points=c.num_value_points,
            )
            for _ in range(c.num_blocks)
        )

        self.aa_head = nn.Sequential(nn.Linear(d, d), nn.SiLU(), nn.Linear(d, AA_SPACE.num_real_states))
        self.ec_embedding = nn.Embedding(EC_SPACE.num_states, d)
        self.ec_attention = MultiHeadAttention(d, d, d, heads=c.num_heads)
        self.ec_head = nn.Linear(d, EC_SPACE.num_real_states)
        self.coevo_encoder = CoEvoFormer(c.coevo_dim, c.n_token, num_layers=c.coevo_layers, heads=c.coevo_heads)
        self.coevo_attention = MultiHeadAttention(c.coevo_dim, d, c.coevo_dim, heads=c.coevo_heads)
        self.coevo_head = nn.Linear(c.coevo_dim, COEVO_SPACE.num_real_states)
        self.affinity_head = nn.Sequential(nn.Linear(d, d), nn.SiLU(), nn.Linear(d, 1))

    def _check_state(self, state: FlowState) -> None:
        n = state.aatypes_t.shape[0]
        shapes = {
            "frames": state.frames_t.trans.shape[0],
            "residue_mask": state.residue_mask.shape[0],
            "residue_index": state.residue_index.shape[0],
        }
        bad = {name: size for name, size in shapes.items() if size != n}
        if bad:
            raise ShapeError(f"state fields disagree with {n} residues: {bad}")
        if state.coevo_t is not None and state.coevo_t.tokens.shape != state.coevo_t.cell_mask.shape:
            raise ShapeError("co-evolution tokens and cell mask differ in shape")

    def forward(
        self,
        state: FlowState,
        substrate: Optional[Molecule3D] = None,
        product: Optional[Molecule2D] = None,
        self_condition: Optional[Prediction] = None,
    ) -> Prediction:
        self._check_state(state)
        c = self.config
        mask = state.residue_mask
        mask_f = mask.to(torch.float64)
        n = mask.shape[0]
        trans_t = state.frames_t.trans

        # Nodes
        t = torch.full((n,), float(state.t), dtype=torch.float64)
        node = torch.cat(
            [
                index_embedding(state.residue_index, c.node_dim),
                timestep_embedding(t, c.node_dim),
                self.aa_embedding(state.aatypes_t),
                mask_f[:, None],
            ],
            dim=-1,
        )
        single = _check_finite(self.node_in(node), "node features")

        # Edges
        sc_trans = (
            self_condition.frames1_hat.trans.detach() if self_condition is not None else torch.zeros_like(trans_t)
        )
        projected = self.node_project(single)
        relative = state.residue_index[:, None] - state.residue_index[None, :]
        edge = torch.cat(
            [
                projected[:, None, :].expand(n, n, -1),
                projected[None, :, :].expand(n, n, -1),
                index_embedding(relative, c.edge_dim),
                distogram(trans_t, c.min_bin, c.max_bin, c.num_bins),
                distogram(sc_trans, c.min_bin, c.max_bin, c.num_bins),
            ],
            dim=-1,
        )
        pair = _check_finite(self.edge_in(edge), "edge features")
        pair = pair + self.pocket_edge_rbf(
            rbf_featurize(pairwise_distances(trans_t, trans_t), c.rbf_d_min, c.rbf_d_max, c.rbf_bins)
        )

        # Substrate: attention fusion plus pooled pocket-atom distances
        ligand = None
        if substrate is not None:
            atoms = _check_finite(encode_molecule_3d(substrate, self.substrate_encoder), "substrate encoder")
            single = self.substrate_fusion(single, atoms, substrate.atom_mask)
            lig_coords = torch.where(
                substrate.atom_mask[:, None], substrate.coords, torch.zeros_like(substrate.coords)
            )
            lig_rbf = rbf_featurize(pairwise_distances(trans_t, lig_coords), c.rbf_d_min, c.rbf_d_max, c.rbf_bins)
            lig_weights = substrate.atom_mask.to(torch.float64)
            lig_rbf = (lig_rbf * lig_weights[None, :, None]).sum(1) / lig_weights.sum().clamp_min(1.0)
            single = single + self.ligand_node_rbf(lig_rbf)
            ligand = (atoms, lig_coords, substrate.atom_mask)
            _check_finite(single, "substrate fusion")

        # Product
        if product is not None:
            pooled = _check_finite(encode_molecule_2d(product, self.product_encoder), "product encoder")
            single = self.product_fusion(single, pooled[None, :])

        # Trunk
        frames = state.frames_t
        for i, block in enumerate(self.blocks):
            single, pair, frames = block(single, pair, frames, mask, ligand)
            _check_finite(single, f"trunk block {i}")
            _check_finite(frames.trans, f"trunk block {i} frames")

        # Heads
        aa_logits = self.aa_head(single) * mask_f[:, None]
        node_weights = mask_f / mask_f.sum().clamp_min(1.0)
        pooled_nodes = (single * node_weights[:, None]).sum(0)
        affinity = self.affinity_head(pooled_nodes).squeeze(-1)

        ec_logits = None
        if state.ec_t is not None:
            query = self.ec_embedding(state.ec_t.reshape(1))
            ec_logits = self.ec_head(self.ec_attention(query, single, mask))[0]

        coevo_logits = None
        if state.coevo_t is not None:
            cell_mask = state.coevo_t.cell_mask
            grid = encode_coevolution(state.coevo_t, self.coevo_encoder)
            context = self.coevo_attention(pool_over_depth(grid, cell_mask), single, mask)
            coevo_logits = self.coevo_head(grid + context[None]) * cell_mask[..., None].to(torch.float64)
            _check_finite(coevo_logits, "co-evolution head")

        _check_finite(aa_logits, "amino-acid head")
        _check_finite(affinity, "affinity head")
        return Prediction(
            frames1_hat=frames,
            aa_logits=aa_logits,
            atoms_hat=backbone_atoms(frames),
            affinity_hat=affinity,
            ec_logits=ec_logits,
            coevo_logits=coevo_logits,
        )


def build_network(config: ModelConfig, seed: int = 0) -> VectorFieldNetwork:
    """Construct a float64 network with parameters drawn from ``seed``"""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        network = VectorFieldNetwork(config).double()
    return network


def clamped_divisor(t: float) -> float:
    return max(1.0 - t, MIN_DIVISOR)


def compute_vector_fields(pred: Prediction, state: FlowState) -> Tuple[torch.Tensor, torch.Tensor]:
    """Translation and rotation tangent fields ``[N, 3]`` each.

    The rotation field is expressed in the local tangent at r_t, so an Euler
    step is ``r_t @ so3_exp(dt * field)``.
    """
    if state.t >= 1.0:
        raise DomainError(f"vector fields are defined for t < 1, got t={state.t}")
    divisor = clamped_divisor(state.t)
    trans_vf = (pred.frames1_hat.trans - state.frames_t.trans) / divisor
    relative = state.frames_t.rots.transpose(-1, -2) @ pred.frames1_hat.rots
    rot_vf = so3_log(relative, check=False) / divisor
    return trans_vf, rot_vf
