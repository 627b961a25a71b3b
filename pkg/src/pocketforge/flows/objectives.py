"""Training losses and their stage-aware combination"""

from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional, Tuple

import torch
import torch.nn.functional as F

from ..data.models import EnzymeReactionRecord
from ..errors import ConfigurationError, DomainError, InvalidStateError
from ..geometry.rigid import backbone_atoms
from ..geometry.so3 import so3_log
from ..model.embeddings import pairwise_distances
from ..model.network import Prediction, clamped_divisor
from .discrete import AA_SPACE, COEVO_SPACE, EC_SPACE
from .state import FlowState

COMPONENTS = ("trans", "rot", "aa", "ec", "coevo", "inter", "dist", "kd")


class Stage(Enum):
    """Hierarchical pre-training stage"""

    BACKBONE = "backbone"
    LIGAND = "ligand"
    ENZYME = "enzyme"


@dataclass
class LossConfig:
    """Loss weights plus the constants of the interaction and distance terms"""

    trans: float = 1.0
    rot: float = 1.0
    aa: float = 1.0
    ec: float = 1.0
    coevo: float = 1.0
    inter: float = 1.0
    dist: float = 1.0
    kd: float = 1.0
    surface_rho: float = 2.0
    surface_gamma: float = 6.0
    distance_threshold: float = 0.8  # model units (8 Å)
    length_scale: float = 10.0  # model units -> Å for the surface term
    enzyme_geometry: bool = True

    def weight(self, component: str) -> float:
        return getattr(self, component)


@dataclass
class LossBreakdown:
    """Per-component losses; components not active in the stage are None"""

    total: torch.Tensor
    weights: LossConfig
    trans: Optional[torch.Tensor] = None
    rot: Optional[torch.Tensor] = None
    aa: Optional[torch.Tensor] = None
    ec: Optional[torch.Tensor] = None
    coevo: Optional[torch.Tensor] = None
    inter: Optional[torch.Tensor] = None
    dist: Optional[torch.Tensor] = None
    kd: Optional[torch.Tensor] = None

    def active(self) -> Dict[str, torch.Tensor]:
        return {name: getattr(self, name) for name in COMPONENTS if getattr(self, name) is not None}

    def as_record(self) -> Dict[str, Optional[float]]:
        record = {name: (None if value is None else float(value)) for name, value in
                  ((n, getattr(self, n)) for n in COMPONENTS)}
        record["total"] = float(self.total)
        return record


def flow_matching_losses(
    pred: Prediction, state: FlowState, target: EnzymeReactionRecord
) -> Tuple[torch.Tensor, torch.Tensor]:
    """Squared errors of the translation and rotation vector fields.

    Both the predicted field and the target use the clamped divisor
    max(1 - t, 0.05); for t <= 0.95 the translation target equals x1 - x0,
    above it a perfect prediction still scores zero.
    Sums run over unmasked residues.
    """
    if state.t >= 1.0:
        raise DomainError(f"flow-matching losses are defined for t < 1, got t={state.t}")
    divisor = clamped_divisor(state.t)
    mask = state.residue_mask.to(torch.float64)
    clean = target.pocket.frames
    frames_t = state.frames_t

    trans_pred = (pred.frames1_hat.trans - frames_t.trans) / divisor
    # equals (x1 - x_t) / divisor on the interpolant
    trans_target = (clean.trans - state.prior.trans) * ((1.0 - state.t) / divisor)
    trans = (((trans_pred - trans_target) ** 2).sum(-1) * mask).sum()

    rots_t_inv = frames_t.rots.transpose(-1, -2)
    rot_pred = so3_log(rots_t_inv @ pred.frames1_hat.rots, check=False) / divisor
    rot_target = so3_log(rots_t_inv @ clean.rots, check=False) / divisor
    rot = (((rot_pred - rot_target) ** 2).sum(-1) * mask).sum()
    return trans, rot


def _masked_cross_entropy(logits: torch.Tensor, targets: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    per_site = F.cross_entropy(logits.reshape(-1, logits.shape[-1]), targets.reshape(-1), reduction="none")
    weights = mask.reshape(-1).to(per_site.dtype)
    return (per_site * weights).sum() / weights.sum().clamp_min(1.0)


def _check_targets(targets: torch.Tensor, mask: torch.Tensor, num_real: int, name: str) -> None:
    live = targets[mask]
    if ((live < 0) | (live >= num_real)).any():
        raise InvalidStateError(f"{name} targets must be real states in [0, {num_real}), mask is not a target")


def discrete_losses(
    pred: Prediction, target: EnzymeReactionRecord
) -> Tuple[torch.Tensor, Optional[torch.Tensor], Optional[torch.Tensor]]:
    """Cross-entropies for amino acids (mean over residues), the EC class
    and co-evolution cells (mean over real cells).  EC/co-evolution terms
    are None when either the logits or the targets are missing."""
    pocket = target.pocket
    _check_targets(pocket.aatypes, pocket.residue_mask, AA_SPACE.num_real_states, "amino-acid")
    aa = _masked_cross_entropy(pred.aa_logits, pocket.aatypes, pocket.residue_mask)

    ec = None
    if pred.ec_logits is not None and target.ec is not None:
        ec_target = torch.tensor([target.ec])
        _check_targets(ec_target, torch.ones(1, dtype=torch.bool), EC_SPACE.num_real_states, "EC")
        ec = F.cross_entropy(pred.ec_logits[None, :], ec_target)

    coevo = None
    if pred.coevo_logits is not None and target.coevo is not None:
        grid = target.coevo
        _check_targets(grid.tokens, grid.cell_mask, COEVO_SPACE.num_real_states, "co-evolution")
        coevo = _masked_cross_entropy(pred.coevo_logits, grid.tokens, grid.cell_mask)
    return aa, ec, coevo


def surface_value(a: torch.Tensor, ligand_coords: torch.Tensor, rho: float = 2.0, gamma: float = 6.0,
                  ligand_mask: Optional[torch.Tensor] = None) -> torch.Tensor:
    """S(a) = -rho * log(sum_j exp(-|a - a_j|^2 / rho)), via logsumexp.

    ``a`` may carry leading dimensions ``[..., 3]``; ``gamma`` is accepted so
    the level set and the function travel together but does not enter S.
    """
    del gamma
    diff = a[..., None, :] - ligand_coords
    scores = -(diff * diff).sum(-1) / rho
    if ligand_mask is not None:
        scores = scores.masked_fill(~ligand_mask, float("-inf"))
    return -rho * torch.logsumexp(scores, dim=-1)


def interaction_loss(
    atoms_hat: torch.Tensor,
    ligand_coords: torch.Tensor,
    rho: float,
    gamma: float,
    residue_mask: torch.Tensor,
    ligand_mask: Optional[torch.Tensor] = None,
    length_scale: float = 1.0,
) -> torch.Tensor:
    """Hinge max(0, gamma - S) summed over every atom of unmasked residues.

    ``length_scale`` converts coordinates to the units rho and gamma are
    quoted in before S is evaluated.
    """
    surface = surface_value(atoms_hat * length_scale, ligand_coords * length_scale, rho, gamma, ligand_mask)
    hinge = F.relu(gamma - surface)
    return (hinge * residue_mask.to(hinge.dtype)[:, None]).sum()


def atom_ligand_distances(atoms: torch.Tensor, ligand_coords: torch.Tensor) -> torch.Tensor:
    """Distances ``[N, 4, L]`` from backbone atoms to substrate atoms"""
    return pairwise_distances(atoms, ligand_coords[None].expand(atoms.shape[0], -1, -1))


def distance_loss(d_true: torch.Tensor, d_pred: torch.Tensor, threshold: float = 0.8,
                  mask: Optional[torch.Tensor] = None) -> torch.Tensor:
    """Mean squared error over entries whose true distance is below ``threshold``.

    An empty gate gives 0.
    """
    gate = d_true < threshold
    if mask is not None:
        gate = gate & mask
    count = gate.sum()
    if count == 0:
        return d_pred.sum() * 0.0
    return (((d_true - d_pred) ** 2) * gate.to(d_pred.dtype)).sum() / count


def _require(condition: bool, stage: Stage, what: str) -> None:
    if not condition:
        raise ConfigurationError(f"{stage.value} stage needs {what}")


def total_loss(
    pred: Prediction,
    state: FlowState,
    targets: EnzymeReactionRecord,
    stage: Stage,
    weights: LossConfig,
    affinity_target: Optional[float] = None,
) -> LossBreakdown:
    """Weighted sum of the components active in ``stage``.

    backbone: trans, rot, aa.  ligand: adds inter, dist, kd.  enzyme: trans,
    rot, aa, ec, coevo, plus inter and dist when ``weights.enzyme_geometry``
    is set and a substrate is present.

    Args:
        affinity_target: Standardized affinity; defaults to the raw label
    """
    stage = Stage(stage)
    parts: Dict[str, torch.Tensor] = {}
    trans, rot = flow_matching_losses(pred, state, targets)
    aa, ec, coevo = discrete_losses(pred, targets)
    parts.update(trans=trans, rot=rot, aa=aa)

    geometry = stage is Stage.LIGAND or (
        stage is Stage.ENZYME and weights.enzyme_geometry and targets.substrate is not None
    )
    if stage is Stage.LIGAND:
        _require(targets.substrate is not None, stage, "a substrate")
        _require(targets.affinity is not None, stage, "an affinity label")
        kd_target = targets.affinity if affinity_target is None else affinity_target
        parts["kd"] = (pred.affinity_hat - kd_target) ** 2
    if stage is Stage.ENZYME:
        _require(targets.ec is not None, stage, "an EC label")
        _require(targets.coevo is not None, stage, "a co-evolution grid")
        _require(targets.product is not None, stage, "a product")
        _require(ec is not None, stage, "EC logits (state without ec_t)")
        _require(coevo is not None, stage, "co-evolution logits (state without coevo_t)")
        parts.update(ec=ec, coevo=coevo)
    if geometry:
        substrate = targets.substrate
        residue_mask = state.residue_mask
        parts["inter"] = interaction_loss(
            pred.atoms_hat,
            substrate.coords,
            weights.surface_rho,
            weights.surface_gamma,
            residue_mask,
            substrate.atom_mask,
            length_scale=weights.length_scale,
        )
        d_true = atom_ligand_distances(backbone_atoms(targets.pocket.frames), substrate.coords)
        d_pred = atom_ligand_distances(pred.atoms_hat, substrate.coords)
        pair_mask = residue_mask[:, None, None] & substrate.atom_mask[None, None, :]
        parts["dist"] = distance_loss(d_true, d_pred, weights.distance_threshold, pair_mask.expand_as(d_true))

    total = sum(weights.weight(name) * value for name, value in parts.items())
    return LossBreakdown(total=total, weights=weights, **parts)
