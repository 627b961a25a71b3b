"""Pocket extraction around a placed ligand"""

import logging
from typing import List, Optional, Union

import numpy as np
import torch
from scipy.spatial import cKDTree

from ..errors import EmptyPocketError
from ..geometry.rigid import ANGSTROM_TO_MODEL, MODEL_TO_ANGSTROM, frames_from_backbone
from .models import Molecule, Molecule3D, Pocket, ProteinStructure
from .vocab import sequence_to_indices

logger = logging.getLogger(__name__)

DEFAULT_RADIUS = 10.0
MIN_POCKET_RESIDUES = 32


def _ligand_angstrom(ligand: Union[Molecule, Molecule3D, np.ndarray]) -> np.ndarray:
    if isinstance(ligand, Molecule):
        return ligand.coords
    if isinstance(ligand, Molecule3D):
        coords = ligand.coords[ligand.atom_mask].detach().cpu().numpy()
        return coords * MODEL_TO_ANGSTROM
    return np.asarray(ligand, dtype=np.float64).reshape(-1, 3)


def pocket_residue_positions(
    protein: ProteinStructure,
    ligand: Union[Molecule, Molecule3D, np.ndarray],
    radius: float = DEFAULT_RADIUS,
) -> List[int]:
    """Positions (0-based, in chain order) of residues whose CA lies within
    ``radius`` Å of any ligand atom"""
    ligand_xyz = _ligand_angstrom(ligand)
    if len(protein) == 0 or ligand_xyz.shape[0] == 0:
        return []
    tree = cKDTree(ligand_xyz)
    distances, _ = tree.query(protein.ca, k=1, distance_upper_bound=radius * (1 + 1e-12))
    return [i for i, d in enumerate(distances) if d <= radius]


def pocket_from_positions(protein: ProteinStructure, positions: List[int]) -> Pocket:
    """Frames (model units, input frame) and amino acids of the selected residues"""
    backbone = torch.as_tensor(protein.backbone[positions], dtype=torch.float64) * ANGSTROM_TO_MODEL
    frames = frames_from_backbone(backbone[:, 0], backbone[:, 1], backbone[:, 2])
    residues = [protein.residues[i] for i in positions]
    return Pocket(
        frames=frames,
        aatypes=sequence_to_indices("".join(r.aa for r in residues)),
        residue_index=torch.tensor([r.index for r in residues], dtype=torch.long),
        residue_mask=torch.ones(len(residues), dtype=torch.bool),
    )


def extract_pocket(
    protein: ProteinStructure,
    ligand: Union[Molecule, Molecule3D, np.ndarray],
    radius_angstrom: float = DEFAULT_RADIUS,
) -> Pocket:
    """
    Cut the binding pocket out of a structure

    Args:
        protein: Backbone structure in Å
        ligand: Ligand placed in the protein's frame; a Molecule3D is read in
            model units, anything else in Å
        radius_angstrom: CA-to-any-ligand-atom cutoff

    Returns:
        Pocket in chain order, frames built from N/CA/C with CA as origin

    Raises:
        EmptyPocketError: no residue lies within the radius
    """
    positions = pocket_residue_positions(protein, ligand, radius_angstrom)
    if not positions:
        raise EmptyPocketError(
            f"no residue of {protein.name or 'structure'} within {radius_angstrom} Å of the ligand"
        )
    logger.debug("%s: %d pocket residues within %.1f Å", protein.name, len(positions), radius_angstrom)
    return pocket_from_positions(protein, positions)


def filter_min_residues(pocket: Optional[Pocket], min_n: int = MIN_POCKET_RESIDUES) -> bool:
    """Accept iff the pocket has at least ``min_n`` residues"""
    return pocket is not None and len(pocket) >= min_n
