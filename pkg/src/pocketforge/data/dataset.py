"""Assemble curated training records from raw inputs"""

import logging
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
import torch

from ..geometry.rigid import ANGSTROM_TO_MODEL, Rigid
from .loader import load_raw_records
from .models import EnzymeReactionRecord, Molecule, Molecule2D, Molecule3D, Pocket, RawRecord
from .pocket import DEFAULT_RADIUS, extract_pocket, filter_min_residues
from .vocab import CoEvoVocabulary, bond_type_index, element_index, tokenize_coevolution

logger = logging.getLogger(__name__)


def molecule_to_3d(molecule: Molecule, origin: Optional[np.ndarray] = None) -> Molecule3D:
    """Element categories and model-unit coordinates relative to ``origin`` (Å)"""
    origin = np.zeros(3) if origin is None else origin
    coords = torch.as_tensor((molecule.coords - origin) * ANGSTROM_TO_MODEL, dtype=torch.float64)
    return Molecule3D(
        atom_types=torch.tensor([element_index(e) for e in molecule.elements], dtype=torch.long),
        coords=coords,
        atom_mask=torch.ones(molecule.num_atoms, dtype=torch.bool),
    )


def molecule_to_2d(molecule: Molecule) -> Molecule2D:
    """Graph view with both directions of every bond"""
    pairs, types = [], []
    for i, j, order in molecule.bonds:
        category = bond_type_index(order)
        pairs.extend([(i, j), (j, i)])
        types.extend([category, category])
    return Molecule2D(
        atom_types=torch.tensor([element_index(e) for e in molecule.elements], dtype=torch.long),
        bonds=torch.tensor(pairs, dtype=torch.long).reshape(-1, 2),
        bond_types=torch.tensor(types, dtype=torch.long),
        atom_mask=torch.ones(molecule.num_atoms, dtype=torch.bool),
    )


def center_pocket(pocket: Pocket, origin: np.ndarray) -> Pocket:
    """Shift pocket frames so ``origin`` (Å) becomes the model-unit origin"""
    shift = torch.as_tensor(origin * ANGSTROM_TO_MODEL, dtype=torch.float64)
    frames = Rigid(pocket.frames.rots, pocket.frames.trans - shift)
    return Pocket(
        frames=frames,
        aatypes=pocket.aatypes,
        residue_index=pocket.residue_index,
        residue_mask=pocket.residue_mask,
    )


def assemble_record(
    raw: RawRecord,
    vocab: Optional[CoEvoVocabulary] = None,
    radius: float = DEFAULT_RADIUS,
    n_msa: int = 8,
    n_token: int = 128,
) -> EnzymeReactionRecord:
    """
    Turn a raw record into a training record

    The pocket is cut around the substrate and everything is centered on
    the substrate centroid and scaled to model units.
    """
    pocket = extract_pocket(raw.protein, raw.substrate, radius)
    origin = raw.substrate.centroid
    coevo = None
    if raw.alignment is not None:
        vocab = vocab or CoEvoVocabulary.load()
        coevo = tokenize_coevolution(
            raw.alignment.enzyme_rows, raw.alignment.reaction_rows, vocab, n_token=n_token, n_msa=n_msa
        )
    return EnzymeReactionRecord(
        record_id=raw.record_id,
        pocket=center_pocket(pocket, origin),
        sequence=raw.sequence,
        origin=origin,
        reaction_id=raw.reaction_id,
        substrate_id=raw.substrate.topology_digest(),
        substrate=molecule_to_3d(raw.substrate, origin),
        product=molecule_to_2d(raw.product) if raw.product is not None else None,
        product_id=raw.product.topology_digest() if raw.product is not None else None,
        ec=raw.ec - 1 if raw.ec is not None else None,
        coevo=coevo,
        affinity=raw.affinity,
        source=raw,
    )


def assemble_records(
    raws: Sequence[RawRecord],
    vocab: Optional[CoEvoVocabulary] = None,
    radius: float = DEFAULT_RADIUS,
    n_msa: int = 8,
    n_token: int = 128,
    min_residues: Optional[int] = None,
) -> List[EnzymeReactionRecord]:
    """Assemble every record, dropping pockets below ``min_residues`` when given"""
    vocab = vocab or CoEvoVocabulary.load()
    records = []
    for raw in raws:
        record = assemble_record(raw, vocab, radius=radius, n_msa=n_msa, n_token=n_token)
        if min_residues is not None and not filter_min_residues(record.pocket, min_residues):
            logger.warning(
                "%s: pocket has %d residues (< %d), dropped", raw.record_id, len(record.pocket), min_residues
            )
            continue
        records.append(record)
    return records


def load_dataset(
    manifest: Union[str, Path],
    labels: Optional[Union[str, Path]] = None,
    vocab: Optional[CoEvoVocabulary] = None,
    radius: float = DEFAULT_RADIUS,
    n_msa: int = 8,
    n_token: int = 128,
) -> List[EnzymeReactionRecord]:
    """Read a manifest and assemble its records in manifest order"""
    raws = load_raw_records(manifest, labels)
    return assemble_records(raws, vocab, radius=radius, n_msa=n_msa, n_token=n_token)
