"""Procedural enzyme-reaction records for desk-scale training"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Union

import numpy as np
import torch
from scipy.spatial.transform import Rotation

from ..flows.discrete import AA_SPACE, COEVO_SPACE, EC_SPACE
from ..geometry.rigid import BACKBONE_TEMPLATE_ANGSTROM, Rigid, sample_frames_prior
from .models import (
    CoEvoMatrix,
    EnzymeReactionRecord,
    Molecule,
    Molecule2D,
    Molecule3D,
    MultipleAlignment,
    Pocket,
    ProteinStructure,
    RawRecord,
    Residue,
)
from .vocab import AMINO_ACIDS, GAP, OTHER_ELEMENT, CoEvoVocabulary, indices_to_sequence

logger = logging.getLogger(__name__)

GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))
LIGAND_ELEMENTS = ("C", "C", "C", "N", "O", "S")


@dataclass
class SyntheticConfig:
    """Sizes of the generated dataset; distances in Å"""

    records: int = 5
    pocket_residues: int = 40
    distal_residues: int = 12
    shell_radius: float = 6.5
    distal_radius: float = 18.0
    ligand_radius: float = 2.0
    jitter: float = 0.3
    min_ligand_atoms: int = 3
    max_ligand_atoms: int = 6
    msa_rows: int = 8
    mutation_rate: float = 0.1
    gap_rate: float = 0.02


def fibonacci_shell(n: int, radius: float) -> np.ndarray:
    """``n`` nearly uniform points on a sphere of ``radius``"""
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(1.0 - z * z)
    phi = GOLDEN_ANGLE * np.arange(n)
    return radius * np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)


def _ball(rng: np.random.Generator, n: int, radius: float) -> np.ndarray:
    directions = rng.normal(size=(n, 3))
    directions /= np.linalg.norm(directions, axis=-1, keepdims=True)
    return directions * radius * rng.uniform(size=(n, 1)) ** (1.0 / 3.0)


def _residues(rng: np.random.Generator, ca: np.ndarray, sequence: str, first_index: int = 1) -> List[Residue]:
    template = np.asarray(BACKBONE_TEMPLATE_ANGSTROM)
    rotations = Rotation.random(len(ca), random_state=rng).as_matrix()
    return [
        Residue(index=first_index + k, aa=aa, coords=template @ rot.T + x)
        for k, (aa, rot, x) in enumerate(zip(sequence, rotations, ca))
    ]


def random_ligand(rng: np.random.Generator, center: np.ndarray, config: SyntheticConfig, name: str) -> Molecule:
    """A small chain molecule with every atom within ``ligand_radius`` of ``center``"""
    n = int(rng.integers(config.min_ligand_atoms, config.max_ligand_atoms + 1))
    elements = [str(e) for e in rng.choice(LIGAND_ELEMENTS, size=n)]
    coords = center + _ball(rng, n, config.ligand_radius)
    bonds = [(i, i + 1, int(rng.choice([1, 1, 2]))) for i in range(n - 1)]
    return Molecule(elements=elements, coords=coords, bonds=bonds, name=name)


def product_of(substrate: Molecule, rng: np.random.Generator, name: str) -> Molecule:
    """The substrate with one atom substituted and a hydroxyl added"""
    elements = list(substrate.elements)
    k = int(rng.integers(len(elements)))
    elements[k] = "N" if elements[k] != "N" else "O"
    coords = np.vstack([substrate.coords, substrate.coords[k] + np.array([1.4, 0.0, 0.0])])
    bonds = list(substrate.bonds) + [(k, len(elements), 1)]
    return Molecule(elements=elements + ["O"], coords=coords, bonds=bonds, name=name)


def reaction_string(substrate: Molecule, product: Optional[Molecule]) -> str:
    right = "".join(product.elements) if product is not None else ""
    return "".join(substrate.elements) + ">>" + right


def mutated_rows(rng: np.random.Generator, sequence: str, config: SyntheticConfig) -> List[str]:
    """The sequence itself followed by point-mutated homologs"""
    rows = [sequence]
    for _ in range(config.msa_rows - 1):
        letters = []
        for aa in sequence:
            u = rng.uniform()
            if u < config.gap_rate:
                letters.append(GAP)
            elif u < config.gap_rate + config.mutation_rate:
                letters.append(AMINO_ACIDS[int(rng.integers(len(AMINO_ACIDS)))])
            else:
                letters.append(aa)
        rows.append("".join(letters))
    return rows


def generate_synthetic_record(rng: np.random.Generator, record_id: str, config: SyntheticConfig) -> RawRecord:
    center = rng.uniform(-20.0, 20.0, size=3)
    shell_rotation = Rotation.random(random_state=rng).as_matrix()
    pocket_ca = fibonacci_shell(config.pocket_residues, config.shell_radius) @ shell_rotation.T
    pocket_ca = center + pocket_ca + rng.uniform(-config.jitter, config.jitter, size=pocket_ca.shape)
    distal_ca = center + fibonacci_shell(config.distal_residues, config.distal_radius) @ shell_rotation.T

    n_res = config.pocket_residues + config.distal_residues
    sequence = "".join(AMINO_ACIDS[int(i)] for i in rng.integers(len(AMINO_ACIDS), size=n_res))
    residues = _residues(rng, np.vstack([pocket_ca, distal_ca]), sequence)
    protein = ProteinStructure(residues=residues, name=record_id)

    substrate = random_ligand(rng, center, config, name=f"{record_id}_substrate")
    product = product_of(substrate, rng, name=f"{record_id}_product")
    enzyme_rows = mutated_rows(rng, sequence[: config.pocket_residues], config)
    reaction = reaction_string(substrate, product)
    alignment = MultipleAlignment(enzyme_rows=enzyme_rows, reaction_rows=[reaction] * len(enzyme_rows))
    return RawRecord(
        record_id=record_id,
        protein=protein,
        substrate=substrate,
        product=product,
        alignment=alignment,
        ec=int(rng.integers(1, 8)),
        affinity=float(6.0 + 1.5 * rng.normal()),
    )


def generate_synthetic_dataset(
    rng: Union[int, np.random.Generator], config: Optional[SyntheticConfig] = None
) -> List[RawRecord]:
    """
    Build ``config.records`` records

    Pocket residues sit on a jittered shell around the ligand, close enough
    that every one of them is within 10 Å of a ligand atom; distal residues
    sit far outside that radius.  The same seed gives the same dataset.
    """
    config = config or SyntheticConfig()
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    records = [generate_synthetic_record(rng, f"syn{k:04d}", config) for k in range(config.records)]
    logger.info("Generated %d synthetic records", len(records))
    return records


def canonical_instance(
    n_msa: int = 2, n_token: int = 8, seed: int = 0, n_res: int = 4, n_atoms: int = 3
) -> EnzymeReactionRecord:
    """A tiny fully labelled record (4 residues, 3-atom substrate) for gradient checks"""
    generator = torch.Generator().manual_seed(seed)
    prior = sample_frames_prior(n_res, generator)
    frames = Rigid(prior.rots, 0.5 * prior.trans)
    aatypes = torch.randint(AA_SPACE.num_real_states, (n_res,), generator=generator)

    atom_types = torch.randint(OTHER_ELEMENT, (n_atoms,), generator=generator)
    substrate = Molecule3D(
        atom_types=atom_types,
        coords=0.2 * torch.randn(n_atoms, 3, generator=generator, dtype=torch.float64),
        atom_mask=torch.ones(n_atoms, dtype=torch.bool),
    )
    chain = [(i, i + 1) for i in range(n_atoms - 1)]
    product = Molecule2D(
        atom_types=atom_types.clone(),
        bonds=torch.tensor(chain + [(j, i) for i, j in chain], dtype=torch.long).reshape(-1, 2),
        bond_types=torch.zeros(2 * len(chain), dtype=torch.long),
        atom_mask=torch.ones(n_atoms, dtype=torch.bool),
    )

    vocab = CoEvoVocabulary.load()
    tokens = torch.randint(COEVO_SPACE.num_real_states, (n_msa, n_token), generator=generator)
    cell_mask = torch.ones(n_msa, n_token, dtype=torch.bool)
    cell_mask[:, -1] = False
    tokens[:, -1] = vocab.pad
    coevo = CoEvoMatrix(tokens=tokens, row_mask=torch.ones(n_msa, dtype=torch.bool), cell_mask=cell_mask)

    pocket = Pocket(
        frames=frames,
        aatypes=aatypes,
        residue_index=torch.arange(1, n_res + 1),
        residue_mask=torch.ones(n_res, dtype=torch.bool),
    )
    return EnzymeReactionRecord(
        record_id="canonical",
        pocket=pocket,
        sequence=indices_to_sequence(aatypes.tolist()),
        origin=np.zeros(3),
        reaction_id="canonical>canonical",
        substrate_id="canonical",
        substrate=substrate,
        product=product,
        product_id="canonical-product",
        ec=int(torch.randint(EC_SPACE.num_real_states, (1,), generator=generator)),
        coevo=coevo,
        affinity=0.5,
    )
