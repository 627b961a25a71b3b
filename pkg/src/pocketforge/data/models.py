"""Data models for structures, molecules, pockets and training records"""

import hashlib
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import torch

from ..errors import GraphError, InputError, ShapeError
from ..geometry.rigid import MODEL_TO_ANGSTROM, Rigid


@dataclass
class Residue:
    """One residue of an input structure; coordinates in Å"""

    index: int  # strictly increasing along the structure
    aa: str
    coords: np.ndarray  # [4, 3] N, CA, C, O
    chain: str = ""
    res_seq: Optional[int] = None  # numbering in the source file
    icode: str = ""

    @property
    def ca(self) -> np.ndarray:
        return self.coords[1]


@dataclass
class ProteinStructure:
    """Backbone-only protein structure in Å"""

    residues: List[Residue]
    name: str = ""

    def __post_init__(self):
        indices = [r.index for r in self.residues]
        if any(b <= a for a, b in zip(indices, indices[1:])):
            raise InputError(f"structure {self.name!r}: residue indices must strictly increase")
        if self.residues and not np.isfinite(self.backbone).all():
            raise InputError(f"structure {self.name!r}: non-finite coordinates")

    def __len__(self) -> int:
        return len(self.residues)

    @property
    def sequence(self) -> str:
        return "".join(r.aa for r in self.residues)

    @property
    def backbone(self) -> np.ndarray:
        """All backbone atoms ``[N, 4, 3]``"""
        if not self.residues:
            return np.zeros((0, 4, 3))
        return np.stack([r.coords for r in self.residues])

    @property
    def ca(self) -> np.ndarray:
        return self.backbone[:, 1]


@dataclass
class Molecule:
    """A molecule as read from disk: elements, Å coordinates, bonds (i, j, order)"""

    elements: List[str]
    coords: np.ndarray
    bonds: List[Tuple[int, int, int]] = field(default_factory=list)
    name: str = ""

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64).reshape(-1, 3)
        if len(self.elements) != self.coords.shape[0]:
            raise InputError(
                f"molecule {self.name!r}: {len(self.elements)} elements but "
                f"{self.coords.shape[0]} coordinate rows"
            )
        for i, j, _ in self.bonds:
            if not (0 <= i < self.num_atoms and 0 <= j < self.num_atoms) or i == j:
                raise GraphError(f"molecule {self.name!r}: bond ({i}, {j}) references no valid atom pair")

    @property
    def num_atoms(self) -> int:
        return len(self.elements)

    @property
    def centroid(self) -> np.ndarray:
        return self.coords.mean(axis=0)

    def topology_digest(self) -> str:
        """Identity of the molecular graph, independent of the conformer"""
        bonds = sorted((min(i, j), max(i, j), order) for i, j, order in self.bonds)
        text = " ".join(self.elements) + "|" + ";".join(f"{i}-{j}:{o}" for i, j, o in bonds)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


@dataclass
class MultipleAlignment:
    """Aligned enzyme rows and reaction-string rows, one pair per MSA row"""

    enzyme_rows: List[str]
    reaction_rows: List[str]


@dataclass
class Molecule3D:
    """Substrate conformer in model units"""

    atom_types: torch.Tensor  # [L] long
    coords: torch.Tensor  # [L, 3] float64
    atom_mask: torch.Tensor  # [L] bool

    def __post_init__(self):
        n = self.atom_types.shape[0]
        if n < 1:
            raise ShapeError("a 3D molecule needs at least one atom")
        if self.coords.shape != (n, 3) or self.atom_mask.shape != (n,):
            raise ShapeError(
                f"molecule shapes disagree: types {tuple(self.atom_types.shape)}, "
                f"coords {tuple(self.coords.shape)}, mask {tuple(self.atom_mask.shape)}"
            )

    def __len__(self) -> int:
        return self.atom_types.shape[0]

    def transformed(self, rot: torch.Tensor, trans: Optional[torch.Tensor] = None) -> "Molecule3D":
        coords = self.coords @ rot.T
        if trans is not None:
            coords = coords + trans
        return Molecule3D(self.atom_types, coords, self.atom_mask)


@dataclass
class Molecule2D:
    """Product graph; ``bonds`` holds both directions of every bond"""

    atom_types: torch.Tensor  # [L] long
    bonds: torch.Tensor  # [E, 2] long
    bond_types: torch.Tensor  # [E] long
    atom_mask: torch.Tensor  # [L] bool

    def __len__(self) -> int:
        return self.atom_types.shape[0]


@dataclass
class CoEvoMatrix:
    """Tokenized co-evolution grid ``[N_MSA, N_token]``"""

    tokens: torch.Tensor
    row_mask: torch.Tensor
    cell_mask: torch.Tensor

    @property
    def shape(self) -> Tuple[int, int]:
        return tuple(self.tokens.shape)

    def with_tokens(self, tokens: torch.Tensor) -> "CoEvoMatrix":
        return CoEvoMatrix(tokens=tokens, row_mask=self.row_mask, cell_mask=self.cell_mask)


@dataclass
class Pocket:
    """Ordered residue frames (model units) with amino-acid states"""

    frames: Rigid
    aatypes: torch.Tensor  # [N] long, 20 = mask
    residue_index: torch.Tensor  # [N] long, residue numbers from the source structure
    residue_mask: torch.Tensor  # [N] bool

    def __len__(self) -> int:
        return self.aatypes.shape[0]

    @property
    def sequence(self) -> str:
        from .vocab import indices_to_sequence

        return indices_to_sequence(self.aatypes.tolist())

    def ca_angstrom(self, origin: Optional[np.ndarray] = None) -> np.ndarray:
        ca = self.frames.trans.detach().cpu().numpy() * MODEL_TO_ANGSTROM
        return ca if origin is None else ca + origin


@dataclass
class RawRecord:
    """One enzyme-reaction pair as it exists on disk"""

    record_id: str
    protein: ProteinStructure
    substrate: Molecule
    product: Optional[Molecule] = None
    alignment: Optional[MultipleAlignment] = None
    ec: Optional[int] = None  # 1..7
    affinity: Optional[float] = None

    @property
    def sequence(self) -> str:
        return self.protein.sequence

    @property
    def reaction_id(self) -> str:
        product = self.product.topology_digest() if self.product is not None else "-"
        return f"{self.substrate.topology_digest()}>{product}"


@dataclass
class EnzymeReactionRecord:
    """A curated training/evaluation record, centered on the substrate centroid"""

    record_id: str
    pocket: Pocket
    sequence: str
    origin: np.ndarray  # substrate centroid in Å, input frame
    reaction_id: str
    substrate_id: str
    substrate: Optional[Molecule3D] = None
    product: Optional[Molecule2D] = None
    product_id: Optional[str] = None
    ec: Optional[int] = None  # 0-based
    coevo: Optional[CoEvoMatrix] = None
    affinity: Optional[float] = None
    source: Optional[RawRecord] = None

    def __len__(self) -> int:
        return len(self.pocket)

    @property
    def substrate_atoms(self) -> int:
        return len(self.substrate) if self.substrate is not None else 0

    @property
    def product_atoms(self) -> int:
        return len(self.product) if self.product is not None else 0

    @property
    def ec_label(self) -> Optional[int]:
        """EC class as printed (1..7)"""
        return None if self.ec is None else self.ec + 1
