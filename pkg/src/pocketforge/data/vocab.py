"""Amino-acid, element and co-evolution vocabularies"""

import logging
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import torch

from ..errors import EmptyAlignmentError, ShapeError, VocabularyError
from .models import CoEvoMatrix

logger = logging.getLogger(__name__)

AMINO_ACIDS = "ACDEFGHIKLMNPQRSTVWY"
AA_TO_INDEX = {aa: i for i, aa in enumerate(AMINO_ACIDS)}

THREE_TO_ONE = {
    "ALA": "A", "CYS": "C", "ASP": "D", "GLU": "E", "PHE": "F",
    "GLY": "G", "HIS": "H", "ILE": "I", "LYS": "K", "LEU": "L",
    "MET": "M", "ASN": "N", "PRO": "P", "GLN": "Q", "ARG": "R",
    "SER": "S", "THR": "T", "VAL": "V", "TRP": "W", "TYR": "Y",
}
ONE_TO_THREE = {one: three for three, one in THREE_TO_ONE.items()}

# Element categories for the molecule encoders; anything else is "other"
ELEMENTS = (
    "H", "B", "C", "N", "O", "F", "Si", "P", "S", "Cl", "Se", "Br", "I",
    "Na", "K", "Mg", "Ca", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "other",
)
ELEMENT_TO_INDEX = {element: i for i, element in enumerate(ELEMENTS)}
OTHER_ELEMENT = ELEMENT_TO_INDEX["other"]

# Bond orders 1, 2, 3 and 4 (aromatic) map to categories 0..3
NUM_BOND_TYPES = 4

VOCAB_ASSET = "coevo_vocab_v1.txt"
VOCAB_SIZE = 64
GAP = "-"
SEPARATOR = "|"
PAD = "_"


def aa_index(letter: str) -> int:
    try:
        return AA_TO_INDEX[letter]
    except KeyError:
        raise VocabularyError(f"unknown amino-acid letter {letter!r}") from None


def sequence_to_indices(sequence: str) -> torch.Tensor:
    return torch.tensor([aa_index(letter) for letter in sequence], dtype=torch.long)


def indices_to_sequence(indices: Sequence[int]) -> str:
    """Inverse of ``sequence_to_indices``; the mask index renders as 'X'"""
    return "".join(AMINO_ACIDS[i] if 0 <= i < len(AMINO_ACIDS) else "X" for i in indices)


def element_index(symbol: str) -> int:
    """Element category; unknown symbols fall into the "other" bucket"""
    normalized = symbol.strip().capitalize()
    index = ELEMENT_TO_INDEX.get(normalized)
    if index is None or index == OTHER_ELEMENT:
        logger.warning("Unknown element %r mapped to 'other'", symbol)
        return OTHER_ELEMENT
    return index


def bond_type_index(order: int) -> int:
    if not 1 <= order <= NUM_BOND_TYPES:
        raise VocabularyError(f"bond order must be 1..{NUM_BOND_TYPES}, got {order}")
    return order - 1


class CoEvoVocabulary:
    """The 64-symbol joint enzyme/reaction table.

    Line n of the asset file is external index n (1-based); internal indices
    are 0-based and the mask state (64) is not part of the table.
    """

    def __init__(self, symbols: Sequence[str], name: str = "custom"):
        symbols = list(symbols)
        if len(symbols) != VOCAB_SIZE:
            raise VocabularyError(f"vocabulary must have {VOCAB_SIZE} symbols, got {len(symbols)}")
        duplicates = sorted({s for s in symbols if symbols.count(s) > 1})
        if duplicates:
            raise VocabularyError(f"duplicate vocabulary symbols: {duplicates}")
        for required in (GAP, SEPARATOR, PAD):
            if required not in symbols:
                raise VocabularyError(f"vocabulary lacks the reserved symbol {required!r}")
        self.name = name
        self.symbols = symbols
        self.symbol_to_index: Dict[str, int] = {s: i for i, s in enumerate(symbols)}

    def __len__(self) -> int:
        return len(self.symbols)

    @property
    def separator(self) -> int:
        return self.symbol_to_index[SEPARATOR]

    @property
    def pad(self) -> int:
        return self.symbol_to_index[PAD]

    @property
    def gap(self) -> int:
        return self.symbol_to_index[GAP]

    def encode(self, text: str) -> List[int]:
        unknown = sorted({ch for ch in text if ch not in self.symbol_to_index})
        if unknown:
            raise VocabularyError(f"characters not in vocabulary {self.name}: {unknown}")
        return [self.symbol_to_index[ch] for ch in text]

    def decode(self, indices: Sequence[int]) -> str:
        return "".join(self.symbols[i] for i in indices)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "CoEvoVocabulary":
        path = Path(path)
        symbols = [line.rstrip("\n") for line in path.read_text(encoding="utf-8").splitlines()]
        return cls([s for s in symbols if s], name=path.name)

    @classmethod
    def load(cls, path: Optional[Union[str, Path]] = None) -> "CoEvoVocabulary":
        """The packaged table, or a custom one from ``path``"""
        if path is not None:
            return cls.from_file(path)
        asset = resources.files("pocketforge").joinpath("assets").joinpath(VOCAB_ASSET)
        text = asset.read_text(encoding="utf-8")
        return cls([line for line in text.splitlines() if line], name=VOCAB_ASSET)


def tokenize_coevolution(
    enzyme_rows: Sequence[str],
    reaction_rows: Sequence[str],
    vocab: CoEvoVocabulary,
    n_token: int,
    n_msa: Optional[int] = None,
) -> CoEvoMatrix:
    """Tokenize aligned enzyme and reaction rows into a co-evolution grid.

    Row m is ``enzyme_rows[m] + '|' + reaction_rows[m]``, truncated or padded
    to ``n_token``.  Only the first ``n_msa`` rows are kept when given.

    Returns:
        CoEvoMatrix whose ``cell_mask`` is False on padding
    """
    if not enzyme_rows or not reaction_rows:
        raise EmptyAlignmentError("co-evolution alignment has no enzyme or reaction rows")
    if len(enzyme_rows) != len(reaction_rows):
        raise ShapeError(
            f"{len(enzyme_rows)} enzyme rows but {len(reaction_rows)} reaction rows"
        )
    pairs: List[Tuple[str, str]] = list(zip(enzyme_rows, reaction_rows))
    if n_msa is not None:
        pairs = pairs[:n_msa]

    tokens = torch.full((len(pairs), n_token), vocab.pad, dtype=torch.long)
    cell_mask = torch.zeros((len(pairs), n_token), dtype=torch.bool)
    for m, (enzyme, reaction) in enumerate(pairs):
        encoded = vocab.encode(enzyme + SEPARATOR + reaction)[:n_token]
        tokens[m, : len(encoded)] = torch.tensor(encoded, dtype=torch.long)
        cell_mask[m, : len(encoded)] = True
    return CoEvoMatrix(tokens=tokens, row_mask=torch.ones(len(pairs), dtype=torch.bool), cell_mask=cell_mask)


def detokenize_coevolution(
    matrix: CoEvoMatrix, vocab: CoEvoVocabulary
) -> Tuple[List[str], List[str]]:
    """Split each row back into (enzyme, reaction) on its first separator.

    Pad symbols and cells outside ``cell_mask`` are dropped.
    """
    enzyme_rows, reaction_rows = [], []
    for m in range(matrix.tokens.shape[0]):
        if not bool(matrix.row_mask[m]):
            continue
        cells = [
            int(tok)
            for tok, keep in zip(matrix.tokens[m].tolist(), matrix.cell_mask[m].tolist())
            if keep and 0 <= tok < len(vocab) and tok != vocab.pad
        ]
        text = vocab.decode(cells)
        enzyme, _, reaction = text.partition(SEPARATOR)
        enzyme_rows.append(enzyme)
        reaction_rows.append(reaction)
    return enzyme_rows, reaction_rows
