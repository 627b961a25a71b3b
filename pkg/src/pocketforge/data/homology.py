"""Sequence identity, greedy homology clustering and dataset debiasing"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import AlphabetError, DomainError
from .models import RawRecord
from .vocab import AMINO_ACIDS

logger = logging.getLogger(__name__)

# Integer scoring, tenths of a unit: match 1, mismatch 0, gap open -1, extend -0.1
MATCH = 10
MISMATCH = 0
GAP_OPEN = -10
GAP_EXTEND = -1
SCORE_SCALE = 10.0

_NEG = -(2**60)
_STATES = ("M", "X", "Y")  # aligned pair, gap in b, gap in a
_M, _X, _Y = range(len(_STATES))

DEFAULT_STATS_THRESHOLDS = (0.4, 0.5, 0.6, 0.8, 0.9)


@dataclass
class Alignment:
    """A global alignment; ``score`` is in scoring units (match = 1)"""

    score: float
    matches: int
    length: int
    aligned_a: str
    aligned_b: str

    @property
    def identity(self) -> float:
        return self.matches / self.length if self.length else 0.0


def _check_alphabet(sequence: str) -> None:
    if not sequence:
        raise AlphabetError("sequence identity needs non-empty sequences")
    bad = sorted({ch for ch in sequence if ch not in AMINO_ACIDS})
    if bad:
        raise AlphabetError(f"characters outside the amino-acid alphabet: {bad}")


def align(a: str, b: str) -> Alignment:
    """
    Global alignment with affine gaps (Gotoh)

    Ties in score are broken towards more matches, then a shorter alignment,
    then the state order aligned pair, gap in b, gap in a. Each row of the
    three tables is filled with numpy; the gap-in-a row is a running maximum.

    Args:
        a: First sequence
        b: Second sequence

    Returns:
        Alignment with the optimal path and its match count
    """
    _check_alphabet(a)
    _check_alphabet(b)
    n, m = len(a), len(b)
    # (score, matches, -length) packed as score * width**2 + matches * width - length;
    # every step adds to all three, so packed values order paths lexicographically
    width = n + m + 2
    unit = width * width
    gap_open, gap_extend = GAP_OPEN * unit - 1, GAP_EXTEND * unit - 1
    from_x_or_y = np.array([gap_open, gap_extend, gap_open])[:, None]
    columns = np.frombuffer(b.encode("ascii"), dtype=np.uint8)
    offsets = np.arange(m, dtype=np.int64)

    tables = np.full((len(_STATES), n + 1, m + 1), _NEG, dtype=np.int64)
    back = np.zeros((len(_STATES), n + 1, m + 1), dtype=np.int8)
    tables[_M, 0, 0] = 0
    for i in range(n + 1):
        if i > 0:
            pair = np.where(columns == ord(a[i - 1]), MATCH * unit + width, MISMATCH * unit) - 1
            diagonal = tables[:, i - 1, :-1] + pair
            back[_M, i, 1:] = diagonal.argmax(0)
            tables[_M, i, 1:] = diagonal.max(0)
            above = tables[:, i - 1] + from_x_or_y
            back[_X, i] = above.argmax(0)
            tables[_X, i] = above.max(0)
        opened = np.maximum(tables[_M, i, :-1], tables[_X, i, :-1]) + gap_open
        tables[_Y, i, 1:] = np.maximum.accumulate(opened - offsets * gap_extend) + offsets * gap_extend
        left = np.stack(
            [tables[_M, i, :-1] + gap_open, tables[_X, i, :-1] + gap_open, tables[_Y, i, :-1] + gap_extend]
        )
        back[_Y, i, 1:] = left.argmax(0)

    state = int(tables[:, n, m].argmax())
    best = int(tables[state, n, m])
    top, bottom = [], []
    i, j = n, m
    while i > 0 or j > 0:
        previous = int(back[state, i, j])
        if state == _M:
            top.append(a[i - 1])
            bottom.append(b[j - 1])
            i, j = i - 1, j - 1
        elif state == _X:
            top.append(a[i - 1])
            bottom.append("-")
            i -= 1
        else:
            top.append("-")
            bottom.append(b[j - 1])
            j -= 1
        state = previous
    matches = sum(x == y for x, y in zip(top, bottom))
    return Alignment(
        score=(best - matches * width + len(top)) // unit / SCORE_SCALE,
        matches=matches,
        length=len(top),
        aligned_a="".join(reversed(top)),
        aligned_b="".join(reversed(bottom)),
    )


def sequence_identity(a: str, b: str) -> float:
    """Matches over alignment length of the optimal global alignment"""
    return align(a, b).identity


@dataclass
class ClusterAssignment:
    """Cluster label per input position; centroids are input positions"""

    labels: List[int]
    centroids: List[int]
    threshold: float

    @property
    def num_clusters(self) -> int:
        return len(self.centroids)

    def members(self, cluster: int) -> List[int]:
        return [i for i, label in enumerate(self.labels) if label == cluster]


class IdentityCache:
    """Memoized pairwise identities keyed by the unordered sequence pair"""

    def __init__(self):
        self._values: Dict[Tuple[str, str], float] = {}

    def __call__(self, a: str, b: str) -> float:
        key = (a, b) if a <= b else (b, a)
        if key not in self._values:
            self._values[key] = 1.0 if a == b else sequence_identity(*key)
        return self._values[key]


def processing_order(sequences: Sequence[str]) -> List[int]:
    """Length-descending, ties in input order"""
    return sorted(range(len(sequences)), key=lambda i: (-len(sequences[i]), i))


def cluster_by_homology(
    sequences: Sequence[str], threshold: float, identity: Optional[IdentityCache] = None
) -> ClusterAssignment:
    """
    Greedy centroid clustering

    Sequences are visited longest first; each joins the first existing
    centroid (in founding order) it shares at least ``threshold`` identity
    with, or founds a new cluster.
    """
    if not 0.0 < threshold < 1.0:
        raise DomainError(f"threshold must lie in (0, 1), got {threshold}")
    identity = identity or IdentityCache()
    labels = [-1] * len(sequences)
    centroids: List[int] = []
    for i in processing_order(sequences):
        for cluster, c in enumerate(centroids):
            if identity(sequences[i], sequences[c]) >= threshold:
                labels[i] = cluster
                break
        else:
            labels[i] = len(centroids)
            centroids.append(i)
    return ClusterAssignment(labels=labels, centroids=centroids, threshold=threshold)


@dataclass
class DebiasResult:
    records: list
    assignment: ClusterAssignment
    dropped: int


def debias(records: Sequence, threshold: float, identity: Optional[IdentityCache] = None) -> DebiasResult:
    """
    Keep one representative per homology cluster

    Each cluster keeps its centroid record plus records that share the
    centroid's sequence but catalyse a different reaction; exact
    (sequence, reaction) duplicates collapse to the first in input order.
    """
    assignment = cluster_by_homology([r.sequence for r in records], threshold, identity)
    keep = set()
    for c in assignment.centroids:
        centroid = records[c]
        seen = {centroid.reaction_id}
        keep.add(c)
        for i in assignment.members(assignment.labels[c]):
            record = records[i]
            if i == c or record.sequence != centroid.sequence or record.reaction_id in seen:
                continue
            seen.add(record.reaction_id)
            keep.add(i)
    kept = [records[i] for i in sorted(keep)]
    logger.info(
        "Debias at %.0f%% identity: %d clusters, kept %d of %d records",
        threshold * 100, assignment.num_clusters, len(kept), len(records),
    )
    return DebiasResult(records=kept, assignment=assignment, dropped=len(records) - len(kept))


def _summary(record) -> Tuple[str, int, Optional[str], int, Optional[int]]:
    """(substrate id, substrate atoms, product id, product atoms, EC 1..7)"""
    if isinstance(record, RawRecord):
        product = record.product
        return (
            record.substrate.topology_digest(),
            record.substrate.num_atoms,
            product.topology_digest() if product is not None else None,
            product.num_atoms if product is not None else 0,
            record.ec,
        )
    return record.substrate_id, record.substrate_atoms, record.product_id, record.product_atoms, record.ec_label


@dataclass
class DatasetStats:
    """Counts in the layout of the curated-dataset statistics table"""

    reactions: int
    enzymes: int
    substrates: int
    substrate_atoms: float
    products: int
    product_atoms: float
    ec_counts: Dict[int, int] = field(default_factory=dict)
    homology: Optional[float] = None

    @property
    def total(self) -> int:
        return sum(self.ec_counts.values())

    def ec_percent(self, ec: int) -> float:
        return 100.0 * self.ec_counts.get(ec, 0) / self.total if self.total else 0.0

    def as_row(self) -> Dict[str, object]:
        row: Dict[str, object] = {}
        if self.homology is not None:
            row["homology"] = f"{self.homology:.0%}"
        row.update(
            {
                "#reaction": self.reactions,
                "#enzyme": self.enzymes,
                "#substrate": self.substrates,
                "avg_substrate_atoms": round(self.substrate_atoms, 2),
                "#product": self.products,
                "avg_product_atoms": round(self.product_atoms, 2),
            }
        )
        for ec in range(1, 8):
            row[f"EC{ec}"] = f"{self.ec_counts.get(ec, 0)} ({self.ec_percent(ec):.1f}%)"
        return row


def dataset_stats(records: Sequence, homology: Optional[float] = None) -> DatasetStats:
    """Unique reactions, enzymes, substrates and products, plus per-EC counts.

    Atom averages are taken over unique molecules.
    """
    substrates: Dict[str, int] = {}
    products: Dict[str, int] = {}
    ec_counts = {ec: 0 for ec in range(1, 8)}
    for record in records:
        substrate_id, substrate_atoms, product_id, product_atoms, ec = _summary(record)
        substrates.setdefault(substrate_id, substrate_atoms)
        if product_id is not None:
            products.setdefault(product_id, product_atoms)
        if ec is not None:
            ec_counts[ec] += 1
    return DatasetStats(
        reactions=len({r.reaction_id for r in records}),
        enzymes=len({r.sequence for r in records}),
        substrates=len(substrates),
        substrate_atoms=float(np.mean(list(substrates.values()))) if substrates else 0.0,
        products=len(products),
        product_atoms=float(np.mean(list(products.values()))) if products else 0.0,
        ec_counts=ec_counts,
        homology=homology,
    )


def stats_by_threshold(
    records: Sequence, thresholds: Sequence[float] = DEFAULT_STATS_THRESHOLDS
) -> List[DatasetStats]:
    """Debias at each threshold and tabulate; identities are computed once"""
    identity = IdentityCache()
    return [dataset_stats(debias(records, t, identity).records, homology=t) for t in thresholds]


def stratified_evaluation_split(
    records: Sequence, per_class: int, seed: int = 0
) -> Tuple[list, list]:
    """
    Hold out up to ``per_class`` records per EC class

    Records are visited in a seeded random order; a record is eligible only
    if neither its substrate nor its sequence has already been held out.

    Returns:
        (train, held_out) in input order
    """
    order = np.random.default_rng(seed).permutation(len(records)).tolist()
    used_substrates, used_sequences = set(), set()
    chosen: Dict[int, List[int]] = {ec: [] for ec in range(1, 8)}
    for i in order:
        substrate_id, _, _, _, ec = _summary(records[i])
        if ec is None or len(chosen[ec]) >= per_class:
            continue
        if substrate_id in used_substrates or records[i].sequence in used_sequences:
            continue
        used_substrates.add(substrate_id)
        used_sequences.add(records[i].sequence)
        chosen[ec].append(i)
    held = {i for indices in chosen.values() for i in indices}
    train = [r for i, r in enumerate(records) if i not in held]
    held_out = [r for i, r in enumerate(records) if i in held]
    return train, held_out
