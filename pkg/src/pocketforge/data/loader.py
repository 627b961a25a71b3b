"""Load structures, molecules, alignments, labels and sample files"""

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import torch

from ..errors import InputError
from ..geometry.rigid import Rigid
from .models import Molecule, MultipleAlignment, ProteinStructure, RawRecord, Residue
from .vocab import THREE_TO_ONE

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

BACKBONE_NAMES = ("N", "CA", "C", "O")
MANIFEST_COLUMNS = ("id", "structure", "substrate", "product", "msa", "ec", "affinity")
MISSING = ("", "-", "NA", "None")


def _read_lines(path: PathLike) -> List[str]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Input file not found: {path}")
    return path.read_text(encoding="utf-8").splitlines()


def _optional(value: Optional[str]) -> Optional[str]:
    if value is None:
        return None
    value = value.strip()
    return None if value in MISSING else value


def load_structure(path: PathLike, name: Optional[str] = None) -> ProteinStructure:
    """
    Load the backbone of a protein from a PDB-subset file

    Only fixed-column ATOM records named N, CA, C or O are read; residues
    missing any of the four atoms are skipped with a warning. Residue indices
    follow file order across chains and insertion codes; the source chain,
    number and insertion code are kept on each Residue.

    Args:
        path: Structure file
        name: Structure name (defaults to the file stem)

    Returns:
        ProteinStructure with coordinates in Å
    """
    path = Path(path)
    atoms: Dict[Tuple[str, int, str], Dict[str, np.ndarray]] = {}
    names: Dict[Tuple[str, int, str], str] = {}
    order: List[Tuple[str, int, str]] = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.startswith("ATOM"):
            continue
        atom = line[12:16].strip()
        if atom not in BACKBONE_NAMES:
            continue
        try:
            res_name = line[17:20].strip()
            chain = line[21:22].strip()
            res_seq = int(line[22:26])
            icode = line[26:27].strip()
            xyz = np.array([float(line[30:38]), float(line[38:46]), float(line[46:54])])
        except (ValueError, IndexError):
            raise InputError(f"{path}:{lineno}: malformed ATOM record") from None
        key = (chain, res_seq, icode)
        if key not in atoms:
            atoms[key] = {}
            names[key] = res_name
            order.append(key)
        atoms[key][atom] = xyz

    residues = []
    offset = 0
    for key in order:
        found = atoms[key]
        if len(found) < len(BACKBONE_NAMES):
            logger.warning(
                "%s: residue %s%d lacks %s, skipped",
                path.name, key[0], key[1], ",".join(a for a in BACKBONE_NAMES if a not in found),
            )
            continue
        letter = THREE_TO_ONE.get(names[key])
        if letter is None:
            logger.warning("%s: non-standard residue %s %d skipped", path.name, names[key], key[1])
            continue
        coords = np.stack([found[a] for a in BACKBONE_NAMES])
        chain, res_seq, icode = key
        # keep indices increasing across chain restarts and insertion codes
        if residues and res_seq + offset <= residues[-1].index:
            offset = residues[-1].index + 1 - res_seq
        residues.append(
            Residue(index=res_seq + offset, aa=letter, coords=coords, chain=chain, res_seq=res_seq, icode=icode)
        )
    if not residues:
        raise InputError(f"{path}: no complete backbone residues")
    return ProteinStructure(residues=residues, name=name or path.stem)


def load_molecule(path: PathLike, name: Optional[str] = None) -> Molecule:
    """
    Load a molecule file

    Line 1 holds the atom count, followed by `element x y z` rows in Å, then
    an optional `BONDS` line and `i j order` rows with 0-based atom indices.
    Lines starting with '#' are comments.
    """
    path = Path(path)
    lines = [
        (n, line.strip()) for n, line in enumerate(_read_lines(path), start=1)
        if line.strip() and not line.lstrip().startswith("#")
    ]
    if not lines:
        raise InputError(f"{path}: empty molecule file")
    try:
        count = int(lines[0][1])
    except ValueError:
        raise InputError(f"{path}:{lines[0][0]}: expected the atom count") from None
    if count < 1 or len(lines) < 1 + count:
        raise InputError(f"{path}: declares {count} atoms but has {len(lines) - 1} rows")

    elements, coords = [], []
    for lineno, text in lines[1 : 1 + count]:
        parts = text.split()
        if len(parts) != 4:
            raise InputError(f"{path}:{lineno}: expected `element x y z`")
        try:
            coords.append([float(v) for v in parts[1:]])
        except ValueError:
            raise InputError(f"{path}:{lineno}: bad coordinate") from None
        elements.append(parts[0])

    bonds = []
    rest = lines[1 + count :]
    if rest:
        if rest[0][1].upper() != "BONDS":
            raise InputError(f"{path}:{rest[0][0]}: expected BONDS after the atom rows")
        for lineno, text in rest[1:]:
            try:
                i, j, bond_order = (int(v) for v in text.split())
            except ValueError:
                raise InputError(f"{path}:{lineno}: expected `i j order`") from None
            bonds.append((i, j, bond_order))
    coords = np.asarray(coords, dtype=np.float64)
    if not np.isfinite(coords).all():
        raise InputError(f"{path}: non-finite coordinates")
    return Molecule(elements=elements, coords=coords, bonds=bonds, name=name or path.stem)


def load_alignment(path: PathLike) -> MultipleAlignment:
    """Enzyme rows, one blank line, reaction rows"""
    path = Path(path)
    blocks: List[List[str]] = [[]]
    for line in _read_lines(path):
        if line.strip():
            blocks[-1].append(line.strip())
        elif blocks[-1]:
            blocks.append([])
    blocks = [b for b in blocks if b]
    if len(blocks) != 2:
        raise InputError(f"{path}: expected an enzyme block and a reaction block, found {len(blocks)} blocks")
    return MultipleAlignment(enzyme_rows=blocks[0], reaction_rows=blocks[1])


def load_labels(path: PathLike) -> Dict[str, Tuple[Optional[int], Optional[float]]]:
    """
    Load a labels TSV with columns id, ec (1..7) and an optional affinity

    Returns:
        Mapping id -> (ec, affinity)
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Labels file not found: {path}")
    labels = {}
    with open(path, "r", newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f, delimiter="\t")
        if reader.fieldnames is None or not {"id", "ec"} <= set(reader.fieldnames):
            raise InputError(f"{path}: labels need at least the columns id and ec")
        for row in reader:
            record_id = (row.get("id") or "").strip()
            if not record_id:
                continue
            labels[record_id] = (_parse_ec(path, row.get("ec")), _parse_float(path, row.get("affinity")))
    return labels


def _parse_ec(path: Path, value: Optional[str]) -> Optional[int]:
    value = _optional(value)
    if value is None:
        return None
    try:
        ec = int(value.split(".")[0])
    except ValueError:
        raise InputError(f"{path}: bad EC label {value!r}") from None
    if not 1 <= ec <= 7:
        raise InputError(f"{path}: EC class must be 1..7, got {ec}")
    return ec


def _parse_float(path: Path, value: Optional[str]) -> Optional[float]:
    value = _optional(value)
    if value is None:
        return None
    try:
        return float(value)
    except ValueError:
        raise InputError(f"{path}: bad number {value!r}") from None


@dataclass
class ManifestEntry:
    """One line of a dataset manifest; paths are resolved against the manifest"""

    record_id: str
    structure: Path
    substrate: Path
    product: Optional[Path] = None
    msa: Optional[Path] = None
    ec: Optional[int] = None
    affinity: Optional[float] = None


def read_manifest(path: PathLike) -> List[ManifestEntry]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Manifest not found: {path}")
    base = path.parent
    entries = []
    with open(path, "r", newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f, delimiter="\t")
        if reader.fieldnames is None or not set(MANIFEST_COLUMNS[:3]) <= set(reader.fieldnames):
            raise InputError(f"{path}: manifest needs the columns {', '.join(MANIFEST_COLUMNS)}")
        for row in reader:
            record_id = (row.get("id") or "").strip()
            if not record_id:
                continue
            product = _optional(row.get("product"))
            msa = _optional(row.get("msa"))
            entries.append(
                ManifestEntry(
                    record_id=record_id,
                    structure=base / row["structure"].strip(),
                    substrate=base / row["substrate"].strip(),
                    product=base / product if product else None,
                    msa=base / msa if msa else None,
                    ec=_parse_ec(path, row.get("ec")),
                    affinity=_parse_float(path, row.get("affinity")),
                )
            )
    return entries


def load_raw_record(entry: ManifestEntry) -> RawRecord:
    return RawRecord(
        record_id=entry.record_id,
        protein=load_structure(entry.structure, name=entry.record_id),
        substrate=load_molecule(entry.substrate),
        product=load_molecule(entry.product) if entry.product else None,
        alignment=load_alignment(entry.msa) if entry.msa else None,
        ec=entry.ec,
        affinity=entry.affinity,
    )


def load_raw_records(
    manifest: PathLike, labels: Optional[PathLike] = None
) -> List[RawRecord]:
    """Every record of a manifest; a labels file overrides the manifest's ec/affinity"""
    entries = read_manifest(manifest)
    overrides = load_labels(labels) if labels is not None else {}
    records = []
    for entry in entries:
        if entry.record_id in overrides:
            entry.ec, entry.affinity = overrides[entry.record_id]
        records.append(load_raw_record(entry))
    logger.info("Loaded %d records from %s", len(records), manifest)
    return records


@dataclass
class SampleFile:
    """A generated pocket as written by ``write_sample``; translations in Å"""

    seed: int
    steps: int
    config_hash: str
    record_id: Optional[str]
    origin: np.ndarray
    residue_index: List[int]
    sequence: str
    frames: Rigid
    ec: Optional[int]  # 1..7
    coevo: Optional[torch.Tensor] = None  # [M, T] external indices 1..65
    header: Dict[str, str] = field(default_factory=dict)

    @property
    def ca(self) -> np.ndarray:
        return self.frames.trans.numpy()


def load_sample(path: PathLike) -> SampleFile:
    path = Path(path)
    lines = _read_lines(path)
    header: Dict[str, str] = {}
    body = []
    for line in lines:
        if line.startswith("#"):
            continue
        if " = " in line and not body:
            key, _, value = line.partition(" = ")
            header[key.strip()] = value.strip()
        elif line.strip():
            body.append(line.split())
    try:
        n_res = int(header["residues"])
        residues = body[:n_res]
        index = [int(r[0]) for r in residues]
        sequence = "".join(r[1] for r in residues)
        records = torch.tensor([[float(v) for v in r[2:9]] for r in residues], dtype=torch.float64)
        tail = body[n_res:]
        ec = None
        coevo = None
        for i, row in enumerate(tail):
            if row[0] == "EC":
                ec = None if row[1] == "-" else int(row[1])
            elif row[0] == "COEVO":
                m, t = int(row[1]), int(row[2])
                grid = [[int(v) for v in r] for r in tail[i + 1 : i + 1 + m]]
                coevo = torch.tensor(grid, dtype=torch.long).reshape(m, t)
        origin = np.array([float(v) for v in header.get("origin", "0 0 0").split()])
        record_id = header.get("record_id")
        return SampleFile(
            seed=int(header["seed"]),
            steps=int(header["steps"]),
            config_hash=header.get("config_hash", ""),
            record_id=None if record_id in (None, "-") else record_id,
            origin=origin,
            residue_index=index,
            sequence=sequence,
            frames=Rigid.from_tensor_7(records),
            ec=ec,
            coevo=coevo,
            header=header,
        )
    except (KeyError, ValueError, IndexError, RuntimeError) as e:
        raise InputError(f"{path}: malformed sample file ({e})") from e
