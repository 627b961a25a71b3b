"""Writers for the on-disk formats read by ``loader``"""

import csv
import hashlib
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from ..geometry.rigid import MODEL_TO_ANGSTROM
from .loader import MANIFEST_COLUMNS, ManifestEntry
from .models import CoEvoMatrix, Molecule, MultipleAlignment, Pocket, ProteinStructure, RawRecord
from .vocab import ONE_TO_THREE, indices_to_sequence

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def format_structure(protein: ProteinStructure, chain: str = "A") -> str:
    """Fixed-column ATOM records for the N, CA, C, O atoms of every residue"""
    lines = []
    serial = 1
    for residue in protein.residues:
        res_name = ONE_TO_THREE[residue.aa]
        res_chain = residue.chain or chain
        res_seq = residue.index if residue.res_seq is None else residue.res_seq
        for atom, xyz in zip(("N", "CA", "C", "O"), residue.coords):
            lines.append(
                f"ATOM  {serial:5d}  {atom:<3s} {res_name:3s} {res_chain:1s}{res_seq:4d}{residue.icode:1s}   "
                f"{xyz[0]:8.3f}{xyz[1]:8.3f}{xyz[2]:8.3f}{1.0:6.2f}{0.0:6.2f}          {atom[0]:>2s}"
            )
            serial += 1
    lines.append("END")
    return "\n".join(lines) + "\n"


def format_molecule(molecule: Molecule) -> str:
    lines = [f"# {molecule.name}" if molecule.name else "# molecule", str(molecule.num_atoms)]
    for element, xyz in zip(molecule.elements, molecule.coords):
        lines.append(f"{element} {xyz[0]:.4f} {xyz[1]:.4f} {xyz[2]:.4f}")
    lines.append("BONDS")
    lines.extend(f"{i} {j} {order}" for i, j, order in molecule.bonds)
    return "\n".join(lines) + "\n"


def format_alignment(alignment: MultipleAlignment) -> str:
    return "\n".join(alignment.enzyme_rows) + "\n\n" + "\n".join(alignment.reaction_rows) + "\n"


def _write_text(path: PathLike, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


def write_structure(path: PathLike, protein: ProteinStructure) -> Path:
    return _write_text(path, format_structure(protein))


def write_molecule(path: PathLike, molecule: Molecule) -> Path:
    return _write_text(path, format_molecule(molecule))


def write_alignment(path: PathLike, alignment: MultipleAlignment) -> Path:
    return _write_text(path, format_alignment(alignment))


def _render_optional(value) -> str:
    return "-" if value is None else str(value)


def write_labels(path: PathLike, records: Sequence[RawRecord]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, delimiter="\t", lineterminator="\n")
        writer.writerow(["id", "ec", "affinity"])
        for record in records:
            writer.writerow([record.record_id, _render_optional(record.ec), _render_optional(record.affinity)])
    return path


def write_manifest(path: PathLike, entries: Sequence[ManifestEntry]) -> Path:
    """Manifest TSV; file paths are stored relative to the manifest's directory when possible"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    base = path.parent.resolve()

    def relative(p: Optional[Path]) -> str:
        if p is None:
            return "-"
        p = Path(p).resolve()
        try:
            return str(p.relative_to(base))
        except ValueError:
            return str(p)

    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, delimiter="\t", lineterminator="\n")
        writer.writerow(MANIFEST_COLUMNS)
        for e in entries:
            writer.writerow(
                [
                    e.record_id,
                    relative(e.structure),
                    relative(e.substrate),
                    relative(e.product),
                    relative(e.msa),
                    _render_optional(e.ec),
                    _render_optional(e.affinity),
                ]
            )
    return path


def write_raw_records(directory: PathLike, records: Sequence[RawRecord], manifest_name: str = "manifest.tsv") -> Path:
    """Write every record's files into ``directory`` plus a manifest listing them

    Returns:
        Path of the manifest
    """
    directory = Path(directory)
    entries = []
    for record in records:
        structure = write_structure(directory / f"{record.record_id}.pdb", record.protein)
        substrate = write_molecule(directory / f"{record.record_id}.substrate.mol", record.substrate)
        product = None
        if record.product is not None:
            product = write_molecule(directory / f"{record.record_id}.product.mol", record.product)
        msa = None
        if record.alignment is not None:
            msa = write_alignment(directory / f"{record.record_id}.msa", record.alignment)
        entries.append(
            ManifestEntry(
                record_id=record.record_id,
                structure=structure,
                substrate=substrate,
                product=product,
                msa=msa,
                ec=record.ec,
                affinity=record.affinity,
            )
        )
    manifest = write_manifest(directory / manifest_name, entries)
    logger.info("Wrote %d records to %s", len(records), directory)
    return manifest


def dataset_digest(records: Sequence[RawRecord]) -> str:
    """SHA-256 over the serialized form of every record, in order"""
    sha = hashlib.sha256()
    for record in records:
        sha.update(record.record_id.encode("utf-8"))
        sha.update(format_structure(record.protein).encode("utf-8"))
        sha.update(format_molecule(record.substrate).encode("utf-8"))
        if record.product is not None:
            sha.update(format_molecule(record.product).encode("utf-8"))
        if record.alignment is not None:
            sha.update(format_alignment(record.alignment).encode("utf-8"))
        sha.update(f"{record.ec}|{record.affinity}".encode("utf-8"))
    return sha.hexdigest()


def file_digest(path: PathLike) -> str:
    sha = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            sha.update(block)
    return sha.hexdigest()


def format_sample(
    pocket: Pocket,
    seed: int,
    steps: int,
    config_hash: str,
    ec: Optional[int] = None,
    coevo: Optional[CoEvoMatrix] = None,
    record_id: Optional[str] = None,
    origin: Optional[np.ndarray] = None,
) -> str:
    """
    Render a sampled pocket

    The header holds `key = value` lines; each residue line is the residue
    number, its amino-acid letter and the 7-value frame record with the
    translation in Å, shifted back by ``origin``.  The EC line carries the
    class as 1..7; the co-evolution block holds 1-based vocabulary indices.

    Args:
        ec: 0-based EC state from the sampler
    """
    origin = np.zeros(3) if origin is None else np.asarray(origin, dtype=np.float64)
    frames = pocket.frames.scale_translation(MODEL_TO_ANGSTROM)
    records = frames.to_tensor_7().detach().cpu().numpy()
    records[:, 4:] += origin
    sequence = indices_to_sequence(pocket.aatypes.tolist())

    lines = [
        "# pocketforge sample",
        f"seed = {seed}",
        f"steps = {steps}",
        f"config_hash = {config_hash}",
        f"record_id = {record_id or '-'}",
        f"origin = {origin[0]:.6f} {origin[1]:.6f} {origin[2]:.6f}",
        f"residues = {len(pocket)}",
    ]
    for number, letter, values in zip(pocket.residue_index.tolist(), sequence, records):
        lines.append(f"{number} {letter} " + " ".join(f"{v:.8f}" for v in values))
    lines.append(f"EC {ec + 1}" if ec is not None else "EC -")
    if coevo is not None:
        m, t = coevo.shape
        lines.append(f"COEVO {m} {t}")
        for row in (coevo.tokens + 1).tolist():
            lines.append(" ".join(str(v) for v in row))
    return "\n".join(lines) + "\n"


def write_sample(path: PathLike, pocket: Pocket, **kwargs) -> Path:
    path = _write_text(path, format_sample(pocket, **kwargs))
    logger.info("Wrote sample %s", path)
    return path


def write_tsv(path: PathLike, rows: Sequence[Dict[str, object]], columns: Optional[List[str]] = None) -> Path:
    """Rows of dicts as a TSV with a header; missing values render as '-'"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = columns or (list(rows[0]) if rows else [])
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, delimiter="\t", lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_render_cell(row.get(c)) for c in columns])
    return path


def _render_cell(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)
