import numpy as np
import pytest
import torch

from pocketforge.data.dataset import assemble_records, load_dataset
from pocketforge.data.export import (
    dataset_digest,
    file_digest,
    format_structure,
    write_labels,
    write_molecule,
    write_raw_records,
    write_sample,
    write_tsv,
)
from pocketforge.data.loader import (
    load_alignment,
    load_labels,
    load_molecule,
    load_raw_records,
    load_sample,
    load_structure,
    read_manifest,
)
from pocketforge.data.synthetic import SyntheticConfig, generate_synthetic_dataset
from pocketforge.errors import InputError
from pocketforge.flows.sampler import sample


@pytest.fixture
def dataset_dir(tmp_path, raw_records):
    manifest = write_raw_records(tmp_path / "data", raw_records)
    return manifest


def test_records_survive_the_disk(dataset_dir, raw_records):
    loaded = load_raw_records(dataset_dir)
    assert [r.record_id for r in loaded] == [r.record_id for r in raw_records]
    for before, after in zip(raw_records, loaded):
        assert after.sequence == before.sequence
        assert np.allclose(after.protein.backbone, before.protein.backbone, atol=1e-3)
        assert after.substrate.elements == before.substrate.elements
        assert after.substrate.bonds == before.substrate.bonds
        assert np.allclose(after.substrate.coords, before.substrate.coords, atol=1e-4)
        assert after.product.topology_digest() == before.product.topology_digest()
        assert after.alignment.enzyme_rows == before.alignment.enzyme_rows
        assert after.alignment.reaction_rows == before.alignment.reaction_rows
        assert after.ec == before.ec
        assert after.affinity == before.affinity


def test_manifest_paths_are_relative(dataset_dir):
    header, first = dataset_dir.read_text(encoding="utf-8").splitlines()[:2]
    assert header.split("\t") == ["id", "structure", "substrate", "product", "msa", "ec", "affinity"]
    assert first.split("\t")[1] == "syn0000.pdb"
    entries = read_manifest(dataset_dir)
    assert entries[0].structure == dataset_dir.parent / "syn0000.pdb"


def test_labels_override_manifest(tmp_path, dataset_dir, raw_records):
    for r in raw_records:
        r.ec, r.affinity = 7, None
    labels = write_labels(tmp_path / "labels.tsv", raw_records)
    loaded = load_raw_records(dataset_dir, labels)
    assert all(r.ec == 7 and r.affinity is None for r in loaded)
    assert load_labels(labels)["syn0001"] == (7, None)


def test_bad_labels(tmp_path):
    path = tmp_path / "labels.tsv"
    path.write_text("id\tec\nx\t9\n", encoding="utf-8")
    with pytest.raises(InputError):
        load_labels(path)
    path.write_text("id\taffinity\nx\t1.0\n", encoding="utf-8")
    with pytest.raises(InputError):
        load_labels(path)
    path.write_text("id\tec\taffinity\nx\t3.4.1.1\tNA\n", encoding="utf-8")
    assert load_labels(path) == {"x": (3, None)}
    with pytest.raises(FileNotFoundError):
        load_labels(tmp_path / "absent.tsv")


def test_structure_reader_skips_incomplete_residues(tmp_path, raw_records, caplog):
    protein = raw_records[0].protein
    lines = format_structure(protein).splitlines()
    # drop the O of the second residue
    del lines[7]
    path = tmp_path / "gap.pdb"
    path.write_text("HEADER test\n" + "\n".join(lines) + "\n", encoding="utf-8")
    with caplog.at_level("WARNING"):
        loaded = load_structure(path)
    assert len(loaded) == len(protein) - 1
    assert "lacks O" in caplog.text
    assert loaded.name == "gap"


def test_structure_reader_errors(tmp_path, raw_records):
    line = format_structure(raw_records[0].protein).splitlines()[0]
    broken = tmp_path / "broken.pdb"
    broken.write_text(line[:30] + "   xx.xx" + line[38:] + "\n", encoding="utf-8")
    with pytest.raises(InputError, match="malformed"):
        load_structure(broken)
    empty = tmp_path / "empty.pdb"
    empty.write_text("END\n", encoding="utf-8")
    with pytest.raises(InputError):
        load_structure(empty)
    with pytest.raises(FileNotFoundError):
        load_structure(tmp_path / "absent.pdb")


GLY_BACKBONE = {"N": (0.0, 0.0, 0.0), "CA": (1.46, 0.0, 0.0), "C": (2.0, 1.4, 0.0), "O": (3.2, 1.5, 0.0)}


def pdb_lines(keys):
    """ATOM records of one glycine per (chain, number, insertion code), 4 Å apart"""
    lines = []
    for k, (chain, res_seq, icode) in enumerate(keys):
        for atom, (x, y, z) in GLY_BACKBONE.items():
            lines.append(
                f"ATOM  {len(lines) + 1:5d}  {atom:<3s} GLY {chain}{res_seq:4d}{icode:1s}   "
                f"{x + 4.0 * k:8.3f}{y:8.3f}{z:8.3f}{1.0:6.2f}{0.0:6.2f}          {atom[0]:>2s}"
            )
    return "\n".join(lines) + "\nEND\n"


def test_structure_reader_handles_two_chains(tmp_path):
    keys = [("A", 1, ""), ("A", 2, ""), ("B", 1, ""), ("B", 2, "")]
    path = tmp_path / "dimer.pdb"
    path.write_text(pdb_lines(keys), encoding="utf-8")
    dimer = load_structure(path)
    assert [r.index for r in dimer.residues] == [1, 2, 3, 4]
    assert [(r.chain, r.res_seq, r.icode) for r in dimer.residues] == keys
    assert format_structure(dimer) == pdb_lines(keys)


def test_structure_reader_handles_insertion_codes(tmp_path):
    keys = [("A", 52, ""), ("A", 52, "A"), ("A", 52, "B"), ("A", 53, ""), ("A", 60, "")]
    path = tmp_path / "insertions.pdb"
    path.write_text(pdb_lines(keys), encoding="utf-8")
    loaded = load_structure(path)
    # insertions shift what follows; the gap after 53 is kept
    assert [r.index for r in loaded.residues] == [52, 53, 54, 55, 62]
    assert [(r.chain, r.res_seq, r.icode) for r in loaded.residues] == keys
    assert format_structure(loaded) == pdb_lines(keys)


def test_molecule_reader(tmp_path, ethanol):
    path = write_molecule(tmp_path / "ethanol.mol", ethanol)
    loaded = load_molecule(path)
    assert loaded.elements == ["C", "C", "O"]
    assert loaded.bonds == [(0, 1, 1), (1, 2, 1)]
    assert loaded.name == "ethanol"

    path.write_text("3\nC 0 0 0\nO 1 0 0\n", encoding="utf-8")
    with pytest.raises(InputError, match="declares 3 atoms"):
        load_molecule(path)
    path.write_text("1\nC 0 0 0\n0 1 1\n", encoding="utf-8")
    with pytest.raises(InputError, match="BONDS"):
        load_molecule(path)
    path.write_text("# comment only\n", encoding="utf-8")
    with pytest.raises(InputError):
        load_molecule(path)


def test_alignment_reader(tmp_path):
    path = tmp_path / "a.msa"
    path.write_text("MKV\nMKI\n\nC>>O\nC>>O\n", encoding="utf-8")
    alignment = load_alignment(path)
    assert alignment.enzyme_rows == ["MKV", "MKI"]
    assert alignment.reaction_rows == ["C>>O", "C>>O"]
    path.write_text("MKV\nMKI\n", encoding="utf-8")
    with pytest.raises(InputError):
        load_alignment(path)


def test_dataset_digest_tracks_content():
    a = dataset_digest(generate_synthetic_dataset(1, SyntheticConfig(records=2)))
    b = dataset_digest(generate_synthetic_dataset(1, SyntheticConfig(records=2)))
    c = dataset_digest(generate_synthetic_dataset(2, SyntheticConfig(records=2)))
    assert a == b != c


def test_file_digest(tmp_path):
    path = tmp_path / "x.txt"
    path.write_text("abc", encoding="utf-8")
    assert file_digest(path) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"


def test_load_dataset_centers_on_the_substrate(dataset_dir, small_config):
    records = load_dataset(dataset_dir, n_msa=small_config.n_msa, n_token=small_config.n_token)
    for record in records:
        assert torch.allclose(record.substrate.coords.mean(0), torch.zeros(3, dtype=torch.float64), atol=1e-9)
        assert len(record) == 40
        assert 0 <= record.ec < 7
        assert record.coevo.shape == (small_config.n_msa, small_config.n_token)
        assert record.ec_label == record.source.ec


def test_min_residue_filter_drops_small_pockets(raw_records):
    assert assemble_records(raw_records, n_msa=2, n_token=8, min_residues=41) == []
    assert len(assemble_records(raw_records, n_msa=2, n_token=8, min_residues=40)) == 3


def test_sample_file_roundtrip(tmp_path, network, records):
    record = records[0]
    result = sample(network, record.substrate, record.product, 4, 3, generator=torch.Generator().manual_seed(0))
    path = write_sample(
        tmp_path / "s.sample",
        result.pocket,
        seed=5,
        steps=3,
        config_hash="cafe",
        ec=result.ec,
        coevo=result.coevo,
        record_id=record.record_id,
        origin=record.origin,
    )
    loaded = load_sample(path)
    assert (loaded.seed, loaded.steps, loaded.config_hash, loaded.record_id) == (5, 3, "cafe", record.record_id)
    assert loaded.residue_index == [1, 2, 3, 4]
    assert loaded.sequence == result.pocket.sequence
    assert loaded.ec == result.ec + 1
    assert torch.equal(loaded.coevo, result.coevo.tokens + 1)
    expected_ca = result.pocket.frames.trans.numpy() * 10.0 + record.origin
    assert np.allclose(loaded.ca, expected_ca, atol=1e-6)
    assert np.allclose(loaded.origin, record.origin, atol=1e-6)

    path.write_text("seed = 1\n", encoding="utf-8")
    with pytest.raises(InputError):
        load_sample(path)


def test_write_tsv(tmp_path):
    path = write_tsv(tmp_path / "t.tsv", [{"a": 1, "b": None}, {"a": 0.123456789, "b": "x"}])
    assert path.read_text(encoding="utf-8") == "a\tb\n1\t-\n0.123457\tx\n"
