"""End-to-end runs of the command-line interface on a tiny synthetic dataset"""

import json

import pytest

from pocketforge.cli import main
from pocketforge.errors import TrainingAbortedError

TINY = {
    "node_dim": 16,
    "edge_dim": 8,
    "num_blocks": 1,
    "num_heads": 2,
    "ipa_head_dim": 4,
    "num_query_points": 2,
    "num_value_points": 2,
    "num_bins": 8,
    "rbf_bins": 8,
    "mol_layers": 1,
    "mpnn_layers": 1,
    "readout_rounds": 1,
    "coevo_dim": 8,
    "coevo_layers": 1,
    "coevo_heads": 2,
    "n_msa": 2,
    "n_token": 8,
    "batch_size": 1,
    "log_level": "WARNING",
}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    config = root / "tiny.cfg"
    config.write_text("".join(f"{k} = {v}\n" for k, v in TINY.items()), encoding="utf-8")
    runs = root / "runs"
    common = ["--config", str(config), "--output-dir", str(runs)]
    data = root / "data"
    assert main(common + ["synth-data", "--out", str(data), "--records", "3"]) == 0
    assert main(common + ["train", "--manifest", str(data / "manifest.tsv"), "--stage", "backbone",
                          "--steps", "2"]) == 0
    return {"root": root, "common": common, "runs": runs, "data": data, "manifest": data / "manifest.tsv"}


def test_synth_data_and_train_outputs(workspace):
    runs = workspace["runs"]
    assert (workspace["data"] / "syn0002.pdb").exists()
    assert (runs / "backbone.pt").exists()
    assert (runs / "runlog.sqlite").exists()
    manifest = json.loads((runs / "manifests" / "train.json").read_text(encoding="utf-8"))
    assert manifest["command"] == "train"
    assert str(workspace["manifest"]) in manifest["inputs"]
    assert str(runs / "backbone.pt") in manifest["outputs"]


def test_curate(workspace):
    out = workspace["root"] / "curated"
    code = main(workspace["common"] + ["curate", "--manifest", str(workspace["manifest"]), "--out", str(out),
                                       "--homology", "0.9", "--stats-thresholds", "0.5,0.9"])
    assert code == 0
    kept = (out / "manifest.tsv").read_text(encoding="utf-8").splitlines()
    assert len(kept) == 1 + 3
    stats = (out / "stats.tsv").read_text(encoding="utf-8").splitlines()
    assert stats[0].split("\t")[:2] == ["homology", "#reaction"]
    assert len(stats) == 3


def test_curate_drops_small_pockets(workspace):
    out = workspace["root"] / "strict"
    code = main(workspace["common"] + ["curate", "--manifest", str(workspace["manifest"]), "--out", str(out),
                                       "--min-residues", "41"])
    assert code == 0
    assert len((out / "manifest.tsv").read_text(encoding="utf-8").splitlines()) == 1


def sample_args(workspace, out):
    return workspace["common"] + [
        "sample",
        "--checkpoint", str(workspace["runs"] / "backbone.pt"),
        "--manifest", str(workspace["manifest"]),
        "--record", "syn0000",
        "--T", "3",
        "--n-samples", "2",
        "--out", str(out),
    ]


def test_sampling_is_reproducible(workspace):
    first, second = workspace["root"] / "s1", workspace["root"] / "s2"
    assert main(sample_args(workspace, first)) == 0
    assert main(sample_args(workspace, second)) == 0
    names = sorted(p.name for p in first.glob("*.sample"))
    assert names == ["syn0000_s0.sample", "syn0000_s1.sample"]
    for name in names:
        assert (first / name).read_bytes() == (second / name).read_bytes()
    assert (first / names[0]).read_bytes() != (first / names[1]).read_bytes()
    # a backbone checkpoint predicts no EC class
    assert "\nEC -\n" in (first / names[0]).read_text(encoding="utf-8")


def test_replay_reproduces_the_last_sample_run(workspace):
    out = workspace["root"] / "replayed"
    assert main(sample_args(workspace, out)) == 0
    before = {p.name: p.read_bytes() for p in out.glob("*.sample")}
    for p in out.glob("*.sample"):
        p.unlink()
    assert main(["replay", str(workspace["runs"] / "manifests" / "sample.json")]) == 0
    assert {p.name: p.read_bytes() for p in out.glob("*.sample")} == before


def test_evaluate(workspace):
    samples = workspace["root"] / "s_eval"
    assert main(sample_args(workspace, samples)) == 0
    out = workspace["root"] / "evaluation"
    code = main(workspace["common"] + ["evaluate", "--manifest", str(workspace["manifest"]),
                                       "--samples", str(samples), "--out", str(out), "--k", "2"])
    assert code == 0
    report = (out / "report.tsv").read_text(encoding="utf-8").splitlines()
    assert [line.split("\t")[0] for line in report[1:]] == ["crmsd", "tm_score", "aar"]
    assert (out / "plot.csv").exists()


def test_evaluate_without_samples(workspace):
    empty = workspace["root"] / "nothing"
    empty.mkdir()
    code = main(workspace["common"] + ["evaluate", "--manifest", str(workspace["manifest"]),
                                       "--samples", str(empty)])
    assert code == 3


def test_gradcheck_command(workspace):
    code = main(workspace["common"] + ["gradcheck", "--checkpoint", str(workspace["runs"] / "backbone.pt"),
                                       "--stage", "enzyme"])
    assert code == 0
    rows = (workspace["runs"] / "gradcheck.tsv").read_text(encoding="utf-8").splitlines()
    assert rows[0] == "parameter\tshape\tmax_rel_error"
    assert len(rows) > 10


def test_ligand_stage_without_affinity_is_a_usage_error(workspace, capsys):
    labels = workspace["root"] / "labels.tsv"
    labels.write_text("id\tec\taffinity\n" + "".join(f"syn000{k}\t1\t-\n" for k in range(3)), encoding="utf-8")
    code = main(workspace["common"] + ["train", "--manifest", str(workspace["manifest"]), "--labels", str(labels),
                                       "--stage", "ligand", "--steps", "1"])
    assert code == 2
    assert "affinity" in capsys.readouterr().err


def test_extract_pocket(workspace):
    data = workspace["data"]
    out = workspace["root"] / "pocket.pdb"
    code = main(workspace["common"] + ["extract-pocket", "--structure", str(data / "syn0000.pdb"),
                                       "--ligand", str(data / "syn0000.substrate.mol"), "--out", str(out)])
    assert code == 0
    ca_lines = [line for line in out.read_text(encoding="utf-8").splitlines() if line[12:16].strip() == "CA"]
    assert len(ca_lines) == 40
    far = main(workspace["common"] + ["extract-pocket", "--structure", str(data / "syn0000.pdb"),
                                      "--ligand", str(data / "syn0000.substrate.mol"), "--radius", "0.1",
                                      "--out", str(out)])
    assert far != 0


def test_usage_errors(workspace):
    assert main(["--no-such-flag"]) == 2
    assert main([]) == 2
    assert main(workspace["common"] + ["--set", "steps"]) == 2
    assert main(workspace["common"] + ["--set", "stage=pretrain", "--print-config"]) == 2
    assert main(workspace["common"] + ["sample", "--checkpoint", "x.pt", "--n-samples", "0"]) == 2
    assert main(workspace["common"] + ["train", "--manifest", "absent.tsv"]) == 3


def test_print_config(workspace, capsys):
    assert main(workspace["common"] + ["--set", "steps=7", "--print-config"]) == 0
    out = capsys.readouterr().out
    assert "steps = 7\n" in out
    assert "node_dim = 16\n" in out


def test_aborted_training_saves_last_good_and_a_manifest(workspace, monkeypatch):
    def abort(config, dataset, on_step=None, network=None):
        raise TrainingAbortedError("step 1: non-finite loss nan", 1, network.state_dict())

    monkeypatch.setattr("pocketforge.cli.train_stage", abort)
    runs = workspace["root"] / "aborted"
    code = main(workspace["common"] + ["--output-dir", str(runs), "train", "--manifest", str(workspace["manifest"]),
                                       "--stage", "backbone", "--steps", "2"])
    assert code == 4
    assert (runs / "backbone.last-good.pt").exists()
    manifest = json.loads((runs / "manifests" / "train.json").read_text(encoding="utf-8"))
    assert manifest["status"] == "aborted"
    assert "non-finite" in manifest["error"]
    assert str(runs / "backbone.last-good.pt") in manifest["outputs"]
