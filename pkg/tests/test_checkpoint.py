import dataclasses

import pytest
import torch

from pocketforge.errors import ConfigurationError, InputError, ShapeError
from pocketforge.model.checkpoint import FORMAT_VERSION, load_checkpoint, read_checkpoint, save_checkpoint


def test_checkpoint_roundtrip(tmp_path, network, small_config, canonical):
    path = save_checkpoint(tmp_path / "run" / "backbone.pt", network, "abc123", {"mean": 6.0, "std": 1.5}, "backbone")
    assert path.exists()
    restored, payload = load_checkpoint(path, small_config)
    assert payload["config_hash"] == "abc123"
    assert payload["stage"] == "backbone"
    assert payload["affinity_stats"] == {"mean": 6.0, "std": 1.5}
    assert payload["format_version"] == FORMAT_VERSION
    for (name, a), b in zip(network.state_dict().items(), restored.state_dict().values()):
        assert torch.equal(a, b), name
    assert not restored.training


def test_checkpoint_entries_keep_parameter_order(tmp_path, network):
    path = save_checkpoint(tmp_path / "a.pt", network, "h")
    entries = read_checkpoint(path)["entries"]
    assert [name for name, _, _ in entries] == [name for name, _ in network.named_parameters()]
    assert all(values.dtype == torch.float64 for _, _, values in entries)


def test_config_mismatch(tmp_path, network, small_config):
    path = save_checkpoint(tmp_path / "a.pt", network, "h")
    wider = dataclasses.replace(small_config, node_dim=32)
    with pytest.raises(ConfigurationError, match="node_dim"):
        load_checkpoint(path, wider)


def test_shape_mismatch(tmp_path, network):
    path = save_checkpoint(tmp_path / "a.pt", network, "h")
    payload = read_checkpoint(path)
    name, _, _ = payload["entries"][0]
    payload["entries"][0] = (name, (1,), torch.zeros(1, dtype=torch.float64))
    torch.save(payload, path)
    with pytest.raises(ShapeError, match=name):
        load_checkpoint(path)


def test_missing_tensor(tmp_path, network):
    path = save_checkpoint(tmp_path / "a.pt", network, "h")
    payload = read_checkpoint(path)
    dropped = payload["entries"].pop()
    torch.save(payload, path)
    with pytest.raises(ShapeError, match=dropped[0]):
        load_checkpoint(path)


def test_unreadable_checkpoint(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_checkpoint(tmp_path / "absent.pt")
    garbage = tmp_path / "garbage.pt"
    garbage.write_text("not a checkpoint", encoding="utf-8")
    with pytest.raises(InputError):
        read_checkpoint(garbage)
    old = tmp_path / "old.pt"
    torch.save({"format_version": 0}, old)
    with pytest.raises(InputError, match="unsupported"):
        read_checkpoint(old)
