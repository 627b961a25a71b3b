"""Versioned network checkpoints"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import torch

from ..errors import ConfigurationError, InputError, ShapeError
from .network import ModelConfig, VectorFieldNetwork, build_network

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


def checkpoint_entries(network: VectorFieldNetwork) -> List[Tuple[str, Tuple[int, ...], torch.Tensor]]:
    """Ordered (name, shape, float64 values) for every named parameter"""
    return [
        (name, tuple(param.shape), param.detach().to(torch.float64).cpu().clone())
        for name, param in network.named_parameters()
    ]


def save_checkpoint(
    path: Union[str, Path],
    network: VectorFieldNetwork,
    config_hash: str,
    affinity_stats: Optional[Dict[str, float]] = None,
    stage: Optional[str] = None,
) -> Path:
    """Write the network parameters with the config they were built from"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format_version": FORMAT_VERSION,
        "config_hash": config_hash,
        "stage": stage,
        "model_config": network.config.to_dict(),
        "affinity_stats": dict(affinity_stats or {"mean": 0.0, "std": 1.0}),
        "entries": checkpoint_entries(network),
    }
    torch.save(payload, path)
    logger.info("Saved checkpoint %s (%d tensors)", path, len(payload["entries"]))
    return path


def read_checkpoint(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as e:
        raise InputError(f"{path} is not a readable checkpoint: {e}") from e
    if not isinstance(payload, dict) or payload.get("format_version") != FORMAT_VERSION:
        raise InputError(f"{path}: unsupported checkpoint format")
    return payload


def load_checkpoint(
    path: Union[str, Path], model_config: Optional[ModelConfig] = None
) -> Tuple[VectorFieldNetwork, Dict[str, Any]]:
    """Rebuild the network stored at ``path``.

    When ``model_config`` is given it must agree with the stored one; every
    stored entry is then checked by name and shape against a freshly built
    network before the values are copied in.

    Returns:
        (network, payload) where the payload keeps config_hash, stage and
        affinity_stats
    """
    payload = read_checkpoint(path)
    stored = ModelConfig.from_dict(payload["model_config"])
    if model_config is not None and model_config != stored:
        differing = sorted(
            key for key, value in model_config.to_dict().items() if stored.to_dict().get(key) != value
        )
        raise ConfigurationError(f"checkpoint {path} was built with different settings: {differing}")

    network = build_network(stored)
    expected = dict(network.named_parameters())
    names = [name for name, _, _ in payload["entries"]]
    if sorted(names) != sorted(expected):
        missing = sorted(set(expected) - set(names))
        extra = sorted(set(names) - set(expected))
        raise ShapeError(f"checkpoint {path} tensors differ: missing {missing}, unexpected {extra}")
    with torch.no_grad():
        for name, shape, values in payload["entries"]:
            param = expected[name]
            if tuple(shape) != tuple(param.shape) or tuple(values.shape) != tuple(param.shape):
                raise ShapeError(
                    f"checkpoint tensor {name}: stored shape {tuple(shape)}, network expects {tuple(param.shape)}"
                )
            param.copy_(values)
    network.eval()
    logger.info("Loaded checkpoint %s (stage %s)", path, payload.get("stage"))
    return network, payload
