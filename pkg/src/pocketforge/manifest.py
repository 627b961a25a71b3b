"""Run manifests: what a CLI run read, wrote and was configured with"""

import json
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

from . import __version__
from .errors import InputError


@dataclass
class RunManifest:
    command: str
    argv: List[str]
    config_hash: str
    seed: int
    inputs: Dict[str, str] = field(default_factory=dict)  # path -> sha256
    outputs: List[str] = field(default_factory=list)
    wall_clock_seconds: float = 0.0
    status: str = "ok"  # "ok" or "aborted"
    error: Optional[str] = None
    version: str = __version__

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, values: Dict) -> "RunManifest":
        return cls(
            command=values["command"],
            argv=list(values["argv"]),
            config_hash=values["config_hash"],
            seed=int(values["seed"]),
            inputs=dict(values.get("inputs", {})),
            outputs=list(values.get("outputs", [])),
            wall_clock_seconds=float(values.get("wall_clock_seconds", 0.0)),
            status=values.get("status", "ok"),
            error=values.get("error"),
            version=values.get("version", __version__),
        )


def write_manifest_atomic(path: Union[str, Path], manifest: RunManifest) -> Path:
    """Write through a temporary file in the same directory, then rename"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(manifest.to_json())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def read_run_manifest(path: Union[str, Path]) -> RunManifest:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Run manifest not found: {path}")
    try:
        return RunManifest.from_dict(json.loads(path.read_text(encoding="utf-8")))
    except (ValueError, KeyError, TypeError) as e:
        raise InputError(f"{path}: malformed run manifest ({e})") from e
