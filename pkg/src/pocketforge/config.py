"""Run configuration for PocketForge"""

import hashlib
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

from dotenv import dotenv_values

from .errors import ConfigurationError

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}

STAGES = ("backbone", "ligand", "enzyme")


class Config:
    """Run configuration.

    Every key has a default here; a run config file (key = value lines)
    overrides any subset of them.
    """

    def __init__(self):
        # Run
        self.stage = "backbone"
        self.seed = 0
        self.log_level = "INFO"
        self.output_dir = Path("runs")

        # Training
        self.steps = 2000
        self.batch_size = 4
        self.learning_rate = 1e-3
        self.beta1 = 0.9
        self.beta2 = 0.999
        self.t_max = 0.98
        self.log_every = 50

        # Sampling
        self.sample_steps = 50

        # Network trunk
        self.node_dim = 64
        self.edge_dim = 32
        self.num_blocks = 3
        self.num_heads = 4
        self.ipa_head_dim = 16
        self.num_query_points = 4
        self.num_value_points = 4
        self.num_bins = 22
        self.min_bin = 1e-3
        self.max_bin = 2.0

        # Conditioning encoders
        self.rbf_bins = 16
        self.rbf_d_min = 0.0
        self.rbf_d_max = 2.0
        self.mol_layers = 2
        self.mpnn_layers = 2
        self.readout_rounds = 2

        # Co-evolution grid
        self.coevo_dim = 32
        self.coevo_layers = 2
        self.coevo_heads = 4
        self.n_msa = 8
        self.n_token = 128

        # Loss weights and geometry constants
        self.weight_trans = 1.0
        self.weight_rot = 1.0
        self.weight_aa = 1.0
        self.weight_ec = 1.0
        self.weight_coevo = 1.0
        self.weight_inter = 1.0
        self.weight_dist = 1.0
        self.weight_kd = 1.0
        self.surface_rho = 2.0
        self.surface_gamma = 6.0
        self.distance_threshold = 0.8
        self.length_scale = 10.0
        self.enzyme_geometry_losses = True

        # Curation
        self.pocket_radius = 10.0
        self.min_residues = 32
        self.homology_threshold = 0.6

        # Synthetic data
        self.synthetic_records = 5
        self.synthetic_pocket_residues = 40
        self.synthetic_distal_residues = 12

    def keys(self) -> List[str]:
        return sorted(vars(self))

    def update(self, values: Mapping[str, Any]) -> "Config":
        """Apply overrides, coercing each value to the type of its default"""
        for key, raw in values.items():
            key = key.strip().lower()
            if not hasattr(self, key):
                raise ConfigurationError(f"Unknown config key: {key!r}")
            setattr(self, key, _coerce(key, raw, getattr(self, key)))
        return self

    def validate(self) -> "Config":
        """Check ranges that would otherwise fail deep inside a run"""
        if self.stage not in STAGES:
            raise ConfigurationError(
                f"stage must be one of {', '.join(STAGES)}, got {self.stage!r}"
            )
        for key in ("steps", "batch_size", "sample_steps", "node_dim", "edge_dim",
                    "num_heads", "n_msa", "n_token", "rbf_bins", "num_bins"):
            if getattr(self, key) <= 0:
                raise ConfigurationError(f"{key} must be positive, got {getattr(self, key)}")
        if self.learning_rate < 0:
            raise ConfigurationError("learning_rate must be non-negative")
        if not 0.0 < self.t_max < 1.0:
            raise ConfigurationError(f"t_max must lie in (0, 1), got {self.t_max}")
        if not 0.0 < self.homology_threshold < 1.0:
            raise ConfigurationError(
                f"homology_threshold must lie in (0, 1), got {self.homology_threshold}"
            )
        if self.sample_steps < 2:
            raise ConfigurationError("sample_steps must be at least 2")
        return self

    def describe(self) -> str:
        """Canonical `key = value` text, one line per key, sorted"""
        return "".join(f"{key} = {_render(getattr(self, key))}\n" for key in self.keys())

    def digest(self) -> str:
        """SHA-256 of the canonical text; recorded in checkpoints and manifests"""
        return hashlib.sha256(self.describe().encode("utf-8")).hexdigest()

    def as_dict(self) -> Dict[str, str]:
        return {key: _render(getattr(self, key)) for key in self.keys()}

    def model_config(self):
        from .model.network import ModelConfig

        return ModelConfig(
            node_dim=self.node_dim,
            edge_dim=self.edge_dim,
            num_blocks=self.num_blocks,
            num_heads=self.num_heads,
            ipa_head_dim=self.ipa_head_dim,
            num_query_points=self.num_query_points,
            num_value_points=self.num_value_points,
            num_bins=self.num_bins,
            min_bin=self.min_bin,
            max_bin=self.max_bin,
            rbf_bins=self.rbf_bins,
            rbf_d_min=self.rbf_d_min,
            rbf_d_max=self.rbf_d_max,
            mol_layers=self.mol_layers,
            mpnn_layers=self.mpnn_layers,
            readout_rounds=self.readout_rounds,
            coevo_dim=self.coevo_dim,
            coevo_layers=self.coevo_layers,
            coevo_heads=self.coevo_heads,
            n_msa=self.n_msa,
            n_token=self.n_token,
        )

    def loss_config(self):
        from .flows.objectives import LossConfig

        return LossConfig(
            trans=self.weight_trans,
            rot=self.weight_rot,
            aa=self.weight_aa,
            ec=self.weight_ec,
            coevo=self.weight_coevo,
            inter=self.weight_inter,
            dist=self.weight_dist,
            kd=self.weight_kd,
            surface_rho=self.surface_rho,
            surface_gamma=self.surface_gamma,
            distance_threshold=self.distance_threshold,
            length_scale=self.length_scale,
            enzyme_geometry=self.enzyme_geometry_losses,
        )

    def train_config(self):
        from .flows.engine import TrainConfig
        from .flows.objectives import Stage

        return TrainConfig(
            stage=Stage(self.stage),
            steps=self.steps,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            betas=(self.beta1, self.beta2),
            seed=self.seed,
            t_max=self.t_max,
            loss=self.loss_config(),
            sample_steps=self.sample_steps,
            log_every=self.log_every,
        )

    @classmethod
    def load(
        cls,
        path: Optional[Union[str, Path]] = None,
        overrides: Optional[Mapping[str, Any]] = None,
    ) -> "Config":
        """Load defaults, then the run config file, then explicit overrides"""
        config = cls()
        if path is not None:
            path = Path(path)
            if not path.exists():
                raise FileNotFoundError(f"Run config not found: {path}")
            values = dotenv_values(path)
            missing = [key for key, value in values.items() if value is None]
            if missing:
                raise ConfigurationError(
                    f"Config keys without a value in {path}: {', '.join(missing)}"
                )
            config.update(values)
        if overrides:
            config.update(overrides)
        return config.validate()


def _coerce(key: str, raw: Any, default: Any) -> Any:
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if isinstance(default, bool):
            lowered = text.lower()
            if lowered in _TRUE:
                return True
            if lowered in _FALSE:
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, Path):
            return Path(text)
    except ValueError:
        raise ConfigurationError(
            f"Config key {key!r} expects {type(default).__name__}, got {text!r}"
        ) from None
    return text


def _render(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)
