"""Staged training loop"""

import copy
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import torch

from ..data.models import EnzymeReactionRecord
from ..errors import ConfigurationError, NumericError, TrainingAbortedError
from ..model.network import ModelConfig, VectorFieldNetwork, build_network
from .objectives import COMPONENTS, LossBreakdown, LossConfig, Stage, total_loss
from .state import corrupt_sample

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    """Optimizer, schedule and loss settings for one training stage"""

    stage: Stage = Stage.BACKBONE
    steps: int = 2000
    batch_size: int = 4
    learning_rate: float = 1e-3
    betas: Tuple[float, float] = (0.9, 0.999)
    seed: int = 0
    t_max: float = 0.98
    loss: LossConfig = field(default_factory=LossConfig)
    sample_steps: int = 50
    log_every: int = 50

    def __post_init__(self):
        self.stage = Stage(self.stage)
        if self.steps <= 0 or self.batch_size <= 0:
            raise ConfigurationError("steps and batch_size must be positive")


@dataclass
class AffinityStats:
    """Standardization of affinity labels over the training split"""

    mean: float = 0.0
    std: float = 1.0

    def standardize(self, value: float) -> float:
        return (value - self.mean) / self.std

    def restore(self, value: float) -> float:
        return value * self.std + self.mean

    @classmethod
    def fit(cls, records: Sequence[EnzymeReactionRecord]) -> "AffinityStats":
        values = torch.tensor([r.affinity for r in records if r.affinity is not None], dtype=torch.float64)
        if values.numel() == 0:
            return cls()
        std = float(values.std(unbiased=False)) if values.numel() > 1 else 0.0
        return cls(mean=float(values.mean()), std=std if std > 0 else 1.0)


@dataclass
class StepRecord:
    """Loss breakdown of one optimizer step"""

    step: int
    total: float
    components: Dict[str, Optional[float]]


@dataclass
class TrainResult:
    network: VectorFieldNetwork
    history: List[StepRecord]
    affinity_stats: AffinityStats

    def state_dict(self) -> Dict[str, torch.Tensor]:
        return self.network.state_dict()


def check_dataset(records: Sequence[EnzymeReactionRecord], stage: Stage) -> None:
    """Raise ConfigurationError when a record lacks what ``stage`` trains on"""
    stage = Stage(stage)
    if not records:
        raise ConfigurationError("training dataset is empty")
    needs = {
        Stage.BACKBONE: (),
        Stage.LIGAND: (("substrate", "a substrate"), ("affinity", "an affinity label")),
        Stage.ENZYME: (("ec", "an EC label"), ("coevo", "a co-evolution grid"), ("product", "a product")),
    }[stage]
    for record in records:
        for attribute, what in needs:
            if getattr(record, attribute) is None:
                raise ConfigurationError(
                    f"{stage.value} stage needs {what}, record {record.record_id!r} has none"
                )


def batch_loss(
    network: VectorFieldNetwork,
    records: Sequence[EnzymeReactionRecord],
    indices: Sequence[int],
    times: Sequence[float],
    stage: Stage,
    loss: LossConfig,
    generator: torch.Generator,
    affinity_stats: Optional[AffinityStats] = None,
) -> Tuple[torch.Tensor, List[LossBreakdown]]:
    """Mean total loss over a batch, evaluated record by record in order"""
    breakdowns = []
    total = None
    for index, t in zip(indices, times):
        record = records[index]
        state = corrupt_sample(record, t, generator)
        pred = network(state, record.substrate, record.product)
        affinity = None
        if affinity_stats is not None and record.affinity is not None:
            affinity = affinity_stats.standardize(record.affinity)
        breakdown = total_loss(pred, state, record, stage, loss, affinity_target=affinity)
        breakdowns.append(breakdown)
        total = breakdown.total if total is None else total + breakdown.total
    return total / len(breakdowns), breakdowns


def _mean_components(breakdowns: Sequence[LossBreakdown]) -> Dict[str, Optional[float]]:
    means = {}
    for name in COMPONENTS:
        values = [float(getattr(b, name)) for b in breakdowns if getattr(b, name) is not None]
        means[name] = sum(values) / len(values) if values else None
    return means


def non_finite_gradients(network: torch.nn.Module) -> List[str]:
    """Names of parameters whose gradient holds NaN or Inf"""
    return [
        name for name, p in network.named_parameters() if p.grad is not None and not torch.isfinite(p.grad).all()
    ]


def non_finite_parameters(network: torch.nn.Module) -> List[str]:
    return [name for name, p in network.named_parameters() if not torch.isfinite(p).all()]


def train_stage(
    config: TrainConfig,
    dataset: Sequence[EnzymeReactionRecord],
    model_config: Optional[ModelConfig] = None,
    params_in: Optional[Dict[str, torch.Tensor]] = None,
    on_step: Optional[Callable[[StepRecord], None]] = None,
    network: Optional[VectorFieldNetwork] = None,
) -> TrainResult:
    """Minimize the stage's total loss with Adam.

    Args:
        config: Stage, schedule and loss settings
        dataset: Training records
        model_config: Network shape; ignored when ``network`` is given
        params_in: State dict to start from (e.g. the previous stage)
        on_step: Callback for each StepRecord (the run log uses it)
        network: Start from this network instead of building one

    Returns:
        TrainResult with the trained network and per-step history
    """
    stage = Stage(config.stage)
    check_dataset(dataset, stage)
    if network is None:
        network = build_network(model_config or ModelConfig(), seed=config.seed)
    if params_in is not None:
        network.load_state_dict(params_in)
    network.train()

    affinity_stats = AffinityStats.fit(dataset)
    optimizer = torch.optim.Adam(network.parameters(), lr=config.learning_rate, betas=config.betas)
    generator = torch.Generator().manual_seed(config.seed)
    history: List[StepRecord] = []

    logger.info(
        "Training %s stage: %d records, %d steps, batch %d, lr %g",
        stage.value, len(dataset), config.steps, config.batch_size, config.learning_rate,
    )
    last_good = copy.deepcopy(network.state_dict())
    for step in range(1, config.steps + 1):
        indices = torch.randint(len(dataset), (config.batch_size,), generator=generator).tolist()
        times = (torch.rand(config.batch_size, generator=generator, dtype=torch.float64) * config.t_max).tolist()
        try:
            loss, breakdowns = batch_loss(
                network, dataset, indices, times, stage, config.loss, generator, affinity_stats
            )
        except NumericError as e:
            raise TrainingAbortedError(f"step {step}: {e}", step, last_good) from e
        if not torch.isfinite(loss):
            raise TrainingAbortedError(f"step {step}: non-finite loss {loss.item()}", step, last_good)

        optimizer.zero_grad()
        loss.backward()
        bad = non_finite_gradients(network)
        if bad:
            raise TrainingAbortedError(f"step {step}: non-finite gradient in {', '.join(bad)}", step, last_good)
        optimizer.step()
        bad = non_finite_parameters(network)
        if bad:
            raise TrainingAbortedError(f"step {step}: non-finite parameter in {', '.join(bad)}", step, last_good)
        last_good = copy.deepcopy(network.state_dict())

        record = StepRecord(step=step, total=loss.item(), components=_mean_components(breakdowns))
        history.append(record)
        if on_step is not None:
            on_step(record)
        if step % config.log_every == 0 or step == config.steps:
            logger.info("step %d  total %.5f", step, record.total)

    network.eval()
    return TrainResult(network=network, history=history, affinity_stats=affinity_stats)


def moving_average(values: Sequence[float], window: int = 10) -> List[float]:
    """Trailing mean over at most ``window`` values"""
    out = []
    running = 0.0
    for i, value in enumerate(values):
        running += value
        if i >= window:
            running -= values[i - window]
        out.append(running / min(i + 1, window))
    return out
