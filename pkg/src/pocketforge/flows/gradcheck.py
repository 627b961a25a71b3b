"""Finite-difference verification of analytic parameter gradients"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import torch
from torch import nn

from ..data.models import EnzymeReactionRecord
from ..model.network import VectorFieldNetwork
from .objectives import LossConfig, Stage, total_loss
from .state import corrupt_sample

logger = logging.getLogger(__name__)

STEP = 1e-4
THRESHOLD = 1e-4
# |fd - an| is divided by max(|fd|, |an|, ||grad||, FLOOR)
FLOOR = 1e-6


@dataclass
class GradcheckEntry:
    name: str
    shape: Tuple[int, ...]
    max_rel_error: float
    probes: List[Tuple[str, float, float]] = field(default_factory=list)  # (probe, fd, analytic)


@dataclass
class GradcheckReport:
    """Per-tensor errors sorted from worst to best"""

    entries: List[GradcheckEntry]
    threshold: float = THRESHOLD

    @property
    def max_error(self) -> float:
        return max((e.max_rel_error for e in self.entries), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error < self.threshold

    def failures(self) -> List[GradcheckEntry]:
        return [e for e in self.entries if e.max_rel_error >= self.threshold]


def relative_error(fd: float, analytic: float, scale: float = 0.0, floor: float = FLOOR) -> float:
    """|fd - analytic| over the largest of the two, the tensor's gradient norm and ``floor``"""
    return abs(fd - analytic) / max(abs(fd), abs(analytic), scale, floor)


def compare_gradients(
    loss_fn: Callable[[], torch.Tensor],
    parameters: Sequence[Tuple[str, nn.Parameter]],
    analytic: Dict[str, torch.Tensor],
    h: float = STEP,
    seed: int = 0,
) -> List[GradcheckEntry]:
    """Check ``analytic`` gradients against central differences of ``loss_fn``.

    Each tensor gets two probes: a seeded random unit direction and the
    single coordinate with the largest analytic gradient.
    """
    generator = torch.Generator().manual_seed(seed)
    entries = []
    for name, param in parameters:
        grad = analytic[name]
        direction = torch.randn(param.shape, generator=generator, dtype=param.dtype)
        direction = direction / direction.norm().clamp_min(1e-300)
        coordinate = torch.zeros_like(param)
        coordinate.view(-1)[grad.abs().reshape(-1).argmax()] = 1.0

        probes = []
        for probe, vector in (("random direction", direction), ("largest coordinate", coordinate)):
            fd = _directional_difference(loss_fn, param, vector, h)
            an = float((grad * vector).sum())
            probes.append((probe, fd, an))
        scale = float(grad.norm())
        error = max(relative_error(fd, an, scale) for _, fd, an in probes)
        entries.append(GradcheckEntry(name=name, shape=tuple(param.shape), max_rel_error=error, probes=probes))
    entries.sort(key=lambda e: e.max_rel_error, reverse=True)
    return entries


def _directional_difference(
    loss_fn: Callable[[], torch.Tensor], param: nn.Parameter, vector: torch.Tensor, h: float
) -> float:
    original = param.detach().clone()
    with torch.no_grad():
        param.copy_(original + h * vector)
        plus = float(loss_fn())
        param.copy_(original - h * vector)
        minus = float(loss_fn())
        param.copy_(original)
    return (plus - minus) / (2.0 * h)


def gradcheck(
    network: VectorFieldNetwork,
    datum: EnzymeReactionRecord,
    stage: Stage,
    loss: Optional[LossConfig] = None,
    t: float = 0.5,
    seed: int = 0,
    h: float = STEP,
) -> GradcheckReport:
    """Compare autograd against central differences for every named parameter.

    The corrupted state is drawn once from ``seed`` and reused for every
    evaluation, so the loss is a deterministic function of the parameters.
    """
    loss = loss or LossConfig()
    generator = torch.Generator().manual_seed(seed)
    state = corrupt_sample(datum, t, generator)

    def loss_fn() -> torch.Tensor:
        pred = network(state, datum.substrate, datum.product)
        return total_loss(pred, state, datum, stage, loss).total

    network.zero_grad()
    loss_fn().backward()
    parameters = list(network.named_parameters())
    analytic = {
        name: (p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p)) for name, p in parameters
    }
    network.zero_grad()

    entries = compare_gradients(loss_fn, parameters, analytic, h=h, seed=seed)
    report = GradcheckReport(entries=entries)
    logger.info("gradcheck: %d tensors, max relative error %.3e", len(entries), report.max_error)
    return report
