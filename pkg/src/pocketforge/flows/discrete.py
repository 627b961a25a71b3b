"""Masking discrete flows: corruption, conditional rates and CTMC Euler steps.

States are 0-based ``LongTensor`` indices; a space with ``K`` real states
uses index ``K`` for the mask.  Every function works site-wise on tensors of
any shape, so one call covers all residues or every co-evolution cell.
"""

from dataclasses import dataclass
from typing import Optional

import torch

from ..errors import DomainError, InvalidStateError, StepSizeError

JUMP_TOLERANCE = 1e-9
SIMPLEX_TOLERANCE = 1e-6


@dataclass(frozen=True)
class DiscreteSpace:
    """A categorical variable with ``num_real_states`` values plus a mask"""

    name: str
    num_real_states: int

    @property
    def mask_index(self) -> int:
        return self.num_real_states

    @property
    def num_states(self) -> int:
        return self.num_real_states + 1

    def check_real(self, states: torch.Tensor, what: str = "state") -> None:
        if ((states < 0) | (states >= self.num_real_states)).any():
            bad = states[(states < 0) | (states >= self.num_real_states)].unique().tolist()
            raise InvalidStateError(
                f"{self.name} {what} must lie in [0, {self.num_real_states}), got {bad}"
            )


AA_SPACE = DiscreteSpace("amino acid", 20)
EC_SPACE = DiscreteSpace("EC class", 7)
COEVO_SPACE = DiscreteSpace("co-evolution token", 64)


@dataclass
class RateRow:
    """Off-diagonal jump rates out of ``from_state``; the diagonal is implied"""

    from_state: int
    rates: torch.Tensor

    @property
    def diagonal(self) -> float:
        return -float(self.rates.sum())


def corrupt_discrete(
    c1: torch.Tensor,
    t: float,
    space: DiscreteSpace,
    generator: Optional[torch.Generator] = None,
) -> torch.Tensor:
    """Keep each clean state with probability t, otherwise mask it"""
    c1 = torch.as_tensor(c1, dtype=torch.long)
    space.check_real(c1, "clean state")
    keep = torch.rand(c1.shape, generator=generator, dtype=torch.float64) < t
    return torch.where(keep, c1, torch.full_like(c1, space.mask_index))


def conditional_rate_row(c_t: int, c1: int, t: float, space: DiscreteSpace) -> RateRow:
    """R_t(c_t, · | c1) = δ(c1, ·) δ(c_t, mask) / (1 - t)"""
    if t >= 1.0:
        raise DomainError(f"conditional rates are defined for t < 1, got t={t}")
    space.check_real(torch.tensor([c1]), "target state")
    rates = torch.zeros(space.num_states, dtype=torch.float64)
    if c_t == space.mask_index:
        rates[c1] = 1.0 / (1.0 - t)
    return RateRow(from_state=c_t, rates=rates)


def expected_rates(
    c_t: torch.Tensor, probs: torch.Tensor, t: float, space: DiscreteSpace
) -> torch.Tensor:
    """Expected rate rows ``[..., K + 1]`` under a predicted clean distribution.

    Args:
        c_t: Current states ``[...]``
        probs: Predicted p(c1) over real states ``[..., K]``
        t: Current time, < 1
        space: The discrete space

    Returns:
        Rates toward each state; zero rows for unmasked sites and zero rate
        toward the mask everywhere
    """
    if t >= 1.0:
        raise DomainError(f"conditional rates are defined for t < 1, got t={t}")
    masked = (c_t == space.mask_index).to(probs.dtype)[..., None]
    toward_real = masked * probs / (1.0 - t)
    return torch.cat([toward_real, torch.zeros_like(toward_real[..., :1])], dim=-1)


def euler_discrete_step(
    c_t: torch.Tensor,
    probs: torch.Tensor,
    t: float,
    dt: float,
    space: DiscreteSpace,
    generator: Optional[torch.Generator] = None,
) -> torch.Tensor:
    """One Euler step of the masking CTMC, sampled independently per site"""
    if t + dt > 1.0 + JUMP_TOLERANCE:
        raise DomainError(f"step overshoots t=1: t={t}, dt={dt}")
    if probs.shape[-1] != space.num_real_states:
        raise DomainError(
            f"{space.name} distribution has {probs.shape[-1]} entries, "
            f"expected {space.num_real_states}"
        )
    totals = probs.sum(-1)
    if ((totals - 1.0).abs() > SIMPLEX_TOLERANCE).any() or (probs < 0).any():
        raise DomainError(f"{space.name} distribution is not on the simplex")
    probs = probs / totals[..., None]

    jump = expected_rates(c_t, probs.detach(), t, space) * dt
    jump_total = jump.sum(-1)
    if (jump_total > 1.0 + JUMP_TOLERANCE).any():
        raise StepSizeError(
            f"{space.name} jump probability {jump_total.max().item():.6f} exceeds 1 "
            f"at t={t}, dt={dt}",
            stage="euler_discrete_step",
        )
    overshoot = jump_total > 1.0
    jump = torch.where(overshoot[..., None], jump / jump_total[..., None], jump)
    stay = (1.0 - jump.sum(-1)).clamp_min(0.0)

    transition = jump.clone()
    transition.scatter_add_(-1, c_t[..., None], stay[..., None])

    flat = transition.reshape(-1, space.num_states)
    if flat.shape[0] == 0:
        return c_t.clone()
    sampled = torch.multinomial(flat, 1, generator=generator).squeeze(-1)
    return sampled.reshape(c_t.shape)
