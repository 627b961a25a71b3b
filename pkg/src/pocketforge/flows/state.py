"""Flow state at time t and joint corruption of clean records"""

from dataclasses import dataclass, replace
from typing import Optional

import torch

from ..data.models import CoEvoMatrix, EnzymeReactionRecord
from ..errors import DomainError
from ..geometry.rigid import Rigid, sample_frames_prior
from ..geometry.so3 import geodesic_interpolate, translation_interpolate
from .discrete import AA_SPACE, COEVO_SPACE, EC_SPACE, corrupt_discrete


@dataclass
class FlowState:
    """A sample on the probability path at time ``t``.

    ``prior`` caches the frames drawn at corruption time; the translation
    target is computed from it.
    """

    t: float
    frames_t: Rigid
    aatypes_t: torch.Tensor  # [N] long
    residue_mask: torch.Tensor  # [N] bool
    residue_index: torch.Tensor  # [N] long
    prior: Rigid
    ec_t: Optional[torch.Tensor] = None  # 0-dim long
    coevo_t: Optional[CoEvoMatrix] = None

    def __len__(self) -> int:
        return self.aatypes_t.shape[0]

    def at(self, t: float, **changes) -> "FlowState":
        return replace(self, t=t, **changes)

    def transformed(self, rot: torch.Tensor, trans: Optional[torch.Tensor] = None) -> "FlowState":
        """Apply one global rigid motion to the current and cached prior frames"""
        return replace(
            self,
            frames_t=self.frames_t.left_multiply(rot, trans),
            prior=self.prior.left_multiply(rot, trans),
        )


def corrupt_sample(
    datum: EnzymeReactionRecord,
    t: float,
    generator: Optional[torch.Generator] = None,
    prior: Optional[Rigid] = None,
) -> FlowState:
    """Interpolate every variable of a clean record to time ``t``.

    Frames follow the straight-line/geodesic interpolants from freshly drawn
    prior frames; amino acids, EC class and co-evolution cells are masked
    independently with probability 1 - t.  Padding cells of the grid stay
    as they are.  Residues are indexed by their order in the pocket, the
    same indexing the sampler uses.
    """
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"t must lie in [0, 1], got {t}")
    pocket = datum.pocket
    n = len(pocket)
    if prior is None:
        prior = sample_frames_prior(n, generator)

    clean = pocket.frames
    frames_t = Rigid(
        geodesic_interpolate(prior.rots, clean.rots, t),
        translation_interpolate(prior.trans, clean.trans, t),
    )
    if t == 1.0:
        frames_t = clean.clone()

    aatypes_t = corrupt_discrete(pocket.aatypes, t, AA_SPACE, generator)
    aatypes_t = torch.where(pocket.residue_mask, aatypes_t, torch.full_like(aatypes_t, AA_SPACE.mask_index))

    ec_t = None
    if datum.ec is not None:
        ec_t = corrupt_discrete(torch.tensor(datum.ec), t, EC_SPACE, generator)

    coevo_t = None
    if datum.coevo is not None:
        grid = datum.coevo
        corrupted = corrupt_discrete(grid.tokens, t, COEVO_SPACE, generator)
        coevo_t = grid.with_tokens(torch.where(grid.cell_mask, corrupted, grid.tokens))

    return FlowState(
        t=float(t),
        frames_t=frames_t,
        aatypes_t=aatypes_t,
        residue_mask=pocket.residue_mask.clone(),
        residue_index=torch.arange(n, dtype=torch.long),
        prior=prior,
        ec_t=ec_t,
        coevo_t=coevo_t,
    )


def initial_state(
    n_res: int,
    generator: Optional[torch.Generator] = None,
    prior: Optional[Rigid] = None,
    n_msa: Optional[int] = None,
    n_token: Optional[int] = None,
    with_ec: bool = True,
) -> FlowState:
    """The t = 0 state used by the sampler: prior frames, everything masked"""
    if prior is None:
        prior = sample_frames_prior(n_res, generator)
    coevo_t = None
    if n_msa and n_token:
        coevo_t = CoEvoMatrix(
            tokens=torch.full((n_msa, n_token), COEVO_SPACE.mask_index, dtype=torch.long),
            row_mask=torch.ones(n_msa, dtype=torch.bool),
            cell_mask=torch.ones(n_msa, n_token, dtype=torch.bool),
        )
    return FlowState(
        t=0.0,
        frames_t=prior.clone(),
        aatypes_t=torch.full((n_res,), AA_SPACE.mask_index, dtype=torch.long),
        residue_mask=torch.ones(n_res, dtype=torch.bool),
        residue_index=torch.arange(n_res, dtype=torch.long),
        prior=prior,
        ec_t=torch.tensor(EC_SPACE.mask_index) if with_ec else None,
        coevo_t=coevo_t,
    )
