"""Conditional Euler sampler over frames and discrete sites"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import torch

from ..data.models import CoEvoMatrix, Molecule2D, Molecule3D, Pocket
from ..errors import DomainError, NumericError, SamplingError
from ..geometry.rigid import Rigid
from ..geometry.so3 import so3_exp
from ..model.network import VectorFieldNetwork, compute_vector_fields
from .discrete import AA_SPACE, COEVO_SPACE, EC_SPACE, euler_discrete_step
from .state import FlowState, initial_state

logger = logging.getLogger(__name__)


@dataclass
class TrajectoryPoint:
    t: float
    frames: Rigid
    aatypes: torch.Tensor


@dataclass
class SampleResult:
    """The t = 1 state of one sampling run (model units, substrate frame)"""

    pocket: Pocket
    ec: Optional[int]
    coevo: Optional[CoEvoMatrix]
    trajectory: List[TrajectoryPoint] = field(default_factory=list)


def _resolve_masks(current: torch.Tensor, logits: torch.Tensor, mask_index: int) -> torch.Tensor:
    return torch.where(current == mask_index, logits.argmax(-1), current)


@torch.no_grad()
def sample(
    network: VectorFieldNetwork,
    substrate: Optional[Molecule3D],
    product: Optional[Molecule2D],
    n_res: int,
    num_steps: int = 50,
    generator: Optional[torch.Generator] = None,
    prior: Optional[Rigid] = None,
    with_ec: bool = True,
    with_coevo: bool = True,
    keep_trajectory: bool = False,
) -> SampleResult:
    """Integrate from the prior (all sites masked) to t = 1 in ``num_steps`` steps.

    At each t = k/T the network predicts clean frames and logits; frames
    take an Euler step along the vector fields (rotations compose
    ``so3_exp(dt * field)`` on the right and are re-projected onto SO(3)),
    discrete sites take a CTMC Euler step.  The last step emits the
    predicted clean frames and resolves any remaining masks by argmax.

    Args:
        prior: Initial frames; drawn from ``generator`` when omitted
    """
    if num_steps < 2:
        raise DomainError(f"sampling needs at least 2 steps, got {num_steps}")
    if n_res < 1:
        raise DomainError(f"sampling needs at least one residue, got {n_res}")
    network.eval()
    config = network.config
    state = initial_state(
        n_res,
        generator=generator,
        prior=prior,
        n_msa=config.n_msa if with_coevo else None,
        n_token=config.n_token if with_coevo else None,
        with_ec=with_ec,
    )
    dt = 1.0 / num_steps
    trajectory: List[TrajectoryPoint] = []
    if keep_trajectory:
        trajectory.append(TrajectoryPoint(0.0, state.frames_t.clone(), state.aatypes_t.clone()))

    for k in range(num_steps):
        t = k / num_steps
        state = state.at(t)
        try:
            pred = network(state, substrate, product)
        except NumericError as e:
            raise SamplingError(f"step {k} (t={t:.4f}): {e}", step=k) from e

        last = k == num_steps - 1
        if last:
            frames = pred.frames1_hat.renormalize()
            aatypes = _resolve_masks(state.aatypes_t, pred.aa_logits, AA_SPACE.mask_index)
            ec_t = state.ec_t
            if ec_t is not None and pred.ec_logits is not None:
                ec_t = _resolve_masks(ec_t, pred.ec_logits, EC_SPACE.mask_index)
            coevo_t = state.coevo_t
            if coevo_t is not None and pred.coevo_logits is not None:
                coevo_t = coevo_t.with_tokens(
                    _resolve_masks(coevo_t.tokens, pred.coevo_logits, COEVO_SPACE.mask_index)
                )
        else:
            trans_vf, rot_vf = compute_vector_fields(pred, state)
            frames = Rigid(
                state.frames_t.rots @ so3_exp(dt * rot_vf),
                state.frames_t.trans + dt * trans_vf,
            ).renormalize()
            aatypes = euler_discrete_step(
                state.aatypes_t, pred.aa_logits.softmax(-1), t, dt, AA_SPACE, generator
            )
            ec_t = state.ec_t
            if ec_t is not None and pred.ec_logits is not None:
                ec_t = euler_discrete_step(ec_t, pred.ec_logits.softmax(-1), t, dt, EC_SPACE, generator)
            coevo_t = state.coevo_t
            if coevo_t is not None and pred.coevo_logits is not None:
                tokens = euler_discrete_step(
                    coevo_t.tokens, pred.coevo_logits.softmax(-1), t, dt, COEVO_SPACE, generator
                )
                coevo_t = coevo_t.with_tokens(tokens)

        if not (torch.isfinite(frames.trans).all() and torch.isfinite(frames.rots).all()):
            raise SamplingError(f"non-finite frames after step {k} (t={t:.4f})", step=k)
        state = FlowState(
            t=t + dt,
            frames_t=frames,
            aatypes_t=aatypes,
            residue_mask=state.residue_mask,
            residue_index=state.residue_index,
            prior=state.prior,
            ec_t=ec_t,
            coevo_t=coevo_t,
        )
        if keep_trajectory:
            trajectory.append(TrajectoryPoint(state.t, frames.clone(), aatypes.clone()))

    pocket = Pocket(
        frames=state.frames_t,
        aatypes=state.aatypes_t,
        residue_index=state.residue_index + 1,
        residue_mask=state.residue_mask,
    )
    ec = int(state.ec_t) if state.ec_t is not None else None
    logger.debug("sampled %d residues in %d steps", n_res, num_steps)
    return SampleResult(pocket=pocket, ec=ec, coevo=state.coevo_t, trajectory=trajectory)


def transform_sample(result: SampleResult, rot: torch.Tensor, trans: Optional[torch.Tensor] = None) -> Rigid:
    """Frames of ``result`` after a global rigid motion"""
    return result.pocket.frames.left_multiply(rot, trans)


def frames_rotation_error(frames: Rigid) -> Tuple[float, float]:
    """Largest |RᵀR - I| and |det R - 1| across a stack of frames"""
    rots = frames.rots
    eye = torch.eye(3, dtype=rots.dtype)
    ortho = torch.linalg.matrix_norm(rots.transpose(-1, -2) @ rots - eye).max()
    det = (torch.linalg.det(rots) - 1.0).abs().max()
    return float(ortho), float(det)
