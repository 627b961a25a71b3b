import dataclasses
import math

import pytest
import torch

from pocketforge.errors import ConfigurationError, DomainError, InvalidStateError
from pocketforge.flows.objectives import (
    COMPONENTS,
    LossConfig,
    Stage,
    atom_ligand_distances,
    discrete_losses,
    distance_loss,
    flow_matching_losses,
    interaction_loss,
    surface_value,
    total_loss,
)
from pocketforge.flows.state import corrupt_sample
from pocketforge.geometry.rigid import Rigid, backbone_atoms
from pocketforge.model.network import Prediction


def perfect_prediction(record, affinity=0.5):
    """Exact frames with uniform logits for every head"""
    frames = record.pocket.frames
    m, t = record.coevo.shape
    return Prediction(
        frames1_hat=frames.clone(),
        aa_logits=torch.zeros(len(record), 20, dtype=torch.float64),
        atoms_hat=backbone_atoms(frames),
        affinity_hat=torch.tensor(affinity, dtype=torch.float64),
        ec_logits=torch.zeros(7, dtype=torch.float64),
        coevo_logits=torch.zeros(m, t, 64, dtype=torch.float64),
    )


@pytest.fixture
def state(canonical, generator):
    return corrupt_sample(canonical, 0.5, generator)


def test_surface_value_matches_direct_sum(generator):
    a = torch.randn(5, 3, generator=generator, dtype=torch.float64)
    ligand = torch.randn(4, 3, generator=generator, dtype=torch.float64)
    rho = 2.0
    for i in range(5):
        direct = -rho * math.log(sum(math.exp(-float(((a[i] - x) ** 2).sum()) / rho) for x in ligand))
        assert abs(float(surface_value(a[i], ligand, rho)) - direct) < 1e-10


def test_surface_value_ignores_masked_atoms(generator):
    a = torch.randn(3, generator=generator, dtype=torch.float64)
    ligand = torch.randn(3, 3, generator=generator, dtype=torch.float64)
    mask = torch.tensor([True, False, True])
    assert torch.allclose(surface_value(a, ligand, ligand_mask=mask), surface_value(a, ligand[mask]))


def test_interaction_loss_counts_atoms_inside_surface():
    ligand = torch.zeros(1, 3, dtype=torch.float64)
    atoms = torch.zeros(2, 4, 3, dtype=torch.float64)
    atoms[1] += 100.0  # far outside, no penalty
    # with one ligand atom S(a) = |a - a_0|^2, so atoms sitting on it have S = 0
    loss = interaction_loss(atoms, ligand, 2.0, 6.0, torch.ones(2, dtype=torch.bool))
    assert abs(float(loss) - 4 * 6.0) < 1e-12
    masked = interaction_loss(atoms, ligand, 2.0, 6.0, torch.tensor([False, True]))
    assert float(masked) == 0.0


def test_interaction_loss_length_scale():
    ligand = torch.zeros(1, 3, dtype=torch.float64)
    atoms = torch.zeros(1, 4, 3, dtype=torch.float64)
    atoms[0, :, 0] = 0.1  # 1 Å in model units
    loss = interaction_loss(atoms, ligand, 2.0, 6.0, torch.ones(1, dtype=torch.bool), length_scale=10.0)
    # S = |a|^2 = 1 for each of the four atoms
    assert abs(float(loss) - 4 * 5.0) < 1e-10


def test_distance_loss_gate():
    d_true = torch.tensor([0.5, 0.9, 0.2], dtype=torch.float64)
    d_pred = torch.tensor([0.7, 0.0, 0.2], dtype=torch.float64)
    assert abs(float(distance_loss(d_true, d_pred, 0.8)) - 0.04 / 2) < 1e-12
    mask = torch.tensor([False, True, True])
    assert float(distance_loss(d_true, d_pred, 0.8, mask)) == 0.0
    empty = distance_loss(d_true, d_pred, 0.1)
    assert float(empty) == 0.0


def test_atom_ligand_distances(generator):
    atoms = torch.randn(3, 4, 3, generator=generator, dtype=torch.float64)
    ligand = torch.randn(5, 3, generator=generator, dtype=torch.float64)
    d = atom_ligand_distances(atoms, ligand)
    assert d.shape == (3, 4, 5)
    assert abs(float(d[2, 1, 4]) - float((atoms[2, 1] - ligand[4]).norm())) < 1e-12


def test_flow_matching_losses_vanish_at_truth(canonical, state):
    trans, rot = flow_matching_losses(perfect_prediction(canonical), state, canonical)
    assert float(trans) < 1e-20
    assert float(rot) < 1e-12


def test_flow_matching_translation_term(canonical, state):
    pred = perfect_prediction(canonical)
    shifted = Rigid(pred.frames1_hat.rots, pred.frames1_hat.trans + 0.1)
    trans, _ = flow_matching_losses(dataclasses.replace(pred, frames1_hat=shifted), state, canonical)
    # each residue is off by (0.1, 0.1, 0.1) / (1 - t)
    expected = len(canonical) * 3 * (0.1 / 0.5) ** 2
    assert abs(float(trans) - expected) < 1e-10
    with pytest.raises(DomainError):
        flow_matching_losses(pred, state.at(1.0), canonical)


def test_translation_target_is_the_prior_displacement(canonical, generator):
    early = corrupt_sample(canonical, 0.3, generator)
    pred = perfect_prediction(canonical)
    # a zero field misses the target x1 - x0 entirely
    still = dataclasses.replace(pred, frames1_hat=early.frames_t.clone())
    trans, _ = flow_matching_losses(still, early, canonical)
    displacement = canonical.pocket.frames.trans - early.prior.trans
    mask = canonical.pocket.residue_mask.to(torch.float64)
    assert abs(float(trans) - float(((displacement**2).sum(-1) * mask).sum())) < 1e-10


@pytest.mark.parametrize("t", [0.96, 0.98])
def test_flow_matching_losses_vanish_past_the_divisor_clamp(canonical, generator, t):
    late = corrupt_sample(canonical, t, generator)
    trans, rot = flow_matching_losses(perfect_prediction(canonical), late, canonical)
    assert float(trans) < 1e-20
    assert float(rot) < 1e-12


def test_uniform_logits_give_log_k(canonical):
    aa, ec, coevo = discrete_losses(perfect_prediction(canonical), canonical)
    assert abs(float(aa) - math.log(20)) < 1e-12
    assert abs(float(ec) - math.log(7)) < 1e-12
    assert abs(float(coevo) - math.log(64)) < 1e-12


def test_discrete_losses_reject_mask_targets(canonical):
    pocket = canonical.pocket
    aatypes = pocket.aatypes.clone()
    aatypes[0] = 20
    bad = dataclasses.replace(canonical, pocket=dataclasses.replace(pocket, aatypes=aatypes))
    with pytest.raises(InvalidStateError):
        discrete_losses(perfect_prediction(canonical), bad)


def test_backbone_stage_components(canonical, state):
    breakdown = total_loss(perfect_prediction(canonical), state, canonical, Stage.BACKBONE, LossConfig())
    assert set(breakdown.active()) == {"trans", "rot", "aa"}
    assert abs(float(breakdown.total) - sum(float(v) for v in breakdown.active().values())) < 1e-12


def test_ligand_stage_adds_geometry_and_affinity(canonical, state):
    pred = perfect_prediction(canonical, affinity=1.5)
    breakdown = total_loss(pred, state, canonical, "ligand", LossConfig())
    assert set(breakdown.active()) == {"trans", "rot", "aa", "inter", "dist", "kd"}
    assert abs(float(breakdown.kd) - 1.0) < 1e-12
    # the standardized target replaces the raw label
    standardized = total_loss(pred, state, canonical, "ligand", LossConfig(), affinity_target=1.5)
    assert float(standardized.kd) == 0.0
    assert float(breakdown.dist) == 0.0


def test_enzyme_stage_components_and_weights(canonical, state):
    pred = perfect_prediction(canonical)
    breakdown = total_loss(pred, state, canonical, Stage.ENZYME, LossConfig())
    assert set(breakdown.active()) == {"trans", "rot", "aa", "ec", "coevo", "inter", "dist"}
    no_geometry = total_loss(pred, state, canonical, Stage.ENZYME, LossConfig(enzyme_geometry=False))
    assert set(no_geometry.active()) == {"trans", "rot", "aa", "ec", "coevo"}

    weights = LossConfig(ec=2.0, coevo=0.0, enzyme_geometry=False)
    weighted = total_loss(pred, state, canonical, Stage.ENZYME, weights)
    expected = sum(float(v) for k, v in no_geometry.active().items() if k not in ("ec", "coevo"))
    expected += 2.0 * math.log(7)
    assert abs(float(weighted.total) - expected) < 1e-10


def test_stage_requirements(canonical, state):
    pred = perfect_prediction(canonical)
    with pytest.raises(ConfigurationError):
        total_loss(pred, state, dataclasses.replace(canonical, affinity=None), Stage.LIGAND, LossConfig())
    with pytest.raises(ConfigurationError):
        total_loss(dataclasses.replace(pred, ec_logits=None), state, canonical, Stage.ENZYME, LossConfig())
    with pytest.raises(ConfigurationError):
        total_loss(pred, state, dataclasses.replace(canonical, coevo=None), Stage.ENZYME, LossConfig())
    with pytest.raises(ValueError):
        total_loss(pred, state, canonical, "pretrain", LossConfig())


def test_breakdown_record(canonical, state):
    breakdown = total_loss(perfect_prediction(canonical), state, canonical, Stage.BACKBONE, LossConfig())
    record = breakdown.as_record()
    assert set(record) == set(COMPONENTS) | {"total"}
    assert record["ec"] is None and record["kd"] is None
    assert record["aa"] == pytest.approx(math.log(20))
