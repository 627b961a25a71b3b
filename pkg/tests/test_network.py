import pytest
import torch

from pocketforge.errors import DomainError, NumericError, ShapeError
from pocketforge.flows.discrete import AA_SPACE
from pocketforge.flows.state import corrupt_sample
from pocketforge.geometry.rigid import Rigid, backbone_atoms
from pocketforge.geometry.so3 import so3_exp
from pocketforge.model.network import build_network, clamped_divisor, compute_vector_fields


@pytest.fixture
def state(canonical, generator):
    return corrupt_sample(canonical, 0.4, generator)


def predict(network, state, record):
    return network(state, record.substrate, record.product)


def test_prediction_shapes(network, state, canonical, small_config):
    pred = predict(network, state, canonical)
    n = len(canonical)
    assert pred.frames1_hat.trans.shape == (n, 3)
    assert pred.aa_logits.shape == (n, 20)
    assert pred.atoms_hat.shape == (n, 4, 3)
    assert pred.affinity_hat.dim() == 0
    assert pred.ec_logits.shape == (7,)
    assert pred.coevo_logits.shape == (small_config.n_msa, small_config.n_token, 64)
    # padded co-evolution cells produce no logits
    assert torch.equal(pred.coevo_logits[:, -1], torch.zeros(small_config.n_msa, 64, dtype=torch.float64))


def test_optional_heads_skip(network, state, canonical):
    pred = predict(network, state.at(state.t, ec_t=None, coevo_t=None), canonical)
    assert pred.ec_logits is None and pred.coevo_logits is None
    bare = network(state)
    assert bare.aa_logits.shape == (len(canonical), 20)


def test_network_is_se3_equivariant(network, state, canonical, random_rotations, generator):
    reference = predict(network, state, canonical)
    for rot in random_rotations(5):
        shift = torch.randn(3, generator=generator, dtype=torch.float64)
        moved_state = state.transformed(rot, shift)
        moved = network(moved_state, canonical.substrate.transformed(rot, shift), canonical.product)
        expected = reference.frames1_hat.left_multiply(rot, shift)
        assert torch.allclose(moved.frames1_hat.rots, expected.rots, atol=1e-8)
        assert torch.allclose(moved.frames1_hat.trans, expected.trans, atol=1e-8)
        assert torch.allclose(moved.atoms_hat, backbone_atoms(expected), atol=1e-8)
        # scalar outputs are invariant
        assert torch.allclose(moved.aa_logits, reference.aa_logits, atol=1e-8)
        assert torch.allclose(moved.ec_logits, reference.ec_logits, atol=1e-8)
        assert torch.allclose(moved.coevo_logits, reference.coevo_logits, atol=1e-8)
        assert torch.allclose(moved.affinity_hat, reference.affinity_hat, atol=1e-8)


def test_masked_residue_is_ignored(network, state, canonical):
    mask = state.residue_mask.clone()
    mask[-1] = False
    masked = state.at(state.t, residue_mask=mask)
    pred = predict(network, masked, canonical)
    assert torch.equal(pred.aa_logits[-1], torch.zeros(20, dtype=torch.float64))
    # a masked residue keeps its input frame
    assert torch.allclose(pred.frames1_hat.trans[-1], masked.frames_t.trans[-1])

    aatypes = masked.aatypes_t.clone()
    aatypes[-1] = (int(aatypes[-1]) + 1) % AA_SPACE.num_states
    trans = masked.frames_t.trans.clone()
    trans[-1] += 0.7
    changed = masked.at(masked.t, aatypes_t=aatypes, frames_t=Rigid(masked.frames_t.rots, trans))
    other = predict(network, changed, canonical)
    assert torch.allclose(other.aa_logits[:-1], pred.aa_logits[:-1], atol=1e-10)
    assert torch.allclose(other.frames1_hat.trans[:-1], pred.frames1_hat.trans[:-1], atol=1e-10)
    assert torch.allclose(other.affinity_hat, pred.affinity_hat, atol=1e-10)


def test_build_network_is_deterministic(small_config, state, canonical):
    a = build_network(small_config, seed=4)
    b = build_network(small_config, seed=4)
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert torch.equal(pa, pb)
    assert torch.equal(predict(a, state, canonical).aa_logits, predict(b, state, canonical).aa_logits)
    c = build_network(small_config, seed=5)
    assert not torch.equal(next(a.parameters()), next(c.parameters()))


def test_non_finite_input_raises(network, state, canonical):
    trans = state.frames_t.trans.clone()
    trans[0, 0] = float("nan")
    broken = state.at(state.t, frames_t=Rigid(state.frames_t.rots, trans))
    with pytest.raises(NumericError):
        predict(network, broken, canonical)


def test_state_shape_mismatch(network, state):
    with pytest.raises(ShapeError):
        network(state.at(state.t, residue_index=state.residue_index[:-1]))


def test_vector_fields_point_at_prediction(network, state, canonical):
    pred = predict(network, state, canonical)
    trans_vf, rot_vf = compute_vector_fields(pred, state)
    divisor = clamped_divisor(state.t)
    assert torch.allclose(state.frames_t.trans + divisor * trans_vf, pred.frames1_hat.trans)
    stepped = state.frames_t.rots @ so3_exp(divisor * rot_vf)
    assert torch.allclose(stepped, pred.frames1_hat.rots, atol=1e-8)
    with pytest.raises(DomainError):
        compute_vector_fields(pred, state.at(1.0))


def test_clamped_divisor():
    assert clamped_divisor(0.0) == 1.0
    assert clamped_divisor(0.5) == 0.5
    assert clamped_divisor(0.99) == 0.05
