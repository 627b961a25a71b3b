import math

import pytest
import torch

from pocketforge.errors import DomainError, InvalidStateError, StepSizeError
from pocketforge.flows.discrete import (
    AA_SPACE,
    COEVO_SPACE,
    EC_SPACE,
    conditional_rate_row,
    corrupt_discrete,
    euler_discrete_step,
    expected_rates,
)

MASK = AA_SPACE.mask_index


def one_hot(states, k=20):
    return torch.nn.functional.one_hot(torch.as_tensor(states), k).to(torch.float64)


def test_space_sizes():
    assert (AA_SPACE.num_real_states, AA_SPACE.mask_index, AA_SPACE.num_states) == (20, 20, 21)
    assert EC_SPACE.mask_index == 7
    assert COEVO_SPACE.mask_index == 64


def test_conditional_rate_row_from_mask():
    row = conditional_rate_row(MASK, 3, 0.25, AA_SPACE)
    expected = torch.zeros(21, dtype=torch.float64)
    expected[3] = 1.0 / 0.75
    assert torch.equal(row.rates, expected)
    assert row.diagonal == -1.0 / 0.75
    assert row.rates[MASK] == 0.0


def test_conditional_rate_row_from_real_state_is_zero():
    row = conditional_rate_row(5, 3, 0.5, AA_SPACE)
    assert torch.equal(row.rates, torch.zeros(21, dtype=torch.float64))
    assert row.diagonal == 0.0


def test_conditional_rate_row_rejects_bad_inputs():
    with pytest.raises(DomainError):
        conditional_rate_row(MASK, 3, 1.0, AA_SPACE)
    with pytest.raises(InvalidStateError):
        conditional_rate_row(MASK, MASK, 0.5, AA_SPACE)


def test_expected_rates_mix_conditional_rows():
    probs = torch.softmax(torch.arange(20, dtype=torch.float64), -1)
    c_t = torch.tensor([MASK, 4])
    rates = expected_rates(c_t, probs.expand(2, 20), 0.6, AA_SPACE)
    assert torch.allclose(rates[0, :20], probs / 0.4)
    assert abs(float(rates[0].sum()) - 1.0 / 0.4) < 1e-12
    assert torch.equal(rates[1], torch.zeros(21, dtype=torch.float64))
    assert (rates[:, MASK] == 0).all()
    assert (rates >= 0).all()


def test_corrupt_keeps_fraction_t(generator):
    clean = torch.randint(20, (10_000,), generator=generator)
    t = 0.3
    noisy = corrupt_discrete(clean, t, AA_SPACE, generator)
    kept = noisy != MASK
    assert torch.equal(noisy[kept], clean[kept])
    sigma = math.sqrt(t * (1 - t) / clean.numel())
    assert abs(float(kept.double().mean()) - t) < 3 * sigma


def test_corrupt_endpoints(generator):
    clean = torch.randint(20, (100,), generator=generator)
    assert (corrupt_discrete(clean, 0.0, AA_SPACE, generator) == MASK).all()
    assert torch.equal(corrupt_discrete(clean, 1.0, AA_SPACE, generator), clean)
    with pytest.raises(InvalidStateError):
        corrupt_discrete(torch.tensor([MASK]), 0.5, AA_SPACE, generator)


def test_unmasked_sites_never_move(generator):
    c_t = torch.arange(20)
    probs = torch.full((20, 20), 1.0 / 20, dtype=torch.float64)
    for _ in range(10):
        assert torch.equal(euler_discrete_step(c_t, probs, 0.5, 0.25, AA_SPACE, generator), c_t)


def test_jump_probability_matches_closed_form(generator):
    n = 10_000
    c_t = torch.full((n,), MASK)
    probs = one_hot([2] * n)
    out = euler_discrete_step(c_t, probs, 0.5, 0.1, AA_SPACE, generator)
    assert set(out.unique().tolist()) <= {2, MASK}
    p = 0.1 / 0.5
    sigma = math.sqrt(p * (1 - p) / n)
    assert abs(float((out == 2).double().mean()) - p) < 3 * sigma


def test_marginal_unmasked_fraction_tracks_time(generator):
    n, steps = 10_000, 10
    c1 = torch.randint(20, (n,), generator=generator)
    c_t = torch.full((n,), MASK)
    probs = one_hot(c1)
    for k in range(steps // 2):
        c_t = euler_discrete_step(c_t, probs, k / steps, 1 / steps, AA_SPACE, generator)
    t = 0.5
    sigma = math.sqrt(t * (1 - t) / n)
    assert abs(float((c_t != MASK).double().mean()) - t) < 3 * sigma


def test_trajectories_unmask_monotonically_and_absorb(generator):
    chains, sites, steps = 1000, 3, 50
    c1 = torch.randint(20, (chains, sites), generator=generator)
    probs = one_hot(c1)
    c_t = torch.full((chains, sites), MASK)
    for k in range(steps):
        nxt = euler_discrete_step(c_t, probs, k / steps, 1 / steps, AA_SPACE, generator)
        unmasked = c_t != MASK
        assert torch.equal(nxt[unmasked], c_t[unmasked])
        c_t = nxt
    assert float((c_t == c1).double().mean()) >= 0.99


def test_last_step_jumps_with_probability_one(generator):
    c_t = torch.full((500,), MASK)
    probs = torch.softmax(torch.randn(500, 20, generator=generator, dtype=torch.float64), -1)
    out = euler_discrete_step(c_t, probs, 0.98, 0.02, AA_SPACE, generator)
    assert (out != MASK).all()


def test_step_errors(generator):
    c_t = torch.tensor([MASK])
    probs = one_hot([1])
    with pytest.raises(DomainError):
        euler_discrete_step(c_t, probs, 0.9, 0.2, AA_SPACE, generator)
    with pytest.raises(DomainError):
        euler_discrete_step(c_t, 0.5 * probs, 0.1, 0.1, AA_SPACE, generator)
    with pytest.raises(DomainError):
        euler_discrete_step(c_t, one_hot([1], k=7), 0.1, 0.1, AA_SPACE, generator)
    t = 1.0 - 1e-10
    with pytest.raises(StepSizeError):
        euler_discrete_step(c_t, probs, t, 1.5e-10, AA_SPACE, generator)
