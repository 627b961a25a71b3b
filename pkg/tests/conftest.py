"""Shared fixtures: seeded generators, a small network and tiny records"""

import numpy as np
import pytest
import torch

from pocketforge.data.dataset import assemble_records
from pocketforge.data.models import Molecule
from pocketforge.data.synthetic import SyntheticConfig, canonical_instance, generate_synthetic_dataset
from pocketforge.geometry.so3 import sample_uniform_rotations
from pocketforge.model.network import ModelConfig, build_network


@pytest.fixture
def generator():
    return torch.Generator().manual_seed(0)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def small_config():
    return ModelConfig(
        node_dim=16,
        edge_dim=8,
        num_blocks=1,
        num_heads=2,
        ipa_head_dim=4,
        num_query_points=2,
        num_value_points=2,
        num_bins=8,
        rbf_bins=8,
        mol_layers=1,
        mpnn_layers=1,
        readout_rounds=1,
        coevo_dim=8,
        coevo_layers=1,
        coevo_heads=2,
        n_msa=2,
        n_token=8,
    )


@pytest.fixture
def network(small_config):
    return build_network(small_config, seed=0)


@pytest.fixture
def canonical(small_config):
    return canonical_instance(n_msa=small_config.n_msa, n_token=small_config.n_token, seed=0)


@pytest.fixture
def random_rotations(generator):
    def draw(n):
        return sample_uniform_rotations(n, generator=generator)

    return draw


@pytest.fixture
def ethanol():
    """Three heavy atoms with a C-C and a C-O bond, coordinates in Å"""
    return Molecule(
        elements=["C", "C", "O"],
        coords=np.array([[0.0, 0.0, 0.0], [1.5, 0.0, 0.0], [2.0, 1.4, 0.0]]),
        bonds=[(0, 1, 1), (1, 2, 1)],
        name="ethanol",
    )


@pytest.fixture
def raw_records():
    return generate_synthetic_dataset(7, SyntheticConfig(records=3))


@pytest.fixture
def records(raw_records, small_config):
    return assemble_records(raw_records, n_msa=small_config.n_msa, n_token=small_config.n_token)
