"""Shared fixtures: tiny nets, datasets, and rngs used across the suite."""

import numpy as np
import pytest

from volumize import (
    Dataset,
    LayerSpec,
    OptimizerSpec,
    SeededRng,
    gen_blobs,
    init_network,
    stable_hash,
)


@pytest.fixture
def rng():
    return SeededRng(stable_hash("tests", 0))


@pytest.fixture
def small_net(rng):
    """8 -> 16 -> 4 relu MLP, He-uniform init."""
    specs = [LayerSpec(8, 16, activation="relu"), LayerSpec(16, 4)]
    return init_network(specs, rng.spawn("net"))


@pytest.fixture
def tiny_data(rng):
    """Separable 3-class blobs, small enough for fast epochs."""
    return gen_blobs(rng.spawn("data"), n_classes=3, n_per_class=40, dim=5, spread=0.5)


@pytest.fixture
def sgd_spec():
    return OptimizerSpec(kind="sgd", lr=0.05, mu=0.9)


def random_matrix(rng, rows, cols, scale=1.0):
    return scale * (2.0 * rng.random((rows, cols)) - 1.0)


@pytest.fixture
def np_rng():
    return np.random.default_rng(1234)
