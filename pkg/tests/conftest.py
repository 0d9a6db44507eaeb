import numpy as np
import pytest

import pathnas as pn
from pathnas.predictor import default_config_for


@pytest.fixture(scope="session")
def toy_space():
    return pn.toy_space()


@pytest.fixture(scope="session")
def toy_table(toy_space):
    return pn.build_path_table(toy_space)


@pytest.fixture(scope="session")
def nb201_space():
    return pn.nb201_like_space()


@pytest.fixture(scope="session")
def nb201_table(nb201_space):
    return pn.build_path_table(nb201_space)


@pytest.fixture()
def small_model(toy_space, toy_table):
    """Downsized predictor on the toy space (fast forward/backward)."""
    cfg = default_config_for(
        toy_space, toy_table, seed=7,
        gin_dim=4, gin_layers=2, node_dim=4, feature_dim=4, token_dim=8, heads=2,
    )
    return pn.Predictor(cfg, toy_space, toy_table)


def random_archs(space, n, seed=0):
    rng = np.random.default_rng(seed)
    return [pn.random_architecture(space, rng) for _ in range(n)]


def distinct_samples(space, landscape, n, seed=0):
    """n hash-distinct labeled samples from the synthetic landscape."""
    rng = np.random.default_rng(seed)
    out, seen = [], set()
    while len(out) < n:
        arch = pn.random_architecture(space, rng)
        h = pn.arch_hash(arch)
        if h in seen:
            continue
        seen.add(h)
        out.append(pn.synthetic_sample(landscape, arch))
    return out
