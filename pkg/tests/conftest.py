from pathlib import Path
import sys

import numpy as np
import pytest

BIN_DIR = Path(__file__).parent.parent / 'bin'
sys.path.insert(0, str(BIN_DIR))

from datasets import gen_two_moons, split_normalize  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(20210611)


@pytest.fixture(scope='session')
def moons():
    """Standardised low-noise two-moons splits."""
    return split_normalize(gen_two_moons(400, 0.1, seed=0), 0.8, seed=0)


@pytest.fixture(scope='session')
def small_moons():
    """64 standardised training examples; two minibatches of 32 per epoch."""
    dataset = gen_two_moons(80, 0.2, seed=3)
    train, _ = split_normalize(dataset, 0.8, seed=0)
    return train
