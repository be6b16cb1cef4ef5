import numpy as np
import pytest

from meshacq.core import ProblemKind, ProblemSpec
from meshacq.generators import build_corpus


@pytest.fixture(scope="session")
def burgers_spec():
    return ProblemSpec(ProblemKind.BURGERS)


@pytest.fixture(scope="session")
def small_corpus(burgers_spec):
    """Enough instances for short harness runs: 20 pretrain + 10 holdout + pool."""
    return build_corpus(burgers_spec, train=90, test=30, seed=5)


@pytest.fixture(scope="session")
def desk_corpus(burgers_spec):
    """Full desk-scale Burgers corpus shared by the acceptance checks."""
    return build_corpus(burgers_spec, train=1000, test=200, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
