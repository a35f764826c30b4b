"""
Shared fixtures for the RFI toolkit test suite.
"""
import numpy as np
import pytest

from rfi_toolkit.backend.operators import AffineMap, Identity
from rfi_toolkit.backend.problems import FiniteFamily
from rfi_toolkit.backend.sampling import IndexSampler


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def negation():
    """The single map T = -Id on the real line."""
    return FiniteFamily([AffineMap.scaling(-1.0, 1)])


@pytest.fixture
def identity_family():
    return FiniteFamily([Identity(1)])


@pytest.fixture
def halving():
    """The contraction x -> x / 2 on the real line."""
    return FiniteFamily([AffineMap.scaling(0.5, 1)])


@pytest.fixture
def make_sampler():
    def factory(family, seed=0, coupled=False):
        return IndexSampler.for_family(seed, family, coupled=coupled)
    return factory
