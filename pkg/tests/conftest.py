import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from blockspin.model import BlockModelSpec, validate_spec

settings.register_profile("default", max_examples=50, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=200, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

HIGH_PAIR_A = np.array([[1.1, 0.6], [0.6, 1.1]])
LOW_PAIR_A = np.array([[1.8, 0.8], [0.8, 1.8]])


def random_pd(rng, k, scale=1.0):
    """Random symmetric positive-definite matrix with a controlled spectrum."""
    Q, _ = np.linalg.qr(rng.standard_normal((k, k)))
    w = rng.uniform(0.1, 1.0, size=k) * scale
    A = Q @ np.diag(w) @ Q.T
    return 0.5 * (A + A.T)


@st.composite
def pd_specs(draw, max_k=4, max_size=15, max_N=60):
    """Valid block models: PD interaction, non-empty blocks."""
    k = draw(st.integers(1, max_k))
    sizes = draw(st.lists(st.integers(1, max_size), min_size=k, max_size=k).filter(lambda s: sum(s) <= max_N))
    seed = draw(st.integers(0, 2**32 - 1))
    scale = draw(st.floats(0.2, 4.0))
    A = random_pd(np.random.default_rng(seed), k, scale)
    return BlockModelSpec(k, tuple(sizes), A)


@pytest.fixture
def high_pair():
    spec = BlockModelSpec(2, (6, 6), HIGH_PAIR_A)
    return spec, validate_spec(spec)


@pytest.fixture
def low_pair():
    spec = BlockModelSpec(2, (6, 6), LOW_PAIR_A)
    return spec, validate_spec(spec)
