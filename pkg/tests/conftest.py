import numpy as np
import pytest
from pathlib import Path


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture(scope="session")
def cache_dir():
    """On-disk cache for expensive reference-posterior samples.

    Lives next to the tests so repeated suite runs reuse the rejection
    samples instead of regenerating them.
    """
    path = Path(__file__).parent / "_cache"
    path.mkdir(exist_ok=True)
    return path
