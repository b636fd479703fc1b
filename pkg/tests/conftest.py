import numpy as np
import pytest

from copekit.gammatone import FilterbankSpec, Frontend


@pytest.fixture(scope="session")
def small_spec():
    return FilterbankSpec(num_channels=24, f_min=100.0, f_max=7000.0, sample_rate=16000)


@pytest.fixture(scope="session")
def small_frontend(small_spec):
    return Frontend(spec=small_spec, frame_size=512)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
