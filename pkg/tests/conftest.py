import numpy as np
import pytest

from fairvl.datamodel import default_schema, make_schema


@pytest.fixture
def binary_schema():
    return make_schema([("gender", ["male", "female"])])


@pytest.fixture
def demo_schema():
    return default_schema()


@pytest.fixture
def rng():
    return np.random.default_rng(0)
