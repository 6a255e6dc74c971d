import numpy as np
import pytest

from walkrg.rng import stream


@pytest.fixture
def rng():
    return stream(1234, 0, purpose=99)
