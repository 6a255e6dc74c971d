import numpy as np
import pytest

from walkrg.errors import ConfigurationError, DomainError
from walkrg.longrange import LongRangeStepSampler, radial_tail_slope, sample_longrange_saw


def test_probabilities_normalised_and_symmetric():
    s = LongRangeStepSampler(1, 1.5)
    assert s.probabilities.sum() == pytest.approx(1.0)
    assert s.probability([3]) == pytest.approx(s.probability([-3]))
    assert s.probability([0]) == 0.0


def test_domain_checks():
    with pytest.raises(DomainError):
        LongRangeStepSampler(1, 2.0)
    with pytest.raises(ConfigurationError):
        LongRangeStepSampler(1, 0.2, R=4, max_tail=1e-6)


def test_tail_exponent(rng):
    alpha = 1.0
    s = LongRangeStepSampler(1, alpha, R=512)
    steps = s.sample(rng, 400_000)
    slope = radial_tail_slope(steps, 8, 128)
    assert slope == pytest.approx(-(1 + alpha), abs=0.15)


def test_saw_sampler(rng):
    s = LongRangeStepSampler(2, 1.5, R=64)
    w = sample_longrange_saw(s, 5, rng)
    assert w is not None and len({tuple(p) for p in w.tolist()}) == 6
