import math

import numpy as np
import pytest

from walkrg.errors import ConfigurationError, UnsupportedRegime
from walkrg.longrange import LongRangeStepSampler
from walkrg.wsaw import (
    GraphGenerator, LatticeGenerator, estimate_c, estimate_chi, one_jump_bounds, path_graph_laplacian,
    sample_local_time, self_intersection_bruteforce, self_intersection_local_time, simulate_ct_walk,
)


def test_local_time_oracle(rng):
    gen = LatticeGenerator.nearest_neighbour(1)
    for _ in range(50):
        w = simulate_ct_walk(gen, 3.0, rng)
        assert self_intersection_local_time(w) == pytest.approx(self_intersection_bruteforce(w), abs=1e-10)
        assert sum(w.local_times().values()) == pytest.approx(3.0)


def test_local_time_bounds():
    T = 2.0
    I, _ = sample_local_time(T, 50_000, seed=1, d=2)
    assert np.all(I <= T * T + 1e-12)
    assert np.all(I > 0)


def test_free_walk_gives_unit_c():
    est = estimate_c(0.0, 1.0, 1000, seed=0)
    assert est.mean == 1.0


def test_c_within_one_jump_bounds():
    lo, hi = one_jump_bounds(0.5, 0.7)
    est = estimate_c(0.5, 0.7, 100_000, seed=2)
    assert lo - 4 * est.stderr <= est.mean <= hi + 4 * est.stderr


def test_c_decreases_in_g():
    ests = estimate_c([0.0, 0.5, 1.0, 2.0], 1.5, 20_000, seed=3)
    means = [e.mean for e in ests]
    assert means == sorted(means, reverse=True)


def test_chi_free_walk():
    est = estimate_chi(0.0, 2.0, 16.0, 0.01, 2000, seed=0)
    assert est.chi == pytest.approx(0.5, rel=1e-3)


def test_graph_walk_single_site():
    # one site: I(T) = T^2 and χ = ∫ exp(-gT² - νT) dT
    from scipy.integrate import quad

    gen = GraphGenerator.from_laplacian(path_graph_laplacian(1))
    est = estimate_chi(1.0, 1.0, 16.0, 0.01, 50, seed=0, generator=gen)
    ref = quad(lambda t: math.exp(-t * t - t), 0, np.inf)[0]
    assert est.chi == pytest.approx(ref, rel=1e-4)


def test_longrange_generator_runs():
    gen = LatticeGenerator.fractional(LongRangeStepSampler(1, 1.5))
    I, _ = sample_local_time(1.0, 1000, seed=0, generator=gen)
    assert np.all(I <= 1.0 + 1e-12)


def test_reproducible():
    a = estimate_chi(0.3, 1.0, 8.0, 0.01, 3000, seed=9)
    b = estimate_chi(0.3, 1.0, 8.0, 0.01, 3000, seed=9)
    assert a == b


def test_errors():
    with pytest.raises(UnsupportedRegime):
        estimate_chi(0.1, 0.0, 8.0, 0.01, 10)
    with pytest.raises(ConfigurationError):
        estimate_c(-1.0, 1.0, 10)
    with pytest.raises(ConfigurationError):
        estimate_chi(0.1, 1.0, 8.0, 0.03, 10)
