import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from walkrg.errors import ComplexityError
from walkrg.polynomial import (
    GaussianMoments, Polynomial, expect_poly, phi, random_polynomial, shift, wick_moment, zeta,
)


def _spd(rng, n):
    A = rng.normal(size=(n, n))
    return A @ A.T / n + 0.1 * np.eye(n)


def test_arithmetic():
    p = (phi(0) + 1) ** 2
    assert p == phi(0) * phi(0) + 2 * phi(0) + 1
    assert (p - p) == Polynomial()
    assert p.evaluate({("phi", 0): 2.0}) == 9.0


def test_wick_examples(rng):
    C = _spd(rng, 2)
    z0, z1 = zeta(0), zeta(1)
    assert expect_poly(C, z0 * z0).max_abs_diff(C[0, 0]) < 1e-14
    assert expect_poly(C, z0 ** 4).max_abs_diff(3 * C[0, 0] ** 2) < 1e-13
    ref = C[0, 0] * C[1, 1] + 2 * C[0, 1] ** 2
    assert expect_poly(C, z0 ** 2 * z1 ** 2).max_abs_diff(ref) < 1e-13
    assert expect_poly(C, z0 ** 3 * z1) .max_abs_diff(3 * C[0, 0] * C[0, 1]) < 1e-13


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(0, 2), min_size=0, max_size=6), st.integers(0, 1000))
def test_recursion_matches_pairings(idx, seed):
    C = _spd(np.random.default_rng(seed), 3)
    exps = {}
    for i in idx:
        exps[i] = exps.get(i, 0) + 1
    assert GaussianMoments(C).moment(exps.items()) == pytest.approx(wick_moment(C, idx), abs=1e-12)


def test_external_field_kept(rng):
    C = _spd(rng, 2)
    p = shift(phi(0) ** 2)
    out = expect_poly(C, p)
    assert out.max_abs_diff(phi(0) ** 2 + C[0, 0]) < 1e-14


def test_degree_cap():
    with pytest.raises(ComplexityError):
        expect_poly(np.eye(1), zeta(0) ** 10, degree_cap=8)


def test_against_monte_carlo(rng):
    C = _spd(rng, 3)
    L = np.linalg.cholesky(C)
    z = rng.standard_normal((100_000, 3)) @ L.T
    for _ in range(3):
        p = random_polynomial(rng, [0, 1, 2], 4, 4, kind="zeta")
        exact = expect_poly(C, p).evaluate({})
        vals = p.evaluate({("zeta", i): z[:, i] for i in range(3)}) + np.zeros(len(z))
        se = vals.std(ddof=1) / np.sqrt(len(vals))
        assert abs(vals.mean() - exact) <= 5 * se + 1e-12
