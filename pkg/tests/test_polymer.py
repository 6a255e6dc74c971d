import numpy as np
import pytest

from walkrg.errors import ScaleMismatchError, ScaleOverflowError, UnsupportedValueError
from walkrg.gaussian import banded_covariance
from walkrg.lattice import Polymer, TorusLattice, all_polymers, closure
from walkrg.polymer import (
    BlockFactorized, ExpectationContext, PolymerFunctional, Reblocker, binom_product, check_component_factorization,
    circle, circle_product, closure_counts, factorizes_over_components, random_instance,
    reblock_identity_residual,
)
from walkrg.polynomial import Polynomial, random_polynomial

T4 = TorusLattice(1, 2, 2)
T8 = TorusLattice(1, 2, 3)


def _random_functional(rng, j=0, torus=T4):
    table = {X: random_polynomial(rng, [int(s) for s in X.sites(torus)] or [0], 2, 2, integer=True)
             for X in all_polymers(torus, j)}
    return PolymerFunctional.from_table(j, table)


def test_circle_product_laws(rng):
    F, G, H = (_random_functional(rng) for _ in range(3))
    one = PolymerFunctional.unit(0)
    FG, GF = circle(F, G), circle(G, F)
    left, right = circle(FG, H), circle(F, circle(G, H))
    for X in all_polymers(T4, 0):
        assert FG(X) == GF(X)
        assert left(X) == right(X)
        assert circle_product(F, one, X) == F(X)
    empty = Polymer(0)
    assert FG(empty) == F(empty) * G(empty)


def test_binomial_identity(rng):
    blocks = T4.blocks(0)
    F = BlockFactorized(0, {b: random_polynomial(rng, [int(s) for s in T4.block_sites(b)], 2, 3, integer=True) for b in blocks})
    G = BlockFactorized(0, {b: random_polynomial(rng, [int(s) for s in T4.block_sites(b)], 2, 3, integer=True) for b in blocks})
    for X in all_polymers(T4, 0):
        assert circle_product(F, G, X) == binom_product(F, G, X)


def test_scale_and_value_errors():
    F = PolymerFunctional.unit(0)
    with pytest.raises(ScaleMismatchError):
        F(Polymer(1))
    with pytest.raises(UnsupportedValueError):
        PolymerFunctional(0, lambda X: "x")(Polymer(0))
    with pytest.raises(ScaleMismatchError):
        circle(F, PolymerFunctional.unit(1))


def test_closure_partition():
    counts = closure_counts(T4, 0)
    assert sum(counts.values()) == 2 ** len(T4.blocks(0))
    for X in all_polymers(T4, 0):
        U = closure(T4, X)
        assert X.blocks <= U.as_scale(T4, 0).blocks


def test_vanishing_delta_gives_unit():
    blocks = T4.blocks(0)
    I = BlockFactorized(0, {b: Polynomial.const(2) for b in blocks})
    E = ExpectationContext(np.eye(4))
    Kt = Reblocker(T4, I, I, PolymerFunctional.unit(0), E)
    for U in all_polymers(T4, 1):
        expected = Polynomial.const(1) if not U else Polynomial()
        assert Kt(U).max_abs_diff(expected) == 0


def test_reblock_identity(rng):
    for _ in range(5):
        I, Ip, K = random_instance(T4, 0, rng, degree=2, n_terms=3)
        A = rng.normal(size=(4, 4))
        assert reblock_identity_residual(T4, I, Ip, K, ExpectationContext(A @ A.T / 4)) <= 1e-9


def test_scale_overflow():
    with pytest.raises(ScaleOverflowError):
        Reblocker(T4, BlockFactorized(2, {}), BlockFactorized(2, {}), PolymerFunctional.unit(2),
                  ExpectationContext(np.eye(4)))


def test_random_instance_factorizes(rng):
    _, _, K = random_instance(T8, 0, rng)
    assert factorizes_over_components(T8, K)[0]


def test_component_factorization_range_rule(rng):
    # range ½ L^{j+1} = 1 at j = 0, L = 2: only the diagonal survives
    rep = check_component_factorization(T8, 0, 0.5 * np.eye(8), rng, control=banded_covariance(T8, 3))
    assert rep.ok
    assert rep.disconnected_pairs > 0 and rep.product_rule_gap <= 1e-12
    assert rep.negative_control_gap > 1e-6


def test_component_factorization_banded(rng):
    # correlated within two sites, still zero between disconnected scale-1 polymers
    C = banded_covariance(T8, 3)
    assert C[0, 1] != 0 and C[0, 2] != 0
    rep = check_component_factorization(T8, 0, C, rng)
    assert rep.ok and rep.reblock_gap <= 1e-9
