"""Polymer functionals: circle product, block factorization, and the reblocking map."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import ScaleMismatchError, UnsupportedValueError
from .lattice import (
    Block, Polymer, TorusLattice, all_polymers, closure, connected_components, polymer_distance,
)
from .polynomial import GaussianMoments, Polynomial, expect_poly, random_polynomial, shift

KIND = "zeta"


def _as_poly(v) -> Polynomial:
    if isinstance(v, Polynomial):
        return v
    if isinstance(v, (int, float, np.integer, np.floating)):
        return Polynomial.const(v)
    raise UnsupportedValueError(f"polymer functionals take polynomial values, got {type(v).__name__}")


@dataclass
class PolymerFunctional:
    """Map from scale-j polymers to polynomials, evaluated lazily and cached."""

    j: int
    fn: Callable[[Polymer], Polynomial]
    _cache: dict = field(default_factory=dict, repr=False)

    def __call__(self, X: Polymer) -> Polynomial:
        if X.j != self.j:
            raise ScaleMismatchError(f"scale-{self.j} functional applied to a scale-{X.j} polymer")
        if X not in self._cache:
            self._cache[X] = _as_poly(self.fn(X))
        return self._cache[X]

    @classmethod
    def from_table(cls, j: int, table: Mapping[Polymer, Polynomial], default=0) -> "PolymerFunctional":
        return cls(j, lambda X: table.get(X, default))

    @classmethod
    def unit(cls, j: int) -> "PolymerFunctional":
        """1 on the empty polymer, 0 elsewhere."""
        return cls(j, lambda X: 1 if not X else 0)


@dataclass
class BlockFactorized(PolymerFunctional):
    """F(X) = product of F(B) over the blocks of X."""

    per_block: Mapping[Block, Polynomial] = field(default_factory=dict)

    def __init__(self, j: int, per_block: Mapping[Block, Polynomial]):
        self.per_block = {b: _as_poly(v) for b, v in per_block.items()}
        super().__init__(j, self._product)

    def _product(self, X: Polymer) -> Polynomial:
        out = Polynomial.const(1)
        for b in X:
            out = out * self.per_block[b]
        return out

    def block(self, b: Block) -> Polynomial:
        return self.per_block[b]


def circle_product(F: PolymerFunctional, G: PolymerFunctional, X: Polymer) -> Polynomial:
    """(F o G)(X) = sum over Y in P(X) of F(Y) G(X minus Y)."""
    if not F.j == G.j == X.j:
        raise ScaleMismatchError(f"circle product across scales {F.j}, {G.j}, {X.j}")
    total = Polynomial()
    for Y in X.subpolymers():
        total = total + F(Y) * G(X - Y)
    return total


def circle(F: PolymerFunctional, G: PolymerFunctional) -> PolymerFunctional:
    if F.j != G.j:
        raise ScaleMismatchError(f"circle product across scales {F.j} and {G.j}")
    return PolymerFunctional(F.j, lambda X: circle_product(F, G, X))


def theta(F: PolymerFunctional, kind: str = KIND) -> PolymerFunctional:
    """Shift the field argument: phi_x -> phi_x + (kind)_x."""
    return PolymerFunctional(F.j, lambda X: shift(F(X), kind))


def binom_product(F: BlockFactorized, G: BlockFactorized, X: Polymer) -> Polynomial:
    out = Polynomial.const(1)
    for b in X:
        out = out * (F.block(b) + G.block(b))
    return out


# --------------------------------------------------------------------------- reblocking


@dataclass
class ExpectationContext:
    """E_+ over the fluctuation field (kind, x) with a fixed covariance matrix."""

    covariance: np.ndarray
    kind: str = KIND
    degree_cap: int = 8
    moments: GaussianMoments = field(init=False, repr=False)

    def __post_init__(self):
        self.covariance = np.asarray(getattr(self.covariance, "matrix", self.covariance), dtype=float)
        self.moments = GaussianMoments(self.covariance)

    def __call__(self, p: Polynomial) -> Polynomial:
        return expect_poly(self.covariance, p, kind=self.kind, degree_cap=self.degree_cap,
                           moments=self.moments)


def delta_I(I: BlockFactorized, I_plus: BlockFactorized, kind: str = KIND) -> BlockFactorized:
    """δI(B) = θI(B) - I_+(B)."""
    if I.j != I_plus.j:
        raise ScaleMismatchError("I and I_+ must factorize over the same blocks")
    return BlockFactorized(I.j, {b: shift(I.block(b), kind) - I_plus.block(b) for b in I.per_block})


class Reblocker:
    """Evaluates K~_+(U) for all scale-(j+1) polymers U, sharing caches between calls."""

    def __init__(self, torus: TorusLattice, I: BlockFactorized, I_plus: BlockFactorized,
                 K: PolymerFunctional, expectation: ExpectationContext):
        if not I.j == I_plus.j == K.j:
            raise ScaleMismatchError("I, I_+ and K must share a scale")
        closure(torus, Polymer(K.j))  # raises on scale overflow
        self.torus = torus
        self.j = K.j
        self.I_plus = I_plus
        self.E = expectation
        self.J = circle(delta_I(I, I_plus, expectation.kind), theta(K, expectation.kind))
        self._EJ: dict = {}

    def expected_J(self, X: Polymer) -> Polynomial:
        if X not in self._EJ:
            self._EJ[X] = self.E(self.J(X))
        return self._EJ[X]

    def __call__(self, U: Polymer) -> Polynomial:
        if U.j != self.j + 1:
            raise ScaleMismatchError(f"K~_+ is defined on scale-{self.j + 1} polymers")
        fine = U.as_scale(self.torus, self.j)
        total = Polynomial()
        for X in fine.subpolymers():
            if closure(self.torus, X) != U:
                continue
            total = total + self.I_plus(fine - X) * self.expected_J(X)
        return total

    def functional(self) -> PolymerFunctional:
        return PolymerFunctional(self.j + 1, self)


def reblock(I: BlockFactorized, I_plus: BlockFactorized, K: PolymerFunctional, U: Polymer,
            expectation: ExpectationContext, torus: TorusLattice) -> Polynomial:
    return Reblocker(torus, I, I_plus, K, expectation)(U)


def reblock_identity_residual(torus: TorusLattice, I: BlockFactorized, I_plus: BlockFactorized,
                              K: PolymerFunctional, expectation: ExpectationContext) -> float:
    """Coefficient gap between E_+ θ(I o K)(Λ) and (I_+ o K~_+)(Λ) at scale j+1."""
    j = K.j
    lam = Polymer(j, frozenset(torus.blocks(j)))
    lhs = expectation(shift(circle_product(I, K, lam), expectation.kind))
    Kt = Reblocker(torus, I, I_plus, K, expectation)
    rhs = Polynomial()
    for U in all_polymers(torus, j + 1):
        rhs = rhs + I_plus(lam - U.as_scale(torus, j)) * Kt(U)
    return float(lhs.max_abs_diff(rhs))


def closure_counts(torus: TorusLattice, j: int) -> Counter:
    """Number of scale-j polymers with each closure."""
    return Counter(closure(torus, X) for X in all_polymers(torus, j))


# --------------------------------------------------------------------------- factorization


def factorizes_over_components(torus: TorusLattice, F: PolymerFunctional, tol: float = 1e-9,
                               polymers=None) -> tuple[bool, float]:
    """Check F(X) = prod F(Y) over connected components, on every given polymer."""
    worst = 0.0
    for X in polymers if polymers is not None else all_polymers(torus, F.j):
        comps = connected_components(torus, X)
        if len(comps) < 2:
            continue
        prod = Polynomial.const(1)
        for Y in comps:
            prod = prod * F(Y)
        worst = max(worst, F(X).max_abs_diff(prod))
    return worst <= tol, worst


@dataclass
class FactorizationReport:
    product_rule_gap: float
    negative_control_gap: float
    reblock_gap: float
    disconnected_pairs: int
    ok: bool


def component_factorized(torus: TorusLattice, j: int, per_component: Callable[[Polymer], Polynomial]):
    """K(X) = prod of per_component(Y) over the connected components Y of X; K(empty) = 1."""
    def fn(X):
        out = Polynomial.const(1)
        for Y in connected_components(torus, X):
            out = out * _as_poly(per_component(Y))
        return out
    return PolymerFunctional(j, fn)


def random_instance(torus: TorusLattice, j: int, rng: np.random.Generator, degree: int = 1,
                    n_terms: int = 2, integer: bool = False):
    """Random block-factorized I, I_+ and component-factorized K at scale j."""
    def block_poly(b):
        sites = [int(s) for s in torus.block_sites(b)]
        return Polynomial.const(1) + random_polynomial(rng, sites, degree, n_terms, integer=integer, scale=0.5)

    blocks = torus.blocks(j)
    I = BlockFactorized(j, {b: block_poly(b) for b in blocks})
    I_plus = BlockFactorized(j, {b: block_poly(b) for b in blocks})
    table = {}

    def comp(Y):
        if Y not in table:
            sites = [int(s) for s in Y.sites(torus)]
            table[Y] = random_polynomial(rng, sites, degree, n_terms, integer=integer, scale=0.5)
        return table[Y]

    for X in all_polymers(torus, j):
        for Y in connected_components(torus, X):
            comp(Y)
    return I, I_plus, component_factorized(torus, j, comp)


def _covariance_gap(E: ExpectationContext, f: Polynomial, g: Polynomial) -> float:
    both = E(shift(f * g)) - E(shift(f)) * E(shift(g))
    return max((abs(c) for c in both.terms.values()), default=0.0)


def check_component_factorization(torus: TorusLattice, j: int, covariance: np.ndarray,
                                  rng: np.random.Generator, control: np.ndarray | None = None,
                                  tol: float = 1e-9) -> FactorizationReport:
    """Exact checks of the product rule and of factorization of K~_+ at scale j+1.

    ``covariance`` plays the role of C_{j+1} and should vanish between
    disconnected scale-(j+1) polymers. ``control`` is a covariance that
    correlates neighbouring polymers; the product rule must fail for it on
    connected pairs.
    """
    E = ExpectationContext(covariance)
    Ec = ExpectationContext(control) if control is not None else None
    # product rule for disconnected scale-(j+1) polymers, and a connected negative control
    polys = [U for U in all_polymers(torus, j + 1) if U]
    gap, neg, pairs = 0.0, 0.0, 0
    for X in polys:
        for Y in polys:
            if X.blocks & Y.blocks:
                continue
            fx = random_polynomial(rng, [int(s) for s in X.sites(torus)], 2, 3)
            gy = random_polynomial(rng, [int(s) for s in Y.sites(torus)], 2, 3)
            if polymer_distance(torus, X, Y) >= torus.L ** (j + 1):
                pairs += 1
                gap = max(gap, _covariance_gap(E, fx, gy))
            elif Ec is not None:
                neg = max(neg, _covariance_gap(Ec, fx, gy))
    I, I_plus, K = random_instance(torus, j, rng)
    Kt = Reblocker(torus, I, I_plus, K, E).functional()
    _, rgap = factorizes_over_components(torus, Kt, tol)
    ok = gap <= tol and rgap <= tol and (Ec is None or neg > tol)
    return FactorizationReport(gap, neg, rgap, pairs, ok)
