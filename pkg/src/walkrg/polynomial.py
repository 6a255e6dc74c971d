"""Sparse multivariate polynomials and exact Gaussian (Wick) expectations."""
from __future__ import annotations

import math
from collections import defaultdict
from typing import Callable, Hashable, Iterable, Mapping

import numpy as np

from .errors import ComplexityError

DEFAULT_DEGREE_CAP = 8

Monomial = tuple  # sorted tuple of (variable, power) pairs


def _mono_mul(a: Monomial, b: Monomial) -> Monomial:
    if not a:
        return b
    if not b:
        return a
    out = dict(a)
    for v, p in b:
        out[v] = out.get(v, 0) + p
    return tuple(sorted(out.items()))


def _mono_degree(m: Monomial) -> int:
    return sum(p for _, p in m)


class Polynomial:
    """Polynomial in hashable, orderable variable labels (e.g. ``("phi", 3)``)."""

    __slots__ = ("terms",)

    def __init__(self, terms: Mapping[Monomial, object] | None = None):
        self.terms: dict[Monomial, object] = {}
        if terms:
            for m, c in terms.items():
                if c != 0:
                    key = tuple(sorted((v, p) for v, p in m if p))
                    self.terms[key] = self.terms.get(key, 0) + c
            self.terms = {m: c for m, c in self.terms.items() if c != 0}

    # construction
    @classmethod
    def const(cls, c) -> "Polynomial":
        return cls({(): c})

    @classmethod
    def var(cls, label: Hashable, power: int = 1) -> "Polynomial":
        return cls({((label, power),): 1})

    # algebra
    def _coerce(self, other) -> "Polynomial":
        return other if isinstance(other, Polynomial) else Polynomial.const(other)

    def __add__(self, other):
        other = self._coerce(other)
        out = dict(self.terms)
        for m, c in other.terms.items():
            out[m] = out.get(m, 0) + c
        return _raw({m: c for m, c in out.items() if c != 0})

    __radd__ = __add__

    def __neg__(self):
        return _raw({m: -c for m, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, Polynomial):
            if other == 0:
                return Polynomial()
            return _raw({m: c * other for m, c in self.terms.items()})
        out: dict = defaultdict(int)
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                out[_mono_mul(m1, m2)] += c1 * c2
        return _raw({m: c for m, c in out.items() if c != 0})

    __rmul__ = __mul__

    def __pow__(self, k: int):
        out = Polynomial.const(1)
        for _ in range(k):
            out = out * self
        return out

    def __eq__(self, other):
        other = self._coerce(other)
        return self.terms == other.terms

    def __repr__(self):
        if not self.terms:
            return "Polynomial(0)"
        parts = []
        for m, c in sorted(self.terms.items(), key=lambda kv: (_mono_degree(kv[0]), kv[0])):
            mono = "*".join(f"{v}^{p}" if p > 1 else f"{v}" for v, p in m)
            parts.append(f"{c}" + (f"*{mono}" if mono else ""))
        return "Polynomial(" + " + ".join(parts) + ")"

    # inspection
    @property
    def degree(self) -> int:
        return max((_mono_degree(m) for m in self.terms), default=0)

    def variables(self) -> set:
        return {v for m in self.terms for v, _ in m}

    def constant(self):
        return self.terms.get((), 0)

    def is_constant(self) -> bool:
        return all(not m for m in self.terms)

    def max_abs_diff(self, other: "Polynomial") -> float:
        other = self._coerce(other)
        keys = set(self.terms) | set(other.terms)
        return max((abs(self.terms.get(k, 0) - other.terms.get(k, 0)) for k in keys), default=0.0)

    def map_coefficients(self, f: Callable) -> "Polynomial":
        return Polynomial({m: f(c) for m, c in self.terms.items()})

    def evaluate(self, values: Mapping) -> object:
        total = 0
        for m, c in self.terms.items():
            term = c
            for v, p in m:
                term = term * values[v] ** p
            total = total + term
        return total

    def substitute(self, mapping: Mapping[Hashable, "Polynomial"]) -> "Polynomial":
        """Replace each mapped variable by a polynomial."""
        out = Polynomial()
        cache: dict = {}
        for m, c in self.terms.items():
            term = Polynomial.const(c)
            for v, p in m:
                if v in mapping:
                    key = (v, p)
                    if key not in cache:
                        cache[key] = mapping[v] ** p
                    term = term * cache[key]
                else:
                    term = term * Polynomial.var(v, p)
            out = out + term
        return out


def _raw(terms: dict) -> Polynomial:
    p = Polynomial.__new__(Polynomial)
    p.terms = terms
    return p


# --------------------------------------------------------------------------- Gaussian moments


class GaussianMoments:
    """Moments E[prod_i z_{a_i}^{k_i}] of a centred Gaussian vector with covariance ``C``.

    Uses the integration-by-parts recursion
    E[z_a R] = sum_b C_ab E[d R / d z_b], memoised on the exponent pattern.
    """

    def __init__(self, C: np.ndarray):
        self.C = np.asarray(C, dtype=float)
        self._memo: dict = {(): 1.0}

    def moment(self, exps: Iterable[tuple[int, int]]) -> float:
        key = tuple(sorted((int(a), int(k)) for a, k in exps if k))
        return self._moment(key)

    def _moment(self, key) -> float:
        if key in self._memo:
            return self._memo[key]
        if sum(k for _, k in key) % 2:
            self._memo[key] = 0.0
            return 0.0
        a, ka = key[0]
        rest = dict(key)
        rest[a] = ka - 1
        total = 0.0
        for b, kb in list(rest.items()):
            if kb == 0:
                continue
            c = self.C[a, b]
            if c == 0.0:
                continue
            reduced = dict(rest)
            reduced[b] = kb - 1
            sub = tuple(sorted((v, k) for v, k in reduced.items() if k))
            total += c * kb * self._moment(sub)
        self._memo[key] = total
        return total


def wick_moment(C: np.ndarray, indices: list[int]) -> float:
    """Sum over all pair partitions of ``indices``; independent oracle for small degree."""
    n = len(indices)
    if n % 2:
        return 0.0
    if n == 0:
        return 1.0
    first, rest = indices[0], indices[1:]
    total = 0.0
    for i in range(len(rest)):
        total += C[first, rest[i]] * wick_moment(C, rest[:i] + rest[i + 1:])
    return total


def expect_poly(C, p: Polynomial, kind: str = "zeta", degree_cap: int = DEFAULT_DEGREE_CAP,
                moments: GaussianMoments | None = None) -> Polynomial:
    """Integrate out the variables ``(kind, x)`` against a centred Gaussian with covariance ``C``.

    Variables of other kinds are treated as constants; the result is a
    polynomial in them. ``C`` may be a matrix or any object with ``.matrix``.
    """
    mat = getattr(C, "matrix", C)
    gm = moments if moments is not None else GaussianMoments(mat)
    out: dict = defaultdict(int)
    for m, c in p.terms.items():
        inner = [(v[1], k) for v, k in m if isinstance(v, tuple) and v[0] == kind]
        deg = sum(k for _, k in inner)
        if deg % 2:
            continue
        if deg > degree_cap:
            raise ComplexityError(f"monomial of degree {deg} exceeds the cap {degree_cap}")
        outer = tuple((v, k) for v, k in m if not (isinstance(v, tuple) and v[0] == kind))
        val = gm.moment(inner)
        if val != 0.0:
            out[outer] += c * val
    return _raw({m: c for m, c in out.items() if c != 0})


def phi(x: int) -> Polynomial:
    return Polynomial.var(("phi", x))


def zeta(x: int, kind: str = "zeta") -> Polynomial:
    return Polynomial.var((kind, x))


def shift(p: Polynomial, kind: str = "zeta", sites: Iterable[int] | None = None) -> Polynomial:
    """theta: substitute phi_x -> phi_x + (kind)_x for every phi variable in ``p``."""
    if sites is None:
        sites = [v[1] for v in p.variables() if v[0] == "phi"]
    return p.substitute({("phi", x): phi(x) + zeta(x, kind) for x in sites})


def random_polynomial(rng: np.random.Generator, sites: list[int], degree: int, n_terms: int,
                      kind: str = "phi", integer: bool = False, scale: float = 1.0) -> Polynomial:
    """Random polynomial with ``n_terms`` monomials of total degree <= ``degree``."""
    terms = {}
    for _ in range(n_terms):
        deg = int(rng.integers(0, degree + 1))
        chosen = rng.choice(sites, size=deg, replace=True) if deg else []
        mono: dict = {}
        for x in chosen:
            mono[(kind, int(x))] = mono.get((kind, int(x)), 0) + 1
        coef = int(rng.integers(-5, 6)) if integer else float(rng.normal(scale=scale))
        key = tuple(sorted(mono.items()))
        terms[key] = terms.get(key, 0) + coef
    return Polynomial(terms)


def product(polys: Iterable[Polynomial]) -> Polynomial:
    out = Polynomial.const(1)
    for q in polys:
        out = out * q
    return out


def pair_partitions(items: list) -> Iterable[list[tuple]]:
    if not items:
        yield []
        return
    first = items[0]
    for i in range(1, len(items)):
        rest = items[1:i] + items[i + 1:]
        for tail in pair_partitions(rest):
            yield [(first, items[i])] + tail


def double_factorial(n: int) -> int:
    return math.prod(range(n, 0, -2)) if n > 0 else 1


__all__ = [
    "Polynomial", "GaussianMoments", "expect_poly", "wick_moment", "phi", "zeta", "shift",
    "random_polynomial", "product", "pair_partitions", "double_factorial", "DEFAULT_DEGREE_CAP",
]
