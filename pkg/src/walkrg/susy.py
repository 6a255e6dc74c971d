"""Differential-form (Grassmann) algebra on tiny graphs and the supersymmetric walk integral.

Generators are numbered 2x for ψ_x and 2x+1 for ψ̄_x. Coefficients are
arrays over a batch of quadrature nodes in (u, v), or plain scalars.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, QuadratureError, UnsupportedValueError

MAX_SITES = 3


def psi_index(x: int) -> int:
    return 2 * x


def psibar_index(x: int) -> int:
    return 2 * x + 1


def _merge(a: tuple, b: tuple):
    """Sorted concatenation of two monomials and its sign, or (None, 0) when they overlap."""
    if not a:
        return b, 1
    if not b:
        return a, 1
    sa = set(a)
    if sa.intersection(b):
        return None, 0
    inversions = 0
    for j in b:
        inversions += sum(1 for i in a if i > j)
    return tuple(sorted(a + b)), (-1 if inversions % 2 else 1)


class GrassmannAlgebraElement:
    """Sum of coefficient * monomial in the 2M anticommuting generators."""

    __slots__ = ("M", "terms")

    def __init__(self, M: int, terms: dict | None = None):
        if not 1 <= M <= MAX_SITES:
            raise ConfigurationError(f"M must lie in 1..{MAX_SITES}, got {M}")
        self.M = M
        self.terms: dict = {}
        for mono, c in (terms or {}).items():
            mono = tuple(mono)
            if any(g < 0 or g >= 2 * M for g in mono):
                raise ConfigurationError(f"generator out of range in {mono}")
            ordered, sign = _canonical(mono)
            if ordered is not None:
                self.terms[ordered] = self.terms.get(ordered, 0) + sign * c

    # construction
    @classmethod
    def scalar(cls, M: int, c) -> "GrassmannAlgebraElement":
        return cls(M, {(): c})

    @classmethod
    def generator(cls, M: int, index: int, c=1.0) -> "GrassmannAlgebraElement":
        return cls(M, {(index,): c})

    # algebra
    def _check(self, other: "GrassmannAlgebraElement"):
        if self.M != other.M:
            raise ConfigurationError(f"forms on {self.M} and {other.M} sites")

    def __add__(self, other):
        if not isinstance(other, GrassmannAlgebraElement):
            other = GrassmannAlgebraElement.scalar(self.M, other)
        self._check(other)
        out = dict(self.terms)
        for m, c in other.terms.items():
            out[m] = out[m] + c if m in out else c
        return _raw(self.M, out)

    __radd__ = __add__

    def __neg__(self):
        return _raw(self.M, {m: -c for m, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c) -> "GrassmannAlgebraElement":
        """Multiply every coefficient by a scalar or node array (a 0-form)."""
        return _raw(self.M, {m: v * c for m, v in self.terms.items()})

    def __mul__(self, c):
        if isinstance(c, GrassmannAlgebraElement):
            return wedge(self, c)
        return self.scale(c)

    __rmul__ = scale

    def __xor__(self, other):
        return wedge(self, other)

    # inspection
    def degrees(self) -> set[int]:
        return {len(m) for m in self.terms}

    def is_even(self) -> bool:
        return all(len(m) % 2 == 0 for m in self.terms)

    def is_homogeneous(self) -> bool:
        return len(self.degrees()) <= 1

    @property
    def body(self):
        return self.terms.get((), 0.0)

    def soul(self) -> "GrassmannAlgebraElement":
        return _raw(self.M, {m: c for m, c in self.terms.items() if m})

    def top(self):
        """Coefficient of ψ_0 ψ̄_0 ψ_1 ψ̄_1 ... (the canonical top monomial)."""
        return self.terms.get(tuple(range(2 * self.M)), 0.0)

    def coefficient(self, mono) -> object:
        ordered, sign = _canonical(tuple(mono))
        if ordered is None:
            return 0.0
        return sign * self.terms.get(ordered, 0.0)

    def allclose(self, other: "GrassmannAlgebraElement", atol: float = 1e-12) -> bool:
        keys = set(self.terms) | set(other.terms)
        return all(np.allclose(self.terms.get(k, 0.0), other.terms.get(k, 0.0), atol=atol, rtol=0)
                   for k in keys)


def _canonical(mono: tuple):
    if len(set(mono)) != len(mono):
        return None, 0
    # bubble-sort parity
    inv = sum(1 for i in range(len(mono)) for j in range(i + 1, len(mono)) if mono[i] > mono[j])
    return tuple(sorted(mono)), (-1 if inv % 2 else 1)


def _raw(M: int, terms: dict) -> GrassmannAlgebraElement:
    e = GrassmannAlgebraElement.__new__(GrassmannAlgebraElement)
    e.M = M
    e.terms = terms
    return e


def wedge(a: GrassmannAlgebraElement, b: GrassmannAlgebraElement) -> GrassmannAlgebraElement:
    """Graded product with sign bookkeeping; coefficients multiply pointwise."""
    a._check(b)
    out: dict = {}
    for ma, ca in a.terms.items():
        for mb, cb in b.terms.items():
            m, sign = _merge(ma, mb)
            if m is None:
                continue
            v = ca * cb if sign > 0 else -(ca * cb)
            out[m] = out[m] + v if m in out else v
    return _raw(a.M, out)


# --------------------------------------------------------------------------- functions of forms


def exp_minus(x, k: int):
    """k-th derivative of t -> exp(-t)."""
    return (-1) ** k * np.exp(-x)


def smooth_function_of_form(f: Callable | Sequence[Callable], tau: GrassmannAlgebraElement):
    """f(τ) = Σ_k f^(k)(body τ) n^k / k! with n the nilpotent part; terminates at k = M.

    ``f`` is either a callable f(x, k) giving the k-th derivative, or a list
    [f, f', f'', ...] of at least M + 1 callables.
    """
    if not tau.is_even():
        raise UnsupportedValueError("smooth functions are defined here for even forms only")
    if callable(f):
        deriv = f
    else:
        funcs = list(f)
        if len(funcs) < min(tau.M, _nil_order(tau)) + 1:
            raise ConfigurationError("not enough derivatives supplied")
        deriv = lambda x, k: funcs[k](x)
    body = tau.body
    nil = tau.soul()
    out = GrassmannAlgebraElement.scalar(tau.M, deriv(body, 0))
    power = GrassmannAlgebraElement.scalar(tau.M, 1.0)
    for k in range(1, tau.M + 1):
        power = wedge(power, nil)
        if not power.terms:
            break
        out = out + power.scale(deriv(body, k) / math.factorial(k))
    return out


def _nil_order(tau: GrassmannAlgebraElement) -> int:
    low = min((len(m) for m in tau.terms if m), default=2 * tau.M + 2)
    return (2 * tau.M) // low


# --------------------------------------------------------------------------- τ forms


def tau(M: int, x: int, phi: np.ndarray) -> GrassmannAlgebraElement:
    """τ_x = φ_x φ̄_x + ψ_x ∧ ψ̄_x; ``phi`` has shape (M, nodes) or (M,)."""
    return _raw(M, {(): (phi[x] * np.conj(phi[x])).real, (psi_index(x), psibar_index(x)): 1.0})


def tau_delta(M: int, x: int, phi: np.ndarray, D: np.ndarray) -> GrassmannAlgebraElement:
    """τ_{Δ,x} = φ_x (D φ̄)_x + ψ_x ∧ (D ψ̄)_x for the operator D = -Δ."""
    terms = {(): phi[x] * sum(D[x, y] * np.conj(phi[y]) for y in range(M))}
    for y in range(M):
        if D[x, y] != 0:
            m, sign = _merge((psi_index(x),), (psibar_index(y),))
            terms[m] = terms.get(m, 0.0) + sign * D[x, y]
    return _raw(M, terms)


def action(M: int, phi: np.ndarray, g: float, nu: float, D: np.ndarray | None) -> GrassmannAlgebraElement:
    """Σ_z (g τ_z² + ν τ_z + τ_{Δ,z})."""
    S = GrassmannAlgebraElement.scalar(M, 0.0)
    for z in range(M):
        t = tau(M, z, phi)
        S = S + wedge(t, t).scale(g) + t.scale(nu)
        if D is not None:
            S = S + tau_delta(M, z, phi, D)
    return S


# --------------------------------------------------------------------------- integration


BEREZIN_SIGN = -1.0 / math.pi  # ψ_x ∧ ψ̄_x = -(1/π) du_x ∧ dv_x


@dataclass(frozen=True)
class PolarGrid:
    """Per-site polar coordinates, global phase removed: θ_0 = 0 and a factor 2π."""

    M: int
    R: float
    radial: int = 32
    angular: int = 32

    def batches(self, max_nodes: int = 200_000):
        """Yield (phi with shape (M, n), weights) chunked over angle configurations."""
        t, w = np.polynomial.legendre.leggauss(self.radial)
        r = 0.5 * self.R * (t + 1)
        wr = 0.5 * self.R * w * r  # includes the Jacobian r
        radii = np.stack(np.meshgrid(*([r] * self.M), indexing="ij")).reshape(self.M, -1)
        rw = np.prod(np.stack(np.meshgrid(*([wr] * self.M), indexing="ij")).reshape(self.M, -1), axis=0)
        th = 2 * np.pi * np.arange(self.angular) / self.angular
        wth = 2 * np.pi / self.angular
        if self.M == 1:
            angles = np.zeros((1, 1))
        else:
            rest = np.stack(np.meshgrid(*([th] * (self.M - 1)), indexing="ij")).reshape(self.M - 1, -1).T
            angles = np.column_stack([np.zeros(len(rest)), rest])
        ang_w = 2 * np.pi * wth ** (self.M - 1)
        per = max(1, max_nodes // radii.shape[1])
        for i in range(0, len(angles), per):
            chunk = angles[i:i + per]  # (c, M)
            phase = np.exp(1j * chunk.T)[:, :, None]  # (M, c, 1)
            phi = (radii[:, None, :] * phase).reshape(self.M, -1)
            weights = np.broadcast_to(rw * ang_w, (len(chunk), rw.size)).reshape(-1)
            yield phi, weights


def tail_bound(g: float, nu: float, R: float, M: int) -> float:
    """Crude bound on the neglected radial mass beyond R, relative to the Gaussian scale."""
    expo = g * R ** 4 + nu * R ** 2
    return (1 + R) ** (2 * M + 2) * math.exp(-expo)


def default_radius(g: float, nu: float, M: int, tol: float = 1e-12) -> float:
    if g < 0 or (g == 0 and nu <= 0):
        raise ConfigurationError("need g > 0, or g = 0 with ν > 0")
    R = 1.0
    while tail_bound(g, nu, R, M) > tol:
        R *= 1.1
    return R


def berezin_integrate(build: Callable[[np.ndarray], GrassmannAlgebraElement], grid: PolarGrid,
                      g: float = 0.0, nu: float = 1.0, max_tail: float = 1e-6) -> complex:
    """∫ F for a form built node-wise by ``build(phi)``: (-1/π)^M times the integral of the top coefficient.

    ``g`` and ``nu`` only feed the tail estimate for the radial cutoff.
    """
    tail = tail_bound(g, nu, grid.R, grid.M)
    if tail > max_tail:
        raise QuadratureError(f"radial cutoff {grid.R} leaves a tail estimate {tail:.2g}")
    total = 0.0 + 0.0j
    for phi, w in grid.batches():
        F = build(phi)
        top = F.top()
        total += np.sum(np.broadcast_to(top, w.shape) * w)
    return total * BEREZIN_SIGN ** grid.M


def calibrate(M: int, grid: PolarGrid | None = None) -> float:
    """∫ exp(-Σ τ_x), which must equal 1 for the normalization to be right."""
    grid = grid or PolarGrid(M, default_radius(0.0, 1.0, M))
    val = berezin_integrate(lambda phi: smooth_function_of_form(exp_minus, action(M, phi, 0.0, 1.0, None)),
                            grid, 0.0, 1.0)
    return float(val.real)


_CALIBRATED: set = set()


def _ensure_calibrated(M: int, tol: float = 1e-8):
    if M in _CALIBRATED:
        return
    val = calibrate(M)
    if abs(val - 1.0) > tol:
        raise QuadratureError(f"Gaussian calibration gave {val!r} instead of 1 at M = {M}")
    _CALIBRATED.add(M)


def integrand(M: int, phi: np.ndarray, g: float, nu: float, D: np.ndarray | None):
    return smooth_function_of_form(exp_minus, action(M, phi, g, nu, D))


def normalization(M: int, g: float, nu: float, D: np.ndarray | None = None,
                  radial: int = 32, angular: int = 32) -> float:
    """∫ exp(-Σ(gτ² + ντ + τ_Δ)); supersymmetry makes this 1."""
    _ensure_calibrated(M)
    grid = PolarGrid(M, default_radius(g, nu, M), radial, angular)
    return float(berezin_integrate(lambda phi: integrand(M, phi, g, nu, D), grid, g, nu).real)


@dataclass
class IntrepResult:
    contributions: np.ndarray  # per x
    chi: float
    quadrature_change: float  # change when the grid is refined


def evaluate_intrep(D: np.ndarray | None, g: float, nu: float, M: int | None = None,
                    radial: int = 24, angular: int = 24, refine: bool = True) -> IntrepResult:
    """χ_Λ(g, ν) = Σ_x ∫ exp(-Σ_z(gτ_z² + ντ_z + τ_{Δ,z})) φ̄_0 φ_x.

    ``D`` is -Δ of the graph (None for a single site without edges).
    """
    if D is not None:
        D = np.asarray(D, dtype=float)
        M = D.shape[0]
    if M is None:
        raise ConfigurationError("give the operator D or the site count M")
    _ensure_calibrated(M)

    def run(nr, na):
        grid = PolarGrid(M, default_radius(g, nu, M), nr, na)
        vals = np.zeros(M)
        for x in range(M):
            build = lambda phi, x=x: integrand(M, phi, g, nu, D).scale(np.conj(phi[0]) * phi[x])
            vals[x] = berezin_integrate(build, grid, g, nu).real
        return vals

    vals = run(radial, angular)
    change = 0.0
    if refine:
        finer = run(radial + radial // 2, angular + angular // 2)
        change = float(abs(finer.sum() - vals.sum()))
        vals = finer
    return IntrepResult(vals, float(vals.sum()), change)


def single_site_chi(g: float, nu: float) -> float:
    """∫_0^∞ exp(-gT² - νT) dT, the walk-side value on one site."""
    from scipy.integrate import quad

    return quad(lambda T: math.exp(-g * T * T - nu * T), 0, math.inf, epsabs=1e-14, epsrel=1e-12)[0]
