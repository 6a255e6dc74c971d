"""Brute-force φ⁴ on tiny tori: direct susceptibility and the Z_N route, by quadrature."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    ComplexityError, ConfigurationError, DifferentiationError, QuadratureError, UnsupportedRegime,
)
from .lattice import TorusLattice, kernel_to_matrix, torus_symbol

MAX_NODES = 60_000_000
MAX_SITES = 4


def site_operator(torus, alpha: float = 2.0) -> np.ndarray:
    """Dense (-Δ)^{α/2} on a torus, given as a TorusLattice or a (d, P) pair.

    Built from the spectrum, so periods 1 and 2 are allowed: at P = 2 each
    neighbour is reached through two edges and -Δ = [[2, -2], [-2, 2]].
    """
    d, P = (torus.d, torus.period) if isinstance(torus, TorusLattice) else torus
    lam = torus_symbol(d, P)
    kernel = np.fft.ifftn(np.power(np.clip(lam, 0.0, None), alpha / 2)).real
    A = kernel_to_matrix(kernel)
    if A.shape[0] > MAX_SITES:
        raise ComplexityError(f"{A.shape[0]} sites; the quadrature oracle handles at most {MAX_SITES}")
    return A


@dataclass(frozen=True)
class QuadratureSpec:
    """Uniform per-site grid on [-R, R] (trapezoid rule), refined by doubling."""

    nodes: int | None = None  # None: 64 for up to two sites, 16 beyond
    cutoff: float | None = None
    rtol: float = 1e-9
    max_nodes: int = 1024

    def grid(self, R: float, nodes: int | None = None):
        k = nodes or self.nodes or 64
        x = np.linspace(-R, R, 2 * (k // 2) + 1)  # odd count keeps 0 and symmetry
        return x, x[1] - x[0]


def cutoff_radius(g: float, nu: float, target: float = 60.0) -> float:
    """R with gR⁴/4 + νR²/2 >= target, a bound on the single-site weight tail."""
    if g < 0 or (g == 0 and nu <= 0):
        raise UnsupportedRegime("need g > 0, or g = 0 with ν > 0")
    R = 1.0
    while 0.25 * g * R ** 4 + 0.5 * nu * R ** 2 < target:
        R *= 1.25
    return R


# --------------------------------------------------------------------------- n = 1 tensor grid


def _tensor_sums(A: np.ndarray, g: float, nu: float, x: np.ndarray, shift=None, Cinv=None):
    """Z and Σ_x <φ_0 φ_x> Z over the tensor grid, chunked over the first site.

    With ``Cinv`` and ``shift`` given, the weight is exp(-V(ψ) - ½(ψ-h1)ᵀC⁻¹(ψ-h1))
    instead of exp(-V(φ) - ½φᵀAφ).
    """
    M = A.shape[0]
    if len(x) ** M > MAX_NODES:
        raise ComplexityError(f"{len(x)}^{M} quadrature nodes exceed {MAX_NODES}")
    pot = 0.25 * g * x ** 4 + 0.5 * nu * x ** 2
    rest = np.stack(np.meshgrid(*([x] * (M - 1)), indexing="ij"), axis=-1).reshape(-1, M - 1) \
        if M > 1 else np.zeros((1, 0))
    rest_pot = np.zeros(len(rest))
    for k in range(M - 1):
        rest_pot = rest_pot + 0.25 * g * rest[:, k] ** 4 + 0.5 * nu * rest[:, k] ** 2
    Z = 0.0
    S = 0.0
    for i, x0 in enumerate(x):
        phi = np.column_stack([np.full(len(rest), x0), rest])
        if Cinv is None:
            quad = 0.5 * np.einsum("ij,jk,ik->i", phi, A, phi)
        else:
            dpsi = phi - shift
            quad = 0.5 * np.einsum("ij,jk,ik->i", dpsi, Cinv, dpsi)
        w = np.exp(-(pot[i] + rest_pot + quad))
        Z += w.sum()
        S += (w * x0 * phi.sum(axis=1)).sum()
    return Z, S


# --------------------------------------------------------------------------- n = 2 polar grid


def _radial_nodes(R: float, k: int):
    t, w = np.polynomial.legendre.leggauss(k)
    return 0.5 * R * (t + 1), 0.5 * R * w


def _polar_sums(A: np.ndarray, g: float, nu: float, R: float, k: int):
    """n = 2: radii by Gauss-Legendre, relative angles by the periodic trapezoid rule.

    Returns (Z, Σ_x <φ_0·φ_x> Z) up to a common constant.
    """
    M = A.shape[0]
    r, wr = _radial_nodes(R, k)
    n_ang = 2 * k
    th = 2 * np.pi * np.arange(n_ang) / n_ang
    if k ** M * n_ang ** (M - 1) > MAX_NODES:
        raise ComplexityError("polar grid too large for this many sites")
    radii = np.stack(np.meshgrid(*([r] * M), indexing="ij"), axis=-1).reshape(-1, M)
    rw = np.prod(np.stack(np.meshgrid(*([wr * r] * M), indexing="ij"), axis=-1).reshape(-1, M), axis=1)
    pot = (0.25 * g * radii ** 4 + 0.5 * nu * radii ** 2).sum(axis=1)
    angles = np.stack(np.meshgrid(*([th] * (M - 1)), indexing="ij"), axis=-1).reshape(-1, M - 1) \
        if M > 1 else np.zeros((1, 0))
    angles = np.column_stack([np.zeros(len(angles)), angles])
    Z = 0.0
    S = 0.0
    for ang in angles:
        cosd = np.cos(ang[:, None] - ang[None, :])
        quad = 0.5 * np.einsum("ij,jk,ik->i", radii, A * cosd, radii)
        w = rw * np.exp(-(pot + quad))
        Z += w.sum()
        S += (w * radii[:, 0] * (radii * cosd[0]).sum(axis=1)).sum()
    return Z, S


# --------------------------------------------------------------------------- susceptibility


@dataclass
class ChiResult:
    chi: float
    error: float  # change under grid refinement
    nodes: int


def chi_direct(torus, g: float, nu: float, n: int = 1, alpha: float = 2.0,
               quad: QuadratureSpec = QuadratureSpec()) -> ChiResult:
    """(1/n) Σ_x <φ_0·φ_x> for the weight exp(-Σ V(φ_x) - ½ φ·(-Δ)^{α/2} φ)."""
    if n not in (1, 2):
        raise ConfigurationError("chi_direct supports n = 1 and n = 2")
    A = site_operator(torus, alpha)
    R = quad.cutoff or cutoff_radius(g, nu)

    def evaluate(k):
        if n == 1:
            x, _ = quad.grid(R, k)
            Z, S = _tensor_sums(A, g, nu, x)
        else:
            Z, S = _polar_sums(A, g, nu, R, k)
        return S / Z / n

    return _refine(evaluate, quad, len(A))


def _refine(evaluate, quad: QuadratureSpec, sites: int) -> ChiResult:
    k = quad.nodes or (64 if sites <= 2 else 16)
    prev = evaluate(k)
    while 2 * k <= quad.max_nodes:
        cur = evaluate(2 * k)
        err = abs(cur - prev)
        if err <= quad.rtol * max(1.0, abs(cur)):
            return ChiResult(float(cur), float(err), 2 * k)
        k, prev = 2 * k, cur
    raise QuadratureError(f"quadrature did not settle to {quad.rtol:g} by {k} nodes per site")


def chi_gaussian(torus, nu: float, alpha: float = 2.0) -> float:
    """Σ_x ((-Δ)^{α/2} + ν)^{-1}_{0x}, the g = 0 closed form."""
    A = site_operator(torus, alpha)
    return float(np.linalg.inv(A + nu * np.eye(len(A)))[0].sum())


def single_site_chi(g: float, nu: float, n: int = 1) -> float:
    """One-dimensional radial reference for a single site."""
    from scipy.integrate import quad as qd

    R = cutoff_radius(g, nu)
    w = lambda r: r ** (n - 1) * math.exp(-0.25 * g * r ** 4 - 0.5 * nu * r ** 2)
    num = qd(lambda r: r * r * w(r), 0, R, epsabs=0, epsrel=1e-13, limit=200)[0]
    den = qd(w, 0, R, epsabs=0, epsrel=1e-13, limit=200)[0]
    return num / den / n


def _zn_values(A, g, nu0, m2, hs, quad: QuadratureSpec, k: int) -> np.ndarray:
    """Z_N(h1)/Z_N(0) for each h, with Z_N(φ) = E_C exp(-V₀(φ+ζ)), C = (A + m²)^{-1}."""
    Cinv = A + m2 * np.eye(len(A))
    R = quad.cutoff or cutoff_radius(g, nu0 + m2)
    x, _ = quad.grid(R, k)
    out = []
    for h in hs:
        Z, _ = _tensor_sums(A, g, nu0, x, shift=h, Cinv=Cinv)
        out.append(Z)
    out = np.array(out)
    return out / out[list(hs).index(0.0)]


def second_derivative(values_at, h: float) -> tuple[float, float]:
    """Central second difference at 0 with one Richardson step; returns (value, change)."""
    def central(step):
        f = values_at([-step, 0.0, step])
        return (f[0] - 2 * f[1] + f[2]) / step ** 2

    d1, d2 = central(h), central(h / 2)
    rich = (4 * d2 - d1) / 3
    return rich, abs(rich - d2)


def chi_via_ZN(torus, g: float, nu0: float, m2: float, alpha: float = 2.0, n: int = 1,
               quad: QuadratureSpec = QuadratureSpec(nodes=128), h: float = 0.02,
               max_step_sensitivity: float = 1e-5) -> ChiResult:
    """χ_N(g, ν₀ + m²) = 1/m² + (1/m⁴)(1/|Λ|) D²Z_N(0; 1, 1)/Z_N(0)."""
    if n != 1:
        raise ConfigurationError("the Z_N route is implemented for n = 1")
    if m2 <= 0:
        raise ConfigurationError("m^2 must be positive")
    A = site_operator(torus, alpha)
    M = len(A)

    def evaluate(k):
        d2, _ = second_derivative(lambda hs: _zn_values(A, g, nu0, m2, hs, quad, k), h)
        return 1.0 / m2 + d2 / (m2 * m2 * M)

    res = _refine(evaluate, quad, M)
    k = res.nodes
    d_a, _ = second_derivative(lambda hs: _zn_values(A, g, nu0, m2, hs, quad, k), h)
    d_b, _ = second_derivative(lambda hs: _zn_values(A, g, nu0, m2, hs, quad, k), h / 2)
    change = abs(d_a - d_b) / (m2 * m2 * M)
    if change > max_step_sensitivity:
        raise DifferentiationError(f"second derivative moved by {change:.3g} when halving the step")
    return ChiResult(res.chi, max(res.error, change), k)
