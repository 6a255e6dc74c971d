"""Gaussian fields with covariance ((-Δ)^{α/2} + m²)^{-1}: scale decomposition, sampling, β_j."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import erf

from .errors import ConfigurationError, ConstructionError, DomainError, SingularCovarianceError
from .lattice import LatticeField, TorusLattice, kernel_to_matrix, laplacian_eigenvalues
from .polynomial import Polynomial, expect_poly, phi, zeta


@dataclass(frozen=True)
class SpectralCovariance:
    """Translation-invariant covariance given by its Fourier multipliers."""

    torus: TorusLattice
    multipliers: np.ndarray  # shape torus.shape

    @cached_property
    def kernel(self) -> np.ndarray:
        """Row C[0, x], shape torus.shape."""
        return np.fft.ifftn(self.multipliers).real

    @cached_property
    def matrix(self) -> np.ndarray:
        return kernel_to_matrix(self.kernel)

    @property
    def variance(self) -> float:
        return float(self.kernel.reshape(-1)[0])

    def sum_sq(self) -> float:
        """Sum over x of C[0, x]^2, via Parseval."""
        return float(np.sum(self.multipliers ** 2) / self.multipliers.size)


@dataclass(frozen=True)
class Covariance(SpectralCovariance):
    alpha: float = 2.0
    m2: float = 1.0


def build_covariance(torus: TorusLattice, alpha: float, m2: float) -> Covariance:
    if m2 <= 0:
        raise SingularCovarianceError("m^2 must be positive (the zero mode is otherwise singular)")
    if not 0 < alpha <= 2:
        raise DomainError(f"alpha must lie in (0, 2], got {alpha}")
    lam = laplacian_eigenvalues(torus)
    mult = 1.0 / (np.power(lam, alpha / 2) + m2)
    return Covariance(torus, mult, alpha, m2)


# --------------------------------------------------------------------------- decomposition


STEP_SHARPNESS = 3.0


def smooth_step(x: np.ndarray, sharpness: float = STEP_SHARPNESS) -> np.ndarray:
    """Analytic step (1 + erf(kx))/2 centred at 0.

    Analytic rather than compactly supported, so the kernels of the pieces
    decay fast in space and early scales do not feel the torus size.
    """
    x = np.asarray(x, dtype=float)
    return 0.5 * (1.0 + erf(sharpness * x))


def log_scale(torus: TorusLattice) -> np.ndarray:
    """t(k) = -log_L sqrt(λ_k); +inf on the zero mode."""
    lam = laplacian_eigenvalues(torus)
    with np.errstate(divide="ignore"):
        return -0.5 * np.log(lam) / math.log(torus.L)


def cumulative_window(t: np.ndarray, j: int, N: int) -> np.ndarray:
    """Weight of scales 1..j at log-frequency t; 0 for j = 0 and 1 for j = N."""
    if j <= 0:
        return np.zeros_like(t)
    if j >= N:
        return np.ones_like(t)
    finite = np.where(np.isfinite(t), t, 1e300)
    return 1.0 - smooth_step(finite - j + 0.5)


@dataclass
class CovarianceDecomposition:
    parent: Covariance
    pieces: list[SpectralCovariance]
    windows: list[np.ndarray]
    diagnostics: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return len(self.pieces)

    def piece(self, j: int) -> SpectralCovariance:
        """C_j for 1 <= j <= N."""
        if not 1 <= j <= self.N:
            raise ConfigurationError(f"scale {j} outside 1..{self.N}")
        return self.pieces[j - 1]

    def cumulative(self, k: int) -> SpectralCovariance:
        """w_k = C_1 + ... + C_k (w_0 = 0)."""
        if not 0 <= k <= self.N:
            raise ConfigurationError(f"scale {k} outside 0..{self.N}")
        mult = np.zeros_like(self.parent.multipliers)
        for p in self.pieces[:k]:
            mult = mult + p.multipliers
        return SpectralCovariance(self.parent.torus, mult)

    def kernel_rows_csv(self) -> str:
        rows = ["j,x,C_j"]
        for j, p in enumerate(self.pieces, start=1):
            for x, v in enumerate(p.kernel.reshape(-1)):
                rows.append(f"{j},{x},{v!r}")
        return "\n".join(rows) + "\n"


def decompose(C: Covariance, L: int | None = None, *, check_matrix: bool | None = None) -> CovarianceDecomposition:
    """Slice the multipliers of ``C`` with a smooth base-L partition of unity in log-frequency.

    Piece j carries the modes with sqrt(λ_k) between roughly L^{-j} and
    L^{-(j-2)}; the last piece also carries the zero mode.
    """
    torus = C.torus
    if L is not None and L != torus.L:
        raise ConfigurationError("decomposition base must match the torus block base")
    N = torus.N
    t = log_scale(torus)
    cum = [cumulative_window(t, j, N) for j in range(N + 1)]
    pieces, windows = [], []
    for j in range(1, N + 1):
        w = cum[j] - cum[j - 1]
        if np.any(w < -1e-15):
            raise ConstructionError(f"window for scale {j} is not a nonnegative weight")
        windows.append(w)
        pieces.append(SpectralCovariance(torus, w * C.multipliers))

    recon = sum(p.multipliers for p in pieces)
    diag = {
        "reconstruction_error": float(np.max(np.abs(np.fft.ifftn(recon - C.multipliers).real))),
        "min_eigenvalue": [float(p.multipliers.min()) for p in pieces],
        "trace_fraction": [],
    }
    for j, p in enumerate(pieces, start=1):
        lo = -np.inf if j == 1 else j - 2
        hi = np.inf if j == N else j
        inside = (t >= lo) & (t <= hi)
        tr = p.multipliers.sum()
        diag["trace_fraction"].append(float(p.multipliers[inside].sum() / tr) if tr > 0 else 1.0)
    if check_matrix is None:
        check_matrix = torus.n_sites <= 512
    if check_matrix:
        diag["matrix_min_eigenvalue"] = [float(np.linalg.eigvalsh(p.matrix).min()) for p in pieces]
    if min(diag["min_eigenvalue"]) < -1e-10:
        raise ConstructionError("a covariance piece is not positive semidefinite")
    return CovarianceDecomposition(C, pieces, windows, diag)


# --------------------------------------------------------------------------- sampling


def sample_field(C: SpectralCovariance, rng: np.random.Generator, size: int | None = None):
    """Spectral sampler: white noise filtered by the square root of the multipliers."""
    torus = C.torus
    shape = torus.shape
    count = 1 if size is None else size
    noise = rng.standard_normal((count,) + shape)
    axes = tuple(range(1, torus.d + 1))
    root = np.sqrt(np.clip(C.multipliers, 0.0, None))
    out = np.fft.ifftn(np.fft.fftn(noise, axes=axes) * root, axes=axes).real
    flat = out.reshape(count, -1)
    if size is None:
        return LatticeField(torus, flat[0])
    return flat


def sample_matrix_field(C: np.ndarray, rng: np.random.Generator, size: int) -> np.ndarray:
    """Samples for an arbitrary PSD matrix via its eigendecomposition (hand-built covariances)."""
    w, V = np.linalg.eigh(np.asarray(C, dtype=float))
    root = V * np.sqrt(np.clip(w, 0.0, None))
    return rng.standard_normal((size, len(w))) @ root.T


def banded_covariance(torus: TorusLattice, range_l1: float, weights=None) -> np.ndarray:
    """Hand-built finite-range PSD covariance: C_xy = 0 whenever ||x - y||_1 >= range_l1.

    Built as A A^T with A supported on an l1-ball of radius (range_l1 - 1)/2,
    which keeps the product within range.
    """
    radius = (range_l1 - 1) / 2.0
    n = torus.n_sites
    A = np.zeros((n, n))
    for x in range(n):
        for y in range(n):
            dist = torus.distance_l1(x, y)
            if dist <= radius:
                A[x, y] = 1.0 if weights is None else weights(dist)
    C = A @ A.T
    for x in range(n):
        for y in range(n):
            if torus.distance_l1(x, y) >= range_l1 and abs(C[x, y]) > 0:
                raise ConstructionError("banded covariance exceeded its range")
    return C


# --------------------------------------------------------------------------- exact identities


def progressive_check(C1, C2, p: Polynomial, degree_cap: int = 12) -> float:
    """Largest coefficient gap between E_{C1+C2} p(phi+z) and E_{C2} E_{C1} p(phi+z''+z')."""
    M1 = np.asarray(getattr(C1, "matrix", C1), dtype=float)
    M2 = np.asarray(getattr(C2, "matrix", C2), dtype=float)
    sites = sorted({v[1] for v in p.variables() if v[0] == "phi"})
    one_step = p.substitute({("phi", x): phi(x) + zeta(x, "z") for x in sites})
    lhs = expect_poly(M1 + M2, one_step, kind="z", degree_cap=degree_cap)
    two_step = p.substitute({("phi", x): phi(x) + zeta(x, "z2") + zeta(x, "z1") for x in sites})
    inner = expect_poly(M1, two_step, kind="z1", degree_cap=degree_cap)
    rhs = expect_poly(M2, inner, kind="z2", degree_cap=degree_cap)
    return float(lhs.max_abs_diff(rhs))


# --------------------------------------------------------------------------- beta coefficients


def beta_j(dec: CovarianceDecomposition, j: int, n: float, eps: float) -> float:
    """β_j = (n+8) L^{-εj} Σ_x (w_{j+1;0,x}^2 - w_{j;0,x}^2), for 0 <= j < N."""
    if not 0 <= j < dec.N:
        raise ConfigurationError(f"beta_j needs 0 <= j < N = {dec.N}, got {j}")
    L = dec.parent.torus.L
    s1 = dec.cumulative(j + 1).sum_sq()
    s0 = dec.cumulative(j).sum_sq()
    return (n + 8) * L ** (-eps * j) * (s1 - s0)


def beta_sequence(dec: CovarianceDecomposition, n: float, eps: float) -> np.ndarray:
    """β_0 .. β_{N-1}, computed with one cumulative pass."""
    L = dec.parent.torus.L
    mult = np.zeros_like(dec.parent.multipliers)
    sums = [0.0]
    for p in dec.pieces:
        mult = mult + p.multipliers
        sums.append(float(np.sum(mult ** 2) / mult.size))
    return np.array([(n + 8) * L ** (-eps * j) * (sums[j + 1] - sums[j]) for j in range(dec.N)])


def boundary_layer(L: int) -> int:
    """Number of top scales distorted by the finite torus.

    The lowest nonzero mode sits near t = N - log_L(2π); pieces within
    about one scale of it (and the zero-mode piece) are not bulk scales.
    """
    return int(math.ceil(math.log(2 * math.pi, L))) + 1


def bulk_betas(betas: np.ndarray, L: int) -> np.ndarray:
    """β_j for the scales j < N - boundary_layer(L)."""
    keep = len(betas) - boundary_layer(L)
    if keep < 2:
        raise ConfigurationError(f"N = {len(betas)} leaves fewer than two bulk scales for L = {L}")
    return np.asarray(betas[:keep])


def tail_average(betas: np.ndarray, fraction: float = 1 / 3) -> float:
    k = max(1, int(round(len(betas) * fraction)))
    return float(np.mean(betas[-k:]))


def estimate_a(d: int, L: int, N: int, alpha: float, m2: float | None = None, n: float = 1) -> float:
    """Tail average of the bulk β_j at negligible mass, the proxy for lim β_j(0).

    The default mass puts the mass scale at 2N, far beyond the torus.
    """
    eps = 2 * alpha - d
    if m2 is None:
        m2 = float(L) ** (-2 * alpha * N)
    torus = TorusLattice(d, L, N)
    dec = decompose(build_covariance(torus, alpha, m2), check_matrix=False)
    return tail_average(bulk_betas(beta_sequence(dec, n, eps), L))


def beta_table(d: int, L: int, N: int, alpha: float, m2: float, n: float = 1) -> np.ndarray:
    """β_0 .. β_{N-1} on a (d, L, N) torus without storing the pieces.

    Same numbers as ``beta_sequence(decompose(...))``; memory stays at a few
    spectrum-sized arrays, which matters for N around 20 in d = 1.
    """
    torus = TorusLattice(d, L, N)
    C = build_covariance(torus, alpha, m2)
    t = log_scale(torus)
    eps = 2 * alpha - d
    sums = [0.0]
    for k in range(1, N + 1):
        w = cumulative_window(t, k, N) * C.multipliers
        sums.append(float(np.sum(w * w) / w.size))
    return np.array([(n + 8) * L ** (-eps * j) * (sums[j + 1] - sums[j]) for j in range(N)])
