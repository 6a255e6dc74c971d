"""Torus geometry, block/polymer hierarchy and (fractional) lattice Laplacians."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConfigurationError, DomainError, ScaleOverflowError, ScaleMismatchError


@dataclass(frozen=True)
class TorusLattice:
    """Discrete torus of period ``L**N`` in dimension ``d``.

    Sites are numbered in C order of their coordinates in ``[0, P)^d``.
    """

    d: int
    L: int
    N: int

    def __post_init__(self):
        if not 1 <= self.d <= 5:
            raise ConfigurationError(f"dimension must be in 1..5, got {self.d}")
        if self.L < 2:
            raise ConfigurationError(f"block base L must be >= 2, got {self.L}")
        if self.N < 1:
            raise ConfigurationError(f"number of scales N must be >= 1, got {self.N}")
        if self.L ** self.N < 3:
            raise ConfigurationError("torus period L**N must be >= 3")

    @property
    def period(self) -> int:
        return self.L ** self.N

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.period,) * self.d

    @property
    def n_sites(self) -> int:
        return self.period ** self.d

    @cached_property
    def coords(self) -> np.ndarray:
        """(n_sites, d) integer coordinates of every site."""
        grids = np.indices(self.shape).reshape(self.d, -1)
        return grids.T.copy()

    def index(self, coord) -> int:
        c = np.mod(np.asarray(coord, dtype=np.int64), self.period)
        return int(np.ravel_multi_index(tuple(c), self.shape))

    def neighbours(self, site: int) -> list[int]:
        c = self.coords[site]
        out = []
        for axis in range(self.d):
            for step in (1, -1):
                e = c.copy()
                e[axis] += step
                out.append(self.index(e))
        return out

    def distance_linf(self, x: int, y: int) -> int:
        delta = np.abs(self.coords[x] - self.coords[y])
        return int(np.max(np.minimum(delta, self.period - delta)))

    def distance_l1(self, x: int, y: int) -> int:
        delta = np.abs(self.coords[x] - self.coords[y])
        return int(np.sum(np.minimum(delta, self.period - delta)))

    def blocks(self, j: int) -> list["Block"]:
        if not 0 <= j <= self.N:
            raise ScaleOverflowError(f"scale {j} outside 0..{self.N}")
        side = self.L ** j
        ticks = range(0, self.period, side)
        return [Block(j, tuple(c)) for c in itertools.product(ticks, repeat=self.d)]

    def block_sites(self, block: "Block") -> np.ndarray:
        side = self.L ** block.j
        ranges = [range(c, c + side) for c in block.corner]
        return np.array(
            [self.index(c) for c in itertools.product(*ranges)], dtype=np.int64
        )

    def parent(self, block: "Block") -> "Block":
        if block.j >= self.N:
            raise ScaleOverflowError("the scale-N block has no parent")
        side = self.L ** (block.j + 1)
        return Block(block.j + 1, tuple((c // side) * side for c in block.corner))


@dataclass(frozen=True, order=True)
class Block:
    j: int
    corner: tuple[int, ...]


@dataclass(frozen=True)
class Polymer:
    """A (possibly empty) union of scale-``j`` blocks."""

    j: int
    blocks: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "blocks", frozenset(self.blocks))
        for b in self.blocks:
            if b.j != self.j:
                raise ScaleMismatchError(f"block at scale {b.j} in a scale-{self.j} polymer")

    def __len__(self):
        return len(self.blocks)

    def __iter__(self):
        return iter(sorted(self.blocks))

    def __bool__(self):
        return bool(self.blocks)

    def __sub__(self, other: "Polymer") -> "Polymer":
        _same_scale(self, other)
        return Polymer(self.j, self.blocks - other.blocks)

    def __or__(self, other: "Polymer") -> "Polymer":
        _same_scale(self, other)
        return Polymer(self.j, self.blocks | other.blocks)

    def __le__(self, other: "Polymer") -> bool:
        _same_scale(self, other)
        return self.blocks <= other.blocks

    def sites(self, torus: TorusLattice) -> np.ndarray:
        if not self.blocks:
            return np.zeros(0, dtype=np.int64)
        return np.sort(np.concatenate([torus.block_sites(b) for b in self.blocks]))

    def subpolymers(self):
        """All sub-polymers, in a deterministic order."""
        bl = sorted(self.blocks)
        for r in range(len(bl) + 1):
            for combo in itertools.combinations(bl, r):
                yield Polymer(self.j, frozenset(combo))

    def as_scale(self, torus: TorusLattice, j: int) -> "Polymer":
        """Re-express this polymer as a union of finer blocks at scale ``j <= self.j``."""
        if j > self.j:
            raise ScaleMismatchError("can only refine to a smaller scale")
        out = set()
        for b in self.blocks:
            coarse = self.j
            current = {b}
            while coarse > j:
                nxt = set()
                side = torus.L ** (coarse - 1)
                for blk in current:
                    ranges = [range(c, c + torus.L ** coarse, side) for c in blk.corner]
                    nxt.update(Block(coarse - 1, tuple(c)) for c in itertools.product(*ranges))
                current = nxt
                coarse -= 1
            out |= current
        return Polymer(j, frozenset(out))


def _same_scale(a: Polymer, b: Polymer):
    if a.j != b.j:
        raise ScaleMismatchError(f"polymers at scales {a.j} and {b.j}")


def all_polymers(torus: TorusLattice, j: int) -> list[Polymer]:
    return list(Polymer(j, frozenset(torus.blocks(j))).subpolymers())


def closure(torus: TorusLattice, X: Polymer) -> Polymer:
    """Smallest scale-(j+1) polymer containing ``X``."""
    if X.j >= torus.N:
        raise ScaleOverflowError(f"cannot close a scale-{X.j} polymer on an N={torus.N} torus")
    return Polymer(X.j + 1, frozenset(torus.parent(b) for b in X.blocks))


def block_distance(torus: TorusLattice, a: Block, b: Block) -> int:
    """Torus l-infinity distance between two same-scale blocks viewed as closed cubes.

    Edge- or corner-adjacent blocks are at distance 0; blocks with a gap of
    one block width are at distance ``L**j``.
    """
    if a.j != b.j:
        raise ScaleMismatchError("blocks at different scales")
    side = torus.L ** a.j
    P = torus.period
    dist = 0
    for ca, cb in zip(a.corner, b.corner):
        delta = (cb - ca) % P
        delta = min(delta, P - delta)
        dist = max(dist, max(0, delta - side))
    return dist


def connected_components(torus: TorusLattice, X: Polymer) -> list[Polymer]:
    blocks = sorted(X.blocks)
    parent = list(range(len(blocks)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    cutoff = torus.L ** X.j
    for i, j in itertools.combinations(range(len(blocks)), 2):
        if block_distance(torus, blocks[i], blocks[j]) < cutoff:
            parent[find(i)] = find(j)
    groups: dict[int, list[Block]] = {}
    for i, b in enumerate(blocks):
        groups.setdefault(find(i), []).append(b)
    comps = [Polymer(X.j, frozenset(g)) for g in groups.values()]
    return sorted(comps, key=lambda p: sorted(p.blocks))


def polymer_distance(torus: TorusLattice, X: Polymer, Y: Polymer) -> int:
    return min(block_distance(torus, a, b) for a in X.blocks for b in Y.blocks)


# --------------------------------------------------------------------------- fields


@dataclass(frozen=True)
class LatticeField:
    """Real field on a torus; ``values`` has shape (n_sites,) or (n_sites, n)."""

    torus: TorusLattice
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim not in (1, 2) or v.shape[0] != self.torus.n_sites:
            raise ConfigurationError(
                f"field of shape {v.shape} does not match a torus with {self.torus.n_sites} sites"
            )
        if v.ndim == 2 and v.shape[1] not in (1, 2):
            raise ConfigurationError("field components must be 1 or 2")
        object.__setattr__(self, "values", v)

    @property
    def components(self) -> int:
        return 1 if self.values.ndim == 1 else self.values.shape[1]


def laplacian_apply(f: LatticeField, torus: TorusLattice | None = None) -> LatticeField:
    """Nearest-neighbour lattice Laplacian ``(Δf)_x = Σ_e (f_{x+e} - f_x)``."""
    if torus is not None and torus != f.torus:
        raise ConfigurationError("field lives on a different torus")
    t = f.torus
    extra = f.values.shape[1:]
    grid = f.values.reshape(t.shape + extra)
    out = -2 * t.d * grid
    for axis in range(t.d):
        out = out + np.roll(grid, 1, axis=axis) + np.roll(grid, -1, axis=axis)
    return LatticeField(t, out.reshape(f.values.shape))


def laplacian_matrix(torus: TorusLattice) -> np.ndarray:
    """Dense matrix of Δ (negative semidefinite)."""
    n = torus.n_sites
    M = np.zeros((n, n))
    for x in range(n):
        M[x, x] -= 2 * torus.d
        for y in torus.neighbours(x):
            M[x, y] += 1
    return M


def laplacian_eigenvalues(torus: TorusLattice) -> np.ndarray:
    """Eigenvalues of -Δ on the Fourier grid, shape ``torus.shape``."""
    return torus_symbol(torus.d, torus.period)


def torus_symbol(d: int, P: int) -> np.ndarray:
    k = 2 * np.pi * np.arange(P) / P
    one = 2.0 - 2.0 * np.cos(k)
    lam = np.zeros((P,) * d)
    for axis in range(d):
        shape = [1] * d
        shape[axis] = P
        lam = lam + one.reshape(shape)
    return lam


def fractional_kernel(d: int, P: int, alpha: float) -> np.ndarray:
    """Row ``K[0, x]`` of ``(-Δ)^{α/2}`` on the period-P torus, shape ``(P,)*d``."""
    if not 0 < alpha <= 2:
        raise DomainError(f"alpha must lie in (0, 2], got {alpha}")
    lam = torus_symbol(d, P)
    mult = np.power(lam, alpha / 2)
    return np.fft.ifftn(mult).real


def kernel_to_matrix(kernel: np.ndarray) -> np.ndarray:
    """Dense matrix ``M[x, y] = kernel[y - x]`` of a translation-invariant kernel."""
    shape = kernel.shape
    coords = np.indices(shape).reshape(len(shape), -1).T
    n = coords.shape[0]
    P = np.array(shape)
    diff = (coords[None, :, :] - coords[:, None, :]) % P
    flat = np.ravel_multi_index(tuple(diff.reshape(-1, len(shape)).T), shape)
    return kernel.reshape(-1)[flat].reshape(n, n)


def fractional_laplacian_matrix(torus: TorusLattice, alpha: float) -> np.ndarray:
    """Dense symmetric matrix of ``(-Δ)^{α/2}``, built spectrally."""
    return kernel_to_matrix(fractional_kernel(torus.d, torus.period, alpha))


def fractional_laplacian_apply(f: LatticeField, alpha: float) -> LatticeField:
    t = f.torus
    if not 0 < alpha <= 2:
        raise DomainError(f"alpha must lie in (0, 2], got {alpha}")
    lam = laplacian_eigenvalues(t)
    mult = np.power(lam, alpha / 2)
    axes = tuple(range(t.d))
    extra = f.values.shape[1:]
    grid = f.values.reshape(t.shape + extra)
    if extra:
        mult = mult[..., None]
    out = np.fft.ifftn(np.fft.fftn(grid, axes=axes) * mult, axes=axes).real
    return LatticeField(t, out.reshape(f.values.shape))
