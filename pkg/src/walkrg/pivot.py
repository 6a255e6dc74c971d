"""Pivot-algorithm Monte Carlo for self-avoiding walks and the nu-exponent fit."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import ConfigurationError, MixingFailure
from .rng import stream

_EMPTY = np.iinfo(np.int64).min


# --------------------------------------------------------------------------- hash table


@numba.njit(cache=True)
def _encode(p, n):
    side = 2 * n + 1
    key = 0
    mul = 1
    for i in range(p.shape[0]):
        key += (p[i] + n) * mul
        mul *= side
    return key


@numba.njit(cache=True)
def _slot(key, mask):
    h = (key * 0x9E3779B97F4A7C15) & 0x7FFFFFFFFFFFFFFF
    return (h >> 17) & mask


@numba.njit(cache=True)
def _rebuild(walk, keys, vals):
    n = walk.shape[0] - 1
    mask = keys.shape[0] - 1
    keys[:] = _EMPTY
    for i in range(n + 1):
        key = _encode(walk[i], n)
        s = _slot(key, mask)
        while keys[s] != _EMPTY:
            s = (s + 1) & mask
        keys[s] = key
        vals[s] = i


@numba.njit(cache=True)
def _lookup(key, keys, vals):
    mask = keys.shape[0] - 1
    s = _slot(key, mask)
    while keys[s] != _EMPTY:
        if keys[s] == key:
            return vals[s]
        s = (s + 1) & mask
    return -1


@numba.njit(cache=True)
def _try_pivot(walk, keys, vals, k, perm, signs, scratch):
    """Attempt the pivot about step ``k``; mutate ``walk`` only on acceptance."""
    n = walk.shape[0] - 1
    d = walk.shape[1]
    pivot = walk[k]
    p = np.empty(d, np.int64)
    for i in range(k + 1, n + 1):
        for a in range(d):
            p[a] = pivot[a] + signs[a] * (walk[i, perm[a]] - pivot[perm[a]])
        hit = _lookup(_encode(p, n), keys, vals)
        if hit != -1 and hit <= k:
            return False
        for a in range(d):
            scratch[i, a] = p[a]
    for i in range(k + 1, n + 1):
        for a in range(d):
            walk[i, a] = scratch[i, a]
    _rebuild(walk, keys, vals)
    return True


@numba.njit(cache=True)
def _run(walk, keys, vals, ks, perms, signs, record, r2_out, acc_limit):
    """Run proposals until ``acc_limit`` acceptances or the random arrays run out.

    Returns (proposals used, acceptances). When ``record`` is set, |w(n)|^2
    after each proposal is written to ``r2_out``.
    """
    n = walk.shape[0] - 1
    d = walk.shape[1]
    scratch = np.empty_like(walk)
    acc = 0
    used = 0
    for t in range(ks.shape[0]):
        if acc >= acc_limit:
            break
        if _try_pivot(walk, keys, vals, ks[t], perms[t], signs[t], scratch):
            acc += 1
        used += 1
        if record:
            s = 0
            for a in range(d):
                s += walk[n, a] * walk[n, a]
            r2_out[t] = s
    return used, acc


# --------------------------------------------------------------------------- state


def _table_size(n: int) -> int:
    size = 1
    while size < 4 * (n + 1):
        size <<= 1
    return size


def straight_rod(n: int, d: int) -> np.ndarray:
    w = np.zeros((n + 1, d), dtype=np.int64)
    w[:, 0] = np.arange(n + 1)
    return w


def is_self_avoiding(walk: np.ndarray) -> bool:
    return len({tuple(p) for p in walk.tolist()}) == walk.shape[0]


@dataclass
class PivotState:
    walk: np.ndarray
    rng: np.random.Generator
    accepted: int = 0
    proposed: int = 0
    keys: np.ndarray = field(init=False, repr=False)
    vals: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.walk = np.ascontiguousarray(self.walk, dtype=np.int64)
        n = self.walk.shape[0] - 1
        if n < 2:
            raise ConfigurationError("pivot moves need walks of length >= 2")
        size = _table_size(n)
        self.keys = np.empty(size, dtype=np.int64)
        self.vals = np.empty(size, dtype=np.int64)
        _rebuild(self.walk, self.keys, self.vals)

    @classmethod
    def rod(cls, n: int, d: int, seed: int = 0, replica: int = 0) -> "PivotState":
        return cls(straight_rod(n, d), stream(seed, replica, purpose=1))

    @property
    def n(self) -> int:
        return self.walk.shape[0] - 1

    @property
    def d(self) -> int:
        return self.walk.shape[1]

    @property
    def acceptance(self) -> float:
        return self.accepted / self.proposed if self.proposed else float("nan")

    def occupancy(self) -> dict[tuple[int, ...], int]:
        """Site -> step index, read back from the incremental hash table."""
        out = {}
        for p, i in zip(self.walk.tolist(), range(self.n + 1)):
            out[tuple(p)] = int(_lookup(_encode(np.asarray(p, dtype=np.int64), self.n), self.keys, self.vals))
        return out

    def random_moves(self, count: int):
        d = self.d
        ks = self.rng.integers(1, self.n, size=count, dtype=np.int64)
        perms = np.argsort(self.rng.random((count, d)), axis=1).astype(np.int64)
        signs = (1 - 2 * self.rng.integers(0, 2, size=(count, d))).astype(np.int64)
        return ks, perms, signs


def group_elements(d: int):
    """All 2^d d! signed permutations as (perm, signs) pairs."""
    import itertools

    for perm in itertools.permutations(range(d)):
        for signs in itertools.product((1, -1), repeat=d):
            yield np.array(perm, dtype=np.int64), np.array(signs, dtype=np.int64)


def apply_group(perm, signs, x):
    x = np.asarray(x)
    return np.asarray(signs) * x[..., np.asarray(perm)]


def pivot_step(state: PivotState, k: int | None = None, perm=None, signs=None) -> bool:
    """One pivot proposal; random (k, g) unless given. Returns acceptance."""
    if k is None or perm is None or signs is None:
        ks, perms, sg = state.random_moves(1)
        k = int(ks[0]) if k is None else k
        perm = perms[0] if perm is None else perm
        signs = sg[0] if signs is None else signs
    if not 1 <= k <= state.n - 1:
        raise ConfigurationError(f"pivot index {k} outside 1..{state.n - 1}")
    scratch = np.empty_like(state.walk)
    ok = _try_pivot(
        state.walk, state.keys, state.vals, int(k),
        np.asarray(perm, dtype=np.int64), np.asarray(signs, dtype=np.int64), scratch,
    )
    state.proposed += 1
    state.accepted += int(ok)
    return bool(ok)


def run_chain(state: PivotState, accepted: int, *, record: bool = False, chunk: int = 65536,
              max_proposals: int | None = None):
    """Advance until ``accepted`` more moves are accepted.

    Returns the recorded |w(n)|^2 series (empty unless ``record``) and the
    number of proposals used.
    """
    series = []
    acc = 0
    used_total = 0
    while acc < accepted:
        if max_proposals is not None and used_total >= max_proposals:
            break
        size = chunk if max_proposals is None else min(chunk, max_proposals - used_total)
        ks, perms, signs = state.random_moves(size)
        out = np.empty(size if record else 0, dtype=np.int64)
        used, got = _run(state.walk, state.keys, state.vals, ks, perms, signs, record, out, accepted - acc)
        if record:
            series.append(out[:used])
        acc += got
        used_total += used
        state.proposed += used
        state.accepted += got
    r2 = np.concatenate(series) if series else np.zeros(0, dtype=np.int64)
    return r2, used_total


# --------------------------------------------------------------------------- statistics


@dataclass
class DisplacementSample:
    n: int
    mean_r2: float
    count: int
    stderr: float
    acceptance: float


def batch_means(x: np.ndarray, n_batches: int = 50) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    m = len(x) // n_batches
    if m == 0:
        raise ConfigurationError("too few samples for batch means")
    b = x[: m * n_batches].reshape(n_batches, m).mean(axis=1)
    return float(x.mean()), float(b.std(ddof=1) / math.sqrt(n_batches))


def sample_r2(n: int, d: int, accepted: int, burn_in: int, seed: int, replica: int = 0,
              min_acceptance: float = 0.01) -> DisplacementSample:
    state = PivotState.rod(n, d, seed, replica)
    if burn_in > 0:
        cap = int(math.ceil(burn_in / min_acceptance))
        _, used = run_chain(state, burn_in, max_proposals=cap)
        if state.accepted < burn_in:
            raise MixingFailure(
                f"pivot chain at n={n}, d={d} accepted {state.accepted} of {used} burn-in proposals",
                {"n": n, "d": d, "accepted": state.accepted, "proposed": used},
            )
    acc0, prop0 = state.accepted, state.proposed
    r2, used = run_chain(state, accepted, record=True)
    mean, err = batch_means(r2)
    rate = (state.accepted - acc0) / max(state.proposed - prop0, 1)
    return DisplacementSample(n, mean, len(r2), err, rate)


@dataclass
class NuEstimate:
    d: int
    nu: float
    stderr: float
    ci95: tuple[float, float]
    amplitude: float
    samples: list[DisplacementSample]


def fit_nu(samples: list[DisplacementSample]) -> tuple[float, float, float]:
    """Weighted least squares of log R_n against log n. Returns (nu, stderr, log D)."""
    n = np.array([s.n for s in samples], dtype=float)
    r2 = np.array([s.mean_r2 for s in samples])
    err = np.array([s.stderr for s in samples])
    y = 0.5 * np.log(r2)
    sy = 0.5 * err / r2
    sy = np.where(sy > 0, sy, 1e-12)
    X = np.column_stack([np.ones_like(n), np.log(n)])
    W = 1.0 / sy ** 2
    cov = np.linalg.inv(X.T @ (X * W[:, None]))
    beta = cov @ (X.T @ (W * y))
    return float(beta[1]), float(math.sqrt(cov[1, 1])), float(beta[0])


def estimate_nu(d: int, n_grid, accepted: int = 100_000, burn_in: int | None = None,
                seed: int = 0) -> NuEstimate:
    """Independent rod-started pivot chains per length, then a log-log fit."""
    n_grid = sorted(int(n) for n in n_grid)
    if len(n_grid) < 2 or n_grid[-1] < 4 * n_grid[0]:
        raise ConfigurationError("n_grid must span at least a factor 4")
    samples = []
    for replica, n in enumerate(n_grid):
        b = burn_in if burn_in is not None else 20 * n
        samples.append(sample_r2(n, d, accepted, b, seed, replica))
    nu, se, logD = fit_nu(samples)
    return NuEstimate(d, nu, se, (nu - 1.96 * se, nu + 1.96 * se), math.exp(logD), samples)
