"""Continuous-time weakly self-avoiding walk: trajectories, local times, c_{T,g} and chi."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .errors import ConfigurationError, UnsupportedRegime
from .longrange import LongRangeStepSampler
from .rng import as_generator, stream

_MAX_JUMPS = 1 << 16


# --------------------------------------------------------------------------- generators


@dataclass(frozen=True)
class LatticeGenerator:
    """Translation-invariant walk on Z^d: total jump rate and a displacement table."""

    d: int
    rate: float
    displacements: np.ndarray  # (k, d) int64
    cdf: np.ndarray  # (k,) cumulative jump probabilities

    @classmethod
    def nearest_neighbour(cls, d: int) -> "LatticeGenerator":
        disp = np.zeros((2 * d, d), dtype=np.int64)
        for a in range(d):
            disp[2 * a, a] = 1
            disp[2 * a + 1, a] = -1
        cdf = np.arange(1, 2 * d + 1) / (2 * d)
        return cls(d, float(2 * d), disp, cdf)

    @classmethod
    def fractional(cls, sampler: LongRangeStepSampler) -> "LatticeGenerator":
        cdf = np.cumsum(sampler.probabilities)
        cdf[-1] = 1.0
        return cls(sampler.d, sampler.jump_rate, sampler.displacements.astype(np.int64), cdf)


@dataclass(frozen=True)
class GraphGenerator:
    """Walk on a finite graph with symmetric generator ``Q`` (row sums zero)."""

    Q: np.ndarray

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=float)
        off = Q - np.diag(np.diag(Q))
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise ConfigurationError("generator must be a square matrix")
        if np.any(off < 0):
            raise ConfigurationError("off-diagonal rates must be nonnegative")
        if not np.allclose(Q, Q.T):
            raise ConfigurationError("generator must be symmetric")
        if not np.allclose(Q.sum(axis=1), 0):
            raise ConfigurationError("generator rows must sum to zero")
        object.__setattr__(self, "Q", Q)

    @classmethod
    def from_laplacian(cls, laplacian: np.ndarray) -> "GraphGenerator":
        return cls(np.asarray(laplacian, dtype=float))

    @property
    def n_sites(self) -> int:
        return self.Q.shape[0]

    def tables(self):
        M = self.n_sites
        rates = -np.diag(self.Q).copy()
        cdf = np.zeros((M, M))
        for x in range(M):
            row = self.Q[x].copy()
            row[x] = 0.0
            if rates[x] > 0:
                cdf[x] = np.cumsum(row) / rates[x]
                cdf[x, -1] = 1.0
        return rates, cdf


def path_graph_laplacian(M: int) -> np.ndarray:
    """Graph Laplacian Δ of the path 0 - 1 - ... - (M-1)."""
    Q = np.zeros((M, M))
    for x in range(M - 1):
        Q[x, x + 1] = Q[x + 1, x] = 1.0
    return Q - np.diag(Q.sum(axis=1))


# --------------------------------------------------------------------------- simulation kernels


@numba.njit(cache=True)
def _seed(s):
    np.random.seed(s)


@numba.njit(cache=True)
def _sim_lattice(T, rate, disp, cdf, times, pos):
    """Fill jump times and positions (pos[0] = origin); return the number of jumps."""
    d = disp.shape[1]
    for a in range(d):
        pos[0, a] = 0
    t = 0.0
    j = 0
    while True:
        t += np.random.exponential(1.0 / rate)
        if t >= T:
            return j
        if j + 1 >= times.shape[0]:
            return -1
        k = np.searchsorted(cdf, np.random.random(), side="right")
        if k >= cdf.shape[0]:
            k = cdf.shape[0] - 1
        times[j] = t
        for a in range(d):
            pos[j + 1, a] = pos[j, a] + disp[k, a]
        j += 1


@numba.njit(cache=True)
def _sim_graph(T, start, rates, cdf, times, pos):
    pos[0] = start
    t = 0.0
    j = 0
    while True:
        x = pos[j]
        if rates[x] <= 0.0:
            return j
        t += np.random.exponential(1.0 / rates[x])
        if t >= T:
            return j
        if j + 1 >= times.shape[0]:
            return -1
        y = np.searchsorted(cdf[x], np.random.random(), side="right")
        if y >= cdf.shape[1]:
            y = cdf.shape[1] - 1
        times[j] = t
        pos[j + 1] = y
        j += 1


@numba.njit(cache=True)
def _keys_lattice(pos, count):
    d = pos.shape[1]
    bits = 63 // d
    off = 1 << (bits - 1)
    keys = np.empty(count + 1, np.int64)
    for i in range(count + 1):
        k = 0
        for a in range(d):
            k |= (pos[i, a] + off) << (bits * a)
        keys[i] = k
    return keys


@numba.njit(cache=True)
def _intervals(times, count, T):
    holds = np.empty(count + 1, np.float64)
    prev = 0.0
    for i in range(count):
        holds[i] = times[i] - prev
        prev = times[i]
    holds[count] = T - prev
    return holds


@numba.njit(cache=True)
def _sum_sq_local(keys, holds):
    order = np.argsort(keys)
    total = 0.0
    acc = 0.0
    last = keys[order[0]]
    for idx in order:
        if keys[idx] != last:
            total += acc * acc
            acc = 0.0
            last = keys[idx]
        acc += holds[idx]
    return total + acc * acc


@numba.njit(cache=True)
def _grid_integral(keys, holds, T_max, dt, g, nu):
    """Trapezoid rule for the integral over [0, T_max] of exp(-g I(t) - nu t) along one path."""
    n_steps = int(round(T_max / dt))
    # dense relabelling of sites
    order = np.argsort(keys)
    label = np.empty(keys.shape[0], np.int64)
    cur = -1
    last = keys[order[0]] - 1
    for idx in order:
        if keys[idx] != last:
            cur += 1
            last = keys[idx]
        label[idx] = cur
    local = np.zeros(cur + 1)
    I_before = 0.0
    seg = 0
    seg_start = 0.0
    total = 0.0
    for s in range(n_steps + 1):
        t = s * dt
        while seg < holds.shape[0] - 1 and t > seg_start + holds[seg]:
            a = local[label[seg]]
            h = holds[seg]
            I_before += (a + h) * (a + h) - a * a
            local[label[seg]] = a + h
            seg_start += h
            seg += 1
        a = local[label[seg]]
        u = t - seg_start
        I_t = I_before + (a + u) * (a + u) - a * a
        w = 0.5 if (s == 0 or s == n_steps) else 1.0
        total += w * math.exp(-g * I_t - nu * t)
    return total * dt


@numba.njit(cache=True)
def _batch_lattice(seed, n_paths, T, rate, disp, cdf, g_values, out_I, out_w):
    _seed(seed)
    times = np.empty(_MAX_JUMPS, np.float64)
    pos = np.empty((_MAX_JUMPS, disp.shape[1]), np.int64)
    for p in range(n_paths):
        c = _sim_lattice(T, rate, disp, cdf, times, pos)
        if c < 0:
            return -1
        keys = _keys_lattice(pos, c)
        holds = _intervals(times, c, T)
        I = _sum_sq_local(keys, holds)
        out_I[p] = I
        for q in range(g_values.shape[0]):
            out_w[p, q] = math.exp(-g_values[q] * I)
    return 0


@numba.njit(cache=True)
def _batch_graph(seed, n_paths, T, start, rates, cdf, g_values, out_I, out_w):
    _seed(seed)
    times = np.empty(_MAX_JUMPS, np.float64)
    pos = np.empty(_MAX_JUMPS, np.int64)
    for p in range(n_paths):
        c = _sim_graph(T, start, rates, cdf, times, pos)
        if c < 0:
            return -1
        keys = pos[: c + 1].copy()
        holds = _intervals(times, c, T)
        I = _sum_sq_local(keys, holds)
        out_I[p] = I
        for q in range(g_values.shape[0]):
            out_w[p, q] = math.exp(-g_values[q] * I)
    return 0


@numba.njit(cache=True)
def _batch_chi_lattice(seed, n_paths, T_max, dt, rate, disp, cdf, g, nu, out):
    _seed(seed)
    times = np.empty(_MAX_JUMPS, np.float64)
    pos = np.empty((_MAX_JUMPS, disp.shape[1]), np.int64)
    for p in range(n_paths):
        c = _sim_lattice(T_max, rate, disp, cdf, times, pos)
        if c < 0:
            return -1
        keys = _keys_lattice(pos, c)
        holds = _intervals(times, c, T_max)
        out[p] = _grid_integral(keys, holds, T_max, dt, g, nu)
    return 0


@numba.njit(cache=True)
def _batch_chi_graph(seed, n_paths, T_max, dt, start, rates, cdf, g, nu, out):
    _seed(seed)
    times = np.empty(_MAX_JUMPS, np.float64)
    pos = np.empty(_MAX_JUMPS, np.int64)
    for p in range(n_paths):
        c = _sim_graph(T_max, start, rates, cdf, times, pos)
        if c < 0:
            return -1
        keys = pos[: c + 1].copy()
        holds = _intervals(times, c, T_max)
        out[p] = _grid_integral(keys, holds, T_max, dt, g, nu)
    return 0


# --------------------------------------------------------------------------- trajectories


@dataclass
class CTWalkTrajectory:
    jump_times: np.ndarray  # (J,)
    positions: np.ndarray  # (J+1, d) for lattice walks, (J+1,) site labels for graphs
    T: float

    @property
    def n_jumps(self) -> int:
        return len(self.jump_times)

    def holding_times(self) -> np.ndarray:
        edges = np.concatenate([[0.0], self.jump_times, [self.T]])
        return np.diff(edges)

    def site_keys(self) -> list:
        if self.positions.ndim == 1:
            return [int(p) for p in self.positions]
        return [tuple(int(c) for c in p) for p in self.positions]

    def local_times(self) -> dict:
        out: dict = {}
        for key, h in zip(self.site_keys(), self.holding_times()):
            out[key] = out.get(key, 0.0) + float(h)
        return out


def _default_generator(generator, d):
    if generator is None:
        return LatticeGenerator.nearest_neighbour(d)
    return generator


def _draw_seed(rng) -> int:
    return int(as_generator(rng).integers(0, 2 ** 32 - 1))


def _buffers(generator):
    times = np.empty(_MAX_JUMPS, np.float64)
    if isinstance(generator, GraphGenerator):
        return times, np.empty(_MAX_JUMPS, np.int64)
    return times, np.empty((_MAX_JUMPS, generator.d), np.int64)


def simulate_ct_walk(generator, T: float, rng, start: int = 0) -> CTWalkTrajectory:
    """One trajectory up to horizon ``T``; graph walks start at site ``start``."""
    if T <= 0:
        raise ConfigurationError("horizon T must be positive")
    times, pos = _buffers(generator)
    _seed(_draw_seed(rng))
    if isinstance(generator, GraphGenerator):
        rates, cdf = generator.tables()
        c = _sim_graph(float(T), int(start), rates, cdf, times, pos)
    else:
        c = _sim_lattice(float(T), generator.rate, generator.displacements, generator.cdf, times, pos)
    if c < 0:
        raise ConfigurationError("trajectory exceeded the jump buffer; reduce T")
    return CTWalkTrajectory(times[:c].copy(), pos[: c + 1].copy(), float(T))


def self_intersection_local_time(w: CTWalkTrajectory) -> float:
    """I(T) as the sum over sites of squared occupation times."""
    return float(sum(v * v for v in w.local_times().values()))


def self_intersection_bruteforce(w: CTWalkTrajectory) -> float:
    """Double integral over pairs of holding intervals spent at the same site."""
    keys = w.site_keys()
    h = w.holding_times()
    total = 0.0
    for i in range(len(keys)):
        for j in range(len(keys)):
            if keys[i] == keys[j]:
                total += h[i] * h[j]
    return total


# --------------------------------------------------------------------------- estimators


@dataclass
class WsawEstimate:
    g: float
    T: float
    n_samples: int
    mean: float
    stderr: float


def _batches(n_samples: int, batch: int):
    b = 0
    done = 0
    while done < n_samples:
        size = min(batch, n_samples - done)
        yield b, size
        done += size
        b += 1


def sample_local_time(T: float, n_samples: int, seed: int, generator=None, d: int = 1,
                      g_values=(), start: int = 0, batch: int = 100_000):
    """I(T) for ``n_samples`` independent paths, plus exp(-g I) for each g on the same paths."""
    gen = _default_generator(generator, d)
    g_arr = np.asarray(g_values, dtype=float).reshape(-1)
    I_all = np.empty(n_samples)
    w_all = np.empty((n_samples, g_arr.size))
    for b, size in _batches(n_samples, batch):
        s = int(stream(seed, b, purpose=3).integers(0, 2 ** 32 - 1))
        out_I = np.empty(size)
        out_w = np.empty((size, g_arr.size))
        if isinstance(gen, GraphGenerator):
            rates, cdf = gen.tables()
            rc = _batch_graph(s, size, float(T), int(start), rates, cdf, g_arr, out_I, out_w)
        else:
            rc = _batch_lattice(s, size, float(T), gen.rate, gen.displacements, gen.cdf, g_arr, out_I, out_w)
        if rc < 0:
            raise ConfigurationError("trajectory exceeded the jump buffer; reduce T")
        lo = b * batch
        I_all[lo:lo + size] = out_I
        w_all[lo:lo + size] = out_w
    return I_all, w_all


def estimate_c(g, T: float, n_samples: int, seed: int = 0, generator=None, d: int = 1):
    """Monte Carlo estimate of c_{T,g} = E exp(-g I(T)).

    ``g`` may be a sequence, in which case all values share the same paths and
    a list of estimates is returned.
    """
    scalar = np.ndim(g) == 0
    g_arr = np.atleast_1d(np.asarray(g, dtype=float))
    if np.any(g_arr < 0):
        raise ConfigurationError("g must be nonnegative")
    _, w = sample_local_time(T, n_samples, seed, generator, d, g_arr)
    out = []
    for q, gv in enumerate(g_arr):
        col = w[:, q]
        err = float(col.std(ddof=1) / math.sqrt(n_samples)) if n_samples > 1 else 0.0
        out.append(WsawEstimate(float(gv), float(T), n_samples, float(col.mean()), err))
    return out[0] if scalar else out


@dataclass
class ChiEstimate:
    g: float
    nu: float
    chi: float
    stderr: float
    tail_bound: float
    T_max: float
    dt: float
    n_samples: int


def estimate_chi(g: float, nu: float, T_max: float, dt: float, n_samples: int, seed: int = 0,
                 generator=None, d: int = 1, start: int = 0, batch: int = 20_000) -> ChiEstimate:
    """chi(g, nu) by trapezoid quadrature of exp(-g I(T) - nu T) over [0, T_max]."""
    if nu <= 0:
        raise UnsupportedRegime("only nu > 0 is supported")
    if g < 0:
        raise ConfigurationError("g must be nonnegative")
    if abs(T_max / dt - round(T_max / dt)) > 1e-9:
        raise ConfigurationError("T_max must be a multiple of dt")
    gen = _default_generator(generator, d)
    vals = np.empty(n_samples)
    for b, size in _batches(n_samples, batch):
        s = int(stream(seed, b, purpose=4).integers(0, 2 ** 32 - 1))
        out = np.empty(size)
        if isinstance(gen, GraphGenerator):
            rates, cdf = gen.tables()
            rc = _batch_chi_graph(s, size, float(T_max), float(dt), int(start), rates, cdf, float(g), float(nu), out)
        else:
            rc = _batch_chi_lattice(s, size, float(T_max), float(dt), gen.rate, gen.displacements,
                                    gen.cdf, float(g), float(nu), out)
        if rc < 0:
            raise ConfigurationError("trajectory exceeded the jump buffer; reduce T_max")
        vals[b * batch:b * batch + size] = out
    err = float(vals.std(ddof=1) / math.sqrt(n_samples)) if n_samples > 1 else 0.0
    return ChiEstimate(float(g), float(nu), float(vals.mean()), err, math.exp(-nu * T_max) / nu,
                       float(T_max), float(dt), n_samples)


def one_jump_bounds(g: float, T: float, d: int = 1) -> tuple[float, float]:
    """Bounds on c_{T,g} from conditioning on zero or one jump (nearest-neighbour walk).

    Paths with two or more jumps contribute a weight between exp(-g T^2) and 1.
    """
    from scipy.integrate import quad

    rate = 2.0 * d
    p0 = math.exp(-rate * T)
    one, _ = quad(lambda s: math.exp(-g * (s * s + (T - s) ** 2)), 0.0, T, epsabs=1e-14, epsrel=1e-12)
    j1 = rate * math.exp(-rate * T) * one
    p_rest = 1.0 - p0 - rate * T * math.exp(-rate * T)
    base = p0 * math.exp(-g * T * T) + j1
    return base + p_rest * math.exp(-g * T * T), base + p_rest
