"""Exact enumeration of self-avoiding walks on Z^d."""
from __future__ import annotations

import csv
import io
import itertools
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources

import numba
import numpy as np

from .errors import ConfigurationError


@dataclass
class EnumerationResult:
    d: int
    n_max: int
    counts: list[int]  # counts[n - 1] == c_n
    seconds: list[float] = field(default_factory=list)
    complete: bool = True

    @property
    def high_water(self) -> int:
        return len(self.counts)

    def c(self, n: int) -> int:
        return self.counts[n - 1]

    def to_csv(self, timing: bool = True) -> str:
        """CSV table; ``timing=False`` drops the wall-clock column so reruns are byte-identical."""
        est = connective_estimates(self)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "c_n", "ratio", "nth_root"] + (["seconds"] if timing else []))
        for n, c in enumerate(self.counts, start=1):
            row = [n, str(c), _fmt(est.ratio[n - 1]), _fmt(est.root[n - 1])]
            if timing:
                row.append(_fmt(self.seconds[n - 1] if n - 1 < len(self.seconds) else float("nan")))
            w.writerow(row)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, d: int) -> "EnumerationResult":
        rows = list(csv.DictReader(io.StringIO(text)))
        counts = [int(r["c_n"]) for r in rows]
        for i, r in enumerate(rows, start=1):
            if int(r["n"]) != i:
                raise ConfigurationError("CSV rows must list n = 1, 2, ... in order")
        seconds = [float(r["seconds"]) for r in rows if "seconds" in r and r["seconds"]]
        return cls(d=d, n_max=len(counts), counts=counts, seconds=seconds)


def _fmt(x: float) -> str:
    return "" if x is None or math.isnan(x) else repr(float(x))


def reference_table() -> EnumerationResult:
    """Published d = 3 counts for n <= 36, shipped as package data."""
    text = resources.files("walkrg").joinpath("data/saw_counts_d3.csv").read_text()
    rows = list(csv.DictReader(io.StringIO(text)))
    counts = [int(r["c_n"]) for r in rows]
    return EnumerationResult(d=3, n_max=len(counts), counts=counts)


# --------------------------------------------------------------------------- search


@numba.njit(cache=True)
def _dfs(occ, start, offsets, prefix, n_max, counts):
    """Count all SAW extensions of a fixed step prefix, up to length ``n_max``."""
    nd = offsets.shape[0]
    sites = np.empty(n_max + 1, np.int64)
    nxt = np.empty(n_max + 1, np.int64)
    site = start
    sites[0] = site
    occ[site] = 1
    base = 0
    ok = True
    for i in range(prefix.shape[0]):
        if i + 1 > n_max:
            break
        site = site + offsets[prefix[i]]
        if occ[site]:
            ok = False
            break
        occ[site] = 1
        base = i + 1
        sites[base] = site
        counts[base] += 1
    if ok and base == prefix.shape[0]:
        depth = base
        nxt[depth] = 0
        while depth >= base:
            k = nxt[depth]
            if depth == n_max or k == nd:
                if depth > base:
                    occ[sites[depth]] = 0
                depth -= 1
                continue
            nxt[depth] = k + 1
            s = sites[depth] + offsets[k]
            if occ[s] == 0:
                depth += 1
                sites[depth] = s
                occ[s] = 1
                counts[depth] += 1
                nxt[depth] = 0
    for i in range(base + 1):
        occ[sites[i]] = 0


def _geometry(d: int, n: int):
    side = 2 * n + 1
    strides = np.array([side ** i for i in range(d)], dtype=np.int64)
    offsets = np.empty(2 * d, dtype=np.int64)
    for i in range(d):
        offsets[2 * i] = strides[i]
        offsets[2 * i + 1] = -strides[i]
    start = int(n * strides.sum())
    return side ** d, start, offsets


def _count_prefix(args) -> np.ndarray:
    d, n, prefix = args
    size, start, offsets = _geometry(d, n)
    occ = np.zeros(size, dtype=np.uint8)
    counts = np.zeros(n + 1, dtype=np.int64)
    _dfs(occ, start, offsets, np.asarray(prefix, dtype=np.int64), n, counts)
    return counts


def _prefixes(d: int, n: int, reduced: bool):
    if not reduced:
        return [(k,) for k in range(2 * d)], 1
    if n < 2:
        return [(0,)], 2 * d
    # first step fixed to +e_1; branches are the non-reversing second steps
    return [(0, k) for k in range(2 * d) if k != 1], 2 * d


def _enumerate_depth(d: int, n: int, reduced: bool, workers: int) -> list[int]:
    prefixes, mult = _prefixes(d, n, reduced)
    jobs = [(d, n, p) for p in prefixes]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_count_prefix, jobs))
    else:
        parts = [_count_prefix(j) for j in jobs]
    total = [0] * (n + 1)
    for part in parts:
        for i, v in enumerate(part.tolist()):
            total[i] += int(v)
    if reduced and n >= 2:
        # the second-step prefixes all share the single first step
        total[1] = 1
    return [c * mult for c in total[1:]]


def count_saw(
    d: int,
    n_max: int,
    *,
    budget_seconds: float | None = None,
    workers: int = 1,
    reduced: bool = True,
) -> EnumerationResult:
    """Exact counts c_1..c_{n_max} by depth-first backtracking.

    With ``budget_seconds`` the search deepens one length at a time and stops
    before a depth whose predicted cost would exceed the remaining budget; the
    result is then marked incomplete and ``high_water`` names the last exact n.
    """
    if d < 1:
        raise ConfigurationError("dimension must be >= 1")
    if n_max < 1:
        raise ConfigurationError("n_max must be >= 1")
    if budget_seconds is None:
        t0 = time.perf_counter()
        counts = _enumerate_depth(d, n_max, reduced, workers)
        elapsed = time.perf_counter() - t0
        return EnumerationResult(d, n_max, counts, [float("nan")] * (n_max - 1) + [elapsed])

    counts: list[int] = []
    seconds: list[float] = []
    start = time.perf_counter()
    for n in range(1, n_max + 1):
        used = time.perf_counter() - start
        if seconds and n > 2:
            growth = counts[-1] / max(counts[-2], 1)
            if used + seconds[-1] * growth > budget_seconds:
                return EnumerationResult(d, n_max, counts, seconds, complete=False)
        t0 = time.perf_counter()
        counts = _enumerate_depth(d, n, reduced, workers)
        seconds.append(time.perf_counter() - t0)
    return EnumerationResult(d, n_max, counts, seconds)


def count_saw_bruteforce(d: int, n: int) -> int:
    """Filter all (2d)^n step sequences; independent oracle for small n."""
    steps = []
    for axis in range(d):
        for sign in (1, -1):
            e = [0] * d
            e[axis] = sign
            steps.append(tuple(e))
    total = 0
    for seq in itertools.product(steps, repeat=n):
        pos = (0,) * d
        seen = {pos}
        ok = True
        for s in seq:
            pos = tuple(a + b for a, b in zip(pos, s))
            if pos in seen:
                ok = False
                break
            seen.add(pos)
        total += ok
    return total


# --------------------------------------------------------------------------- diagnostics


@dataclass
class ConnectiveEstimates:
    root: list[float]  # c_n^{1/n}
    ratio: list[float]  # c_n / c_{n-1}; nan at n = 1


def connective_estimates(r: EnumerationResult) -> ConnectiveEstimates:
    root = [math.exp(math.log(c) / n) for n, c in enumerate(r.counts, start=1)]
    ratio = [float("nan")] + [r.counts[i] / r.counts[i - 1] for i in range(1, len(r.counts))]
    return ConnectiveEstimates(root, ratio)


def submultiplicativity_violations(r: EnumerationResult) -> list[tuple[int, int]]:
    """Pairs (n, m) with n + m <= high water and c_{n+m} > c_n c_m."""
    bad = []
    top = r.high_water
    for n in range(1, top):
        for m in range(n, top - n + 1):
            if r.c(n + m) > r.c(n) * r.c(m):
                bad.append((n, m))
    return bad


@dataclass
class BoundRow:
    n: int
    c_n: int
    lower_ok: bool
    upper_ok: bool


def check_bounds(r: EnumerationResult, mu: float, B: float) -> list[BoundRow]:
    """Compare each count with ``mu^n <= c_n <= mu^n exp(B sqrt(n))`` (diagnostic only)."""
    if mu <= 0:
        raise ConfigurationError("mu must be positive")
    if B <= math.pi * math.sqrt(2.0 / 3.0):
        raise ConfigurationError("B must exceed pi*sqrt(2/3)")
    rows = []
    for n, c in enumerate(r.counts, start=1):
        log_c = math.log(c)
        lower = n * math.log(mu)
        rows.append(BoundRow(n, c, lower <= log_c, log_c <= lower + B * math.sqrt(n)))
    return rows
