"""Heavy-tailed step distribution from the off-diagonal kernel of -(-Δ)^{α/2}."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DomainError
from .lattice import fractional_kernel


def _box_period(R: int, factor: int) -> int:
    P = 1
    while P < factor * R:
        P <<= 1
    return P


@dataclass
class LongRangeStepSampler:
    """Samples nonzero displacements x with probability proportional to -K(x), |x|_inf <= R.

    ``K`` is the kernel of the fractional Laplacian on a torus of period at
    least ``box_factor * R``; the mass outside the truncation radius is
    recorded in ``tail_mass`` and must stay below ``max_tail``.
    """

    d: int
    alpha: float
    R: int = 256
    box_factor: int = 8
    max_tail: float = 1e-3
    displacements: np.ndarray = field(init=False, repr=False)
    probabilities: np.ndarray = field(init=False, repr=False)
    tail_mass: float = field(init=False)
    min_rate: float = field(init=False)
    jump_rate: float = field(init=False)

    def __post_init__(self):
        if not 0 < self.alpha < 2:
            raise DomainError(f"alpha must lie in (0, 2), got {self.alpha}")
        if self.d not in (1, 2, 3):
            raise DomainError("long-range steps are supported for d = 1, 2, 3")
        P = _box_period(self.R, self.box_factor)
        K = fractional_kernel(self.d, P, self.alpha)
        coords = np.indices(K.shape).reshape(self.d, -1).T
        centred = np.where(coords > P // 2, coords - P, coords)
        rates = -K.reshape(-1)
        origin = np.all(centred == 0, axis=1)
        off = ~origin
        self.min_rate = float(rates[off].min())
        total = rates[off].sum()
        inside = off & (np.abs(centred).max(axis=1) <= self.R)
        self.tail_mass = float(1.0 - rates[inside].sum() / total)
        if self.tail_mass > self.max_tail:
            raise ConfigurationError(
                f"truncated tail mass {self.tail_mass:.3g} exceeds {self.max_tail:g}; increase R"
            )
        self.displacements = centred[inside]
        w = rates[inside]
        self.jump_rate = float(w.sum())
        self.probabilities = w / w.sum()
        self._cdf = np.cumsum(self.probabilities)
        self._cdf[-1] = 1.0

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        u = rng.random(1 if size is None else size)
        idx = np.searchsorted(self._cdf, u, side="right")
        out = self.displacements[idx]
        return out[0] if size is None else out

    def probability(self, x) -> float:
        x = np.asarray(x)
        hit = np.all(self.displacements == x, axis=1)
        return float(self.probabilities[hit].sum())


def sample_longrange_step(d: int, alpha: float, rng: np.random.Generator, size: int | None = None,
                          R: int = 256) -> np.ndarray:
    return LongRangeStepSampler(d, alpha, R).sample(rng, size)


def sample_longrange_saw(sampler: LongRangeStepSampler, n: int, rng: np.random.Generator,
                         max_tries: int = 100_000) -> np.ndarray | None:
    """Rejection sampler for short long-range SAWs: draw walks, keep the first self-avoiding one."""
    for _ in range(max_tries):
        steps = sampler.sample(rng, n)
        walk = np.vstack([np.zeros((1, sampler.d), dtype=np.int64), np.cumsum(steps, axis=0)])
        if len({tuple(p) for p in walk.tolist()}) == n + 1:
            return walk
    return None


def radial_tail_slope(steps: np.ndarray, r_min: float, r_max: float, n_bins: int = 12) -> float:
    """Log-log slope of the per-site step probability against Euclidean length."""
    d = steps.shape[1]
    r = np.sqrt((steps.astype(float) ** 2).sum(axis=1))
    edges = np.geomspace(r_min, r_max, n_bins + 1)
    counts, _ = np.histogram(r, bins=edges)
    # number of lattice sites per shell
    span = int(np.ceil(r_max)) + 1
    grid = np.indices((2 * span + 1,) * d).reshape(d, -1).T - span
    site_r = np.sqrt((grid.astype(float) ** 2).sum(axis=1))
    sites, _ = np.histogram(site_r, bins=edges)
    centres = np.sqrt(edges[:-1] * edges[1:])
    ok = (counts > 0) & (sites > 0)
    if ok.sum() < 3:
        raise ConfigurationError("too few populated shells for a slope fit")
    y = np.log(counts[ok] / sites[ok])
    x = np.log(centres[ok])
    return float(np.polyfit(x, y, 1)[0])
