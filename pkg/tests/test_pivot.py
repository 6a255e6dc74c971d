import itertools

import numba
import numpy as np
import pytest
from scipy.stats import chisquare

from walkrg.errors import ConfigurationError, MixingFailure
from walkrg.pivot import (
    PivotState, _try_pivot, apply_group, batch_means, estimate_nu, group_elements, is_self_avoiding,
    pivot_step, run_chain, sample_r2, straight_rod,
)


def test_group_order():
    assert len(list(group_elements(2))) == 8
    assert len(list(group_elements(3))) == 48


def test_chain_stays_self_avoiding():
    s = PivotState.rod(40, 3, seed=5)
    run_chain(s, 2000)
    assert is_self_avoiding(s.walk)
    occ = s.occupancy()
    assert all(occ[tuple(p)] == i for i, p in enumerate(s.walk.tolist()))


def test_rejected_move_leaves_walk():
    s = PivotState(np.array([[0, 0], [1, 0], [1, 1], [0, 1]]), np.random.default_rng(0))
    before = s.walk.copy()
    # rotating the tail about step 1 by the reflection y -> -y... keep a move that collides
    ok = pivot_step(s, 2, perm=[1, 0], signs=[-1, 1])
    if not ok:
        assert np.array_equal(s.walk, before)
    assert is_self_avoiding(s.walk)


def test_bad_pivot_index():
    s = PivotState.rod(5, 2)
    with pytest.raises(ConfigurationError):
        pivot_step(s, 0, perm=[0, 1], signs=[1, 1])


def test_proposal_symmetry():
    # applying g and then g^{-1} about the same step restores the walk
    s = PivotState.rod(6, 2, seed=1)
    run_chain(s, 10)
    for perm, signs in group_elements(2):
        w = s.walk.copy()
        tail = w[3:] - w[2]
        moved = apply_group(perm, signs, tail)
        inv = np.argsort(perm)
        back = apply_group(inv, signs[inv], moved)
        assert np.array_equal(back, tail)


@numba.njit(cache=True)
def _visit(walk, keys, vals, ks, perms, signs, out):
    scratch = np.empty_like(walk)
    n = walk.shape[0] - 1
    for t in range(ks.shape[0]):
        _try_pivot(walk, keys, vals, ks[t], perms[t], signs[t], scratch)
        code = 0
        for i in range(n):
            dx = walk[i + 1, 0] - walk[i, 0]
            dy = walk[i + 1, 1] - walk[i, 1]
            step = 0 if dx == 1 else 1 if dx == -1 else 2 if dy == 1 else 3
            code = code * 4 + step
        out[t] = code


def test_uniform_on_four_step_walks():
    # pivots at 1..n-1 keep the first step, so the chain lives on the 100 / 4 walks sharing it
    s = PivotState.rod(4, 2, seed=11)
    moves = 1_000_000
    ks, perms, signs = s.random_moves(moves)
    out = np.empty(moves, np.int64)
    _visit(s.walk, s.keys, s.vals, ks, perms, signs, out)
    codes, counts = np.unique(out, return_counts=True)
    assert len(codes) == 25 and np.all(codes // 64 == 0)
    # thin to reduce autocorrelation before the chi-square test
    _, thin = np.unique(out[::10], return_counts=True)
    assert chisquare(thin).pvalue > 1e-3


def test_batch_means():
    m, e = batch_means(np.arange(1000.0))
    assert m == pytest.approx(499.5)
    with pytest.raises(ConfigurationError):
        batch_means(np.ones(10))


def test_mixing_failure_reports_diagnostics(monkeypatch):
    import walkrg.pivot as pv

    monkeypatch.setattr(pv, "run_chain", lambda state, acc, **kw: (np.zeros(0), kw.get("max_proposals", 0)))
    with pytest.raises(MixingFailure) as err:
        pv.sample_r2(10, 2, 100, 50, 0)
    assert err.value.diagnostics["n"] == 10


def test_seeded_reproducible():
    a = sample_r2(32, 2, 2000, 200, seed=3)
    b = sample_r2(32, 2, 2000, 200, seed=3)
    assert a == b


def test_nu_small_run():
    est = estimate_nu(2, [16, 32, 64], 5000, seed=0)
    assert 0.65 < est.nu < 0.85
    with pytest.raises(ConfigurationError):
        estimate_nu(2, [16, 32], 100)
