import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from walkrg.errors import ConfigurationError, ScaleMismatchError, ScaleOverflowError
from walkrg.lattice import (
    Block, LatticeField, Polymer, TorusLattice, all_polymers, block_distance, closure,
    connected_components, fractional_kernel, fractional_laplacian_apply, fractional_laplacian_matrix,
    laplacian_apply, laplacian_eigenvalues, laplacian_matrix,
)


def test_site_count_and_neighbours():
    t = TorusLattice(2, 2, 2)
    assert t.n_sites == 16
    assert len(set(t.neighbours(0))) == 4


def test_bad_torus():
    with pytest.raises(ConfigurationError):
        TorusLattice(1, 1, 3)
    with pytest.raises(ConfigurationError):
        TorusLattice(1, 2, 1)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 3), st.integers(2, 3), st.integers(1, 2), st.integers(0, 10_000))
def test_laplacian_matches_matrix(d, L, N, seed):
    if L ** N < 3 or (L ** N) ** d > 729:
        return
    t = TorusLattice(d, L, N)
    f = np.random.default_rng(seed).normal(size=t.n_sites)
    out = laplacian_apply(LatticeField(t, f)).values
    assert np.allclose(out, laplacian_matrix(t) @ f)


def test_spectrum_is_nonpositive_with_zero_mode():
    ev = laplacian_eigenvalues(TorusLattice(2, 2, 2))
    assert np.isclose(ev.max(), 0) or np.isclose(ev.min(), 0)


def test_fractional_alpha_two_is_laplacian():
    t = TorusLattice(1, 2, 3)
    assert np.allclose(fractional_laplacian_matrix(t, 2.0), -laplacian_matrix(t))


def test_fractional_kernel_rows_sum_to_zero():
    K = fractional_kernel(2, 8, 0.8)
    assert abs(K.sum()) < 1e-12
    off = K.reshape(-1)[1:]
    assert np.all(off <= 1e-15)


def test_fractional_composition():
    t = TorusLattice(1, 2, 3)
    A = fractional_laplacian_matrix(t, 0.6)
    B = fractional_laplacian_matrix(t, 1.2)
    assert np.allclose(A @ A, B)


def test_blocks_tile_the_torus():
    t = TorusLattice(2, 2, 3)
    for j in range(4):
        sites = np.concatenate([t.block_sites(b) for b in t.blocks(j)])
        assert sorted(sites.tolist()) == list(range(t.n_sites))


def test_adjacent_blocks_touch():
    t = TorusLattice(1, 2, 3)
    b = t.blocks(0)
    assert block_distance(t, b[0], b[1]) == 0
    assert block_distance(t, b[0], b[2]) == 1
    assert block_distance(t, b[0], b[7]) == 0  # periodic wrap


def test_components_and_closure():
    t = TorusLattice(1, 2, 3)
    b = t.blocks(0)
    X = Polymer(0, {b[0], b[1], b[4]})
    assert len(connected_components(t, X)) == 2
    assert closure(t, X) == Polymer(1, {t.parent(b[0]), t.parent(b[4])})
    with pytest.raises(ScaleOverflowError):
        closure(t, Polymer(3, set(t.blocks(3))))


def test_polymer_scale_mismatch():
    t = TorusLattice(1, 2, 2)
    with pytest.raises(ScaleMismatchError):
        Polymer(0, {t.blocks(1)[0]})


def test_polymer_count():
    t = TorusLattice(1, 2, 2)
    assert len(all_polymers(t, 0)) == 16
