import numpy as np
import pytest

from walkrg.errors import ComplexityError, ConfigurationError, DifferentiationError, UnsupportedRegime
from walkrg.lattice import TorusLattice
from walkrg.phi4 import (
    QuadratureSpec, chi_direct, chi_gaussian, chi_via_ZN, single_site_chi, site_operator,
)

TWO = (1, 2)


def test_site_operator_two_sites():
    assert np.allclose(site_operator(TWO), [[2, -2], [-2, 2]])
    with pytest.raises(ComplexityError):
        site_operator(TorusLattice(1, 2, 3))


def test_single_site_gaussian():
    assert chi_direct((1, 1), 0.0, 1.0).chi == pytest.approx(1.0, abs=1e-9)
    assert chi_direct((1, 1), 0.0, 1.0, n=2).chi == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("n", [1, 2])
def test_single_site_quartic(n):
    ref = single_site_chi(0.7, 0.4, n)
    assert chi_direct((1, 1), 0.7, 0.4, n=n, quad=QuadratureSpec(rtol=1e-10)).chi == pytest.approx(ref, abs=1e-8)


@pytest.mark.parametrize("shape", [(1, 2), (1, 3)])
def test_gaussian_closed_form(shape):
    assert chi_direct(shape, 0.0, 0.7).chi == pytest.approx(chi_gaussian(shape, 0.7), abs=1e-8)


def test_gaussian_closed_form_four_sites():
    # the 2x2 torus cannot afford the 128-node confirmation pass; the 64-node value is still exact
    r = chi_direct((2, 2), 0.0, 3.0, quad=QuadratureSpec(rtol=1e-4))
    assert r.chi == pytest.approx(chi_gaussian((2, 2), 3.0), abs=1e-8)


def test_two_component_gaussian_two_sites():
    assert chi_direct(TWO, 0.0, 0.7, n=2).chi == pytest.approx(chi_gaussian(TWO, 0.7), abs=1e-8)


def test_zn_route_core_example():
    direct = chi_direct(TWO, 0.5, 0.7).chi
    assert chi_via_ZN(TWO, 0.5, 0.3, 0.4).chi == pytest.approx(direct, abs=1e-6)


def test_split_invariance():
    a = chi_via_ZN(TWO, 0.5, 0.3, 0.4).chi
    b = chi_via_ZN(TWO, 0.5, 0.5, 0.2).chi
    assert a == pytest.approx(b, abs=1e-6)


def test_zn_gaussian():
    assert chi_via_ZN(TWO, 0.0, 0.3, 0.4).chi == pytest.approx(chi_gaussian(TWO, 0.7), abs=1e-6)


def test_automorphism_symmetry():
    # relabel the 2x2 torus by a rotation and by a translation; χ from site 0 must not move
    from walkrg.phi4 import _tensor_sums, cutoff_radius

    A = site_operator((2, 2))
    x, _ = QuadratureSpec().grid(cutoff_radius(0.5, 0.6), 32)
    Z, S = _tensor_sums(A, 0.5, 0.6, x)
    for perm in ([0, 2, 1, 3], [1, 0, 3, 2]):
        Ap = A[np.ix_(perm, perm)]
        Zp, Sp = _tensor_sums(Ap, 0.5, 0.6, x)
        assert Sp / Zp == pytest.approx(S / Z, abs=1e-10)


def test_decreasing_in_nu():
    vals = [chi_direct(TWO, 0.5, nu).chi for nu in (0.4, 0.5, 0.6)]
    assert vals[0] > vals[1] > vals[2]


def test_refinement_converged():
    r = chi_direct(TWO, 0.5, 0.7, quad=QuadratureSpec(rtol=1e-9))
    assert r.error < 1e-8


def test_errors():
    with pytest.raises(UnsupportedRegime):
        chi_direct(TWO, 0.0, -1.0)
    with pytest.raises(ConfigurationError):
        chi_via_ZN(TWO, 0.5, 0.3, 0.0)
    with pytest.raises(ConfigurationError):
        chi_direct(TWO, 0.5, 0.3, n=3)
    with pytest.raises(DifferentiationError):
        chi_via_ZN(TWO, 0.5, 0.3, 0.4, h=1.0, max_step_sensitivity=1e-12)
