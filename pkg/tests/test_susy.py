import itertools
import math

import numpy as np
import pytest

from walkrg.errors import ConfigurationError, QuadratureError, UnsupportedValueError
from walkrg.susy import (
    GrassmannAlgebraElement as G, PolarGrid, berezin_integrate, calibrate, evaluate_intrep, exp_minus,
    normalization, psi_index, psibar_index, single_site_chi, smooth_function_of_form, tau, wedge,
)
from walkrg.wsaw import GraphGenerator, estimate_chi, path_graph_laplacian


def gen(M, i):
    return G.generator(M, i)


def test_nilpotent_and_anticommuting():
    p, pb = gen(1, psi_index(0)), gen(1, psibar_index(0))
    assert not wedge(p, p).terms
    assert wedge(p, pb).allclose(-wedge(pb, p))


def test_graded_commutativity_exhaustive():
    M = 2
    monos = [m for k in range(2 * M + 1) for m in itertools.combinations(range(2 * M), k)]
    for a, b in itertools.product(monos, repeat=2):
        A, B = G(M, {a: 1.0}), G(M, {b: 1.0})
        sign = (-1) ** (len(a) * len(b))
        assert wedge(A, B).allclose(wedge(B, A).scale(sign))


def test_even_pairs_commute():
    M = 2
    e1 = wedge(gen(M, psi_index(0)), gen(M, psibar_index(0)))
    e2 = wedge(gen(M, psi_index(1)), gen(M, psibar_index(1)))
    assert wedge(e1, e2).allclose(wedge(e2, e1))


def test_exp_of_tau_single_site():
    phi = np.array([0.3 + 0.4j])
    f = smooth_function_of_form(exp_minus, tau(1, 0, phi))
    w = math.exp(-0.25)
    assert f.body == pytest.approx(w)
    assert f.coefficient((0, 1)) == pytest.approx(-w)


def test_function_of_bosonic_form():
    t = G.scalar(2, 0.7)
    assert smooth_function_of_form(exp_minus, t).allclose(G.scalar(2, math.exp(-0.7)))
    assert smooth_function_of_form([lambda x: 1.0, lambda x: 0.0, lambda x: 0.0], tau(2, 0, np.ones(2))).allclose(G.scalar(2, 1.0))


def test_odd_form_rejected():
    with pytest.raises(UnsupportedValueError):
        smooth_function_of_form(exp_minus, gen(1, 0))


def test_mismatched_sites():
    with pytest.raises(ConfigurationError):
        wedge(gen(1, 0), gen(2, 0))


def test_low_degree_integrates_to_zero():
    grid = PolarGrid(2, 6.0, 8, 8)
    assert berezin_integrate(lambda phi: gen(2, 0).scale(np.exp(-np.abs(phi[0]) ** 2)), grid, 0.0, 1.0) == 0


def test_calibration():
    assert calibrate(1) == pytest.approx(1.0, abs=1e-10)
    assert calibrate(2) == pytest.approx(1.0, abs=1e-10)


def test_tail_check():
    with pytest.raises(QuadratureError):
        berezin_integrate(lambda phi: tau(1, 0, phi), PolarGrid(1, 0.5), 0.0, 1.0)


@pytest.mark.parametrize("g,nu", [(0.5, 0.5), (1.0, 1.0), (2.0, 0.3)])
def test_normalization(g, nu):
    assert normalization(1, g, nu) == pytest.approx(1.0, abs=1e-4)
    assert normalization(2, g, nu, -path_graph_laplacian(2)) == pytest.approx(1.0, abs=1e-4)


def test_single_site_intrep():
    assert evaluate_intrep(None, 1.0, 1.0, M=1).chi == pytest.approx(single_site_chi(1.0, 1.0), abs=1e-4)


def test_gaussian_intrep():
    D = -path_graph_laplacian(2)
    ref = np.linalg.inv(D + 0.8 * np.eye(2))[0].sum()
    assert evaluate_intrep(D, 0.0, 0.8).chi == pytest.approx(ref, abs=1e-4)


def test_two_site_walk_oracle():
    D = -path_graph_laplacian(2)
    form = evaluate_intrep(D, 1.0, 1.0).chi
    est = estimate_chi(1.0, 1.0, 16.0, 0.01, 100_000, seed=4,
                       generator=GraphGenerator.from_laplacian(path_graph_laplacian(2)))
    assert abs(form - est.chi) <= 4 * est.stderr + 1e-3
