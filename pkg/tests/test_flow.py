import math

import numpy as np
import pytest

from walkrg.errors import BracketingError, ConfigurationError, FitError
from walkrg.flow import (
    FlowParams, FlowState, classify, extract_gamma, find_fixed_points, mass_scale, n_factor,
    phase_portrait, portrait_csv, run_flow, s_bar, sensitivity, shoot_critical_mu0, step_flow,
)

P = FlowParams(2, 0.1, 0.55, 1)


def test_mass_scale():
    assert mass_scale(1.0, 0.55, 2) == 0
    assert mass_scale(1 / 8, 1.0, 2) == 3
    js = [mass_scale(2.0 ** (-k / 3), 0.7, 2) for k in range(40)]
    assert js == sorted(js)
    for k in range(1, 18):
        m2 = 2.0 ** (-0.55 * k)
        j = mass_scale(m2, 0.55, 2)
        assert j == k
    with pytest.raises(ConfigurationError):
        mass_scale(0.0, 1.0, 2)


def test_gaussian_line():
    st = step_flow(FlowState.start(0.0, 0.3, P), 1.0)
    assert st.s == 0.0 and st.mu == pytest.approx(2 ** 0.55 * 0.3)


def test_fixed_point_residual():
    for eps in (0.05, 0.1, 0.3):
        p = FlowParams(2, eps, 0.55)
        sb = s_bar(eps, 1.3, 2)
        st = step_flow(FlowState.start(sb, 0.0, p), 1.3)
        assert abs(st.s - sb) <= 1e-14
    assert s_bar(0.1, 1.0, 2) == pytest.approx(0.066967, abs=1e-6)


def test_fixed_points():
    fps = find_fixed_points(0.1, 1.0, 2)
    assert fps[0].multiplier == pytest.approx(2 ** 0.1) and not fps[0].stable
    assert fps[1].multiplier == pytest.approx(2 - 2 ** 0.1)
    assert fps[1].stable
    assert len(find_fixed_points(0.1, 0.0, 2)) == 1
    assert find_fixed_points(0.0, 1.0, 2)[0].s == 0.0 and len(find_fixed_points(0.0, 1.0, 2)) == 1


def test_triangular_and_monotone():
    beta = 1.0
    a = run_flow(FlowState.start(0.05, -0.01, P), beta, 20).table()
    b = run_flow(FlowState.start(0.05, 0.02, P), beta, 20).table()
    assert np.array_equal(a[:, 1], b[:, 1])
    mus = [run_flow(FlowState.start(0.05, m, P), beta, 20).final.mu for m in np.linspace(-0.1, 0.1, 9)]
    assert np.all(np.diff(mus) > 0)


def test_critical_mu0_trivial_cases():
    p = FlowParams(2, 0.1, 0.55, 1, 2.0 ** (-0.55 * 10))
    assert shoot_critical_mu0(p, 0.0, 0.05, 12) == 0.0
    assert abs(shoot_critical_mu0(p, 1.0, s_bar(0.1, 1.0, 2), 12)) < 1e-15


def test_bracketing_failure_has_diagnostics():
    p = FlowParams(2, 0.1, 0.55, 1, None)
    with pytest.raises(BracketingError) as err:
        shoot_critical_mu0(p, 1e6, 0.5, 5)
    assert "low" in err.value.diagnostics


def test_sensitivity_matches_finite_difference():
    m2 = 2.0 ** (-0.55 * 8)
    p = FlowParams(2, 0.1, 0.55, 1, m2)
    s0, N = 0.03, 10
    mu0 = shoot_critical_mu0(p, 1.0, s0, N)
    traj = run_flow(FlowState.start(s0, mu0, p), 1.0, N)
    h = 1e-6
    up = run_flow(FlowState.start(s0, mu0 + h, p), 1.0, N).final.mu
    dn = run_flow(FlowState.start(s0, mu0 - h, p), 1.0, N).final.mu
    assert traj.final.dmu == pytest.approx((up - dn) / (2 * h), rel=1e-6)


def test_mu0_stable_with_table():
    from walkrg.gaussian import beta_table

    m2 = 2.0 ** (-0.55 * 10)
    p = FlowParams(2, 0.1, 0.55, 1, m2)
    beta = np.concatenate([beta_table(1, 2, 14, 0.55, m2), np.zeros(4)])
    a = shoot_critical_mu0(p, beta, 0.05, 12)
    b = shoot_critical_mu0(p, beta, 0.05, 14)
    assert math.isfinite(a) and abs(a - b) <= 1e-6 * max(1.0, abs(a))


@pytest.mark.parametrize("n,eps", [(1, 0.1), (0, 0.1), (2, 0.05)])
def test_gamma_first_order(n, eps):
    fit = extract_gamma(eps, 0.55, n, 2)
    assert abs(fit.gamma - (1 + n_factor(n) * eps / 0.55)) <= 0.02
    assert fit.residual < 0.05


def test_gamma_sweep_to_gaussian():
    gs = [extract_gamma(e, 0.55, 1, 2).gamma for e in (0.2, 0.1, 0.05, 0.0)]
    assert gs == sorted(gs, reverse=True)
    assert gs[-1] == pytest.approx(1.0, abs=1e-9)


def test_nu_N_bounded():
    fit = extract_gamma(0.1, 0.55, 1, 2)
    ratios = [abs(r[3]) / (r[0] * 0.1) for r in fit.rows]
    assert max(ratios) < 10


def test_grid_and_source_checks():
    with pytest.raises(ConfigurationError):
        extract_gamma(0.1, 0.55, 1, 2, m2_grid=[0.1, 0.05])
    with pytest.raises(ConfigurationError):
        extract_gamma(0.2, 0.55, 1, 2, "table")
    with pytest.raises(ConfigurationError):
        extract_gamma(0.1, 0.55, 1, 2, "other")


def test_phase_portrait_labels():
    sb = s_bar(0.1, 1.0, 2)
    rows = phase_portrait(0.1, 1.0, 2, 0.55, 1, [(sb, 0.0), (0.0, 0.01), (0.0, -0.01), (0.02, 0.0)], 300)
    assert [r.label for r in rows] == ["converging", "mu-diverging-up", "mu-diverging-down", "converging"]
    s = rows[3].trajectory[:, 1]
    assert np.all(np.diff(s) >= 0)
    fixed = rows[0].trajectory
    assert np.allclose(fixed[:, 1], sb, atol=1e-14) and np.all(fixed[:, 2] == 0)
    text = portrait_csv(rows)
    assert text.splitlines()[0] == "trajectory,s0,mu0,label,j,s,mu"
