"""Second-order RG flow of the rescaled couplings (s, μ), fixed points, and exponent extraction."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BracketingError, ConfigurationError, FitError

OVERFLOW = 1e12


def mass_scale(m2: float, alpha: float, L: int, rtol: float = 1e-12) -> int:
    """Smallest j >= 0 with L^{αj} m² >= 1.

    A relative slack ``rtol`` absorbs rounding when m² is an exact power
    L^{-αk}, so that such grids land on j_m = k.
    """
    if m2 <= 0:
        raise ConfigurationError("m^2 must be positive")
    x = math.log(1.0 / m2) / (alpha * math.log(L))
    return max(0, math.ceil(x - rtol * max(1.0, abs(x))))


def n_factor(n: float) -> float:
    """(n+2)/(n+8), the μ-flow coefficient."""
    return (n + 2) / (n + 8)


@dataclass(frozen=True)
class FlowParams:
    L: int
    eps: float
    alpha: float
    n: float = 1
    m2: float | None = None  # None: no mass freeze

    @property
    def j_m(self) -> int | None:
        return None if self.m2 is None else mass_scale(self.m2, self.alpha, self.L)


@dataclass(frozen=True)
class FlowState:
    j: int
    s: float
    mu: float
    params: FlowParams
    ds: float = 0.0   # ∂s/∂μ₀
    dmu: float = 1.0  # ∂μ/∂μ₀
    diverged: bool = False

    @classmethod
    def start(cls, s0: float, mu0: float, params: FlowParams) -> "FlowState":
        return cls(0, float(s0), float(mu0), params)


@dataclass
class FlowTrajectory:
    states: list[FlowState]
    reason: str  # completed | diverged | past mass scale

    @property
    def final(self) -> FlowState:
        return self.states[-1]

    def table(self) -> np.ndarray:
        return np.array([(st.j, st.s, st.mu) for st in self.states])


class BetaSource:
    """β_j as a constant ``a`` or as a per-scale table."""

    def __init__(self, value):
        if np.ndim(value) == 0:
            self.constant = float(value)
            self.table = None
        else:
            self.constant = None
            self.table = np.asarray(value, dtype=float)

    def __call__(self, j: int) -> float:
        if self.table is None:
            return self.constant
        if j >= len(self.table):
            raise ConfigurationError(f"β table has {len(self.table)} entries, scale {j} requested")
        return float(self.table[j])


def _as_source(beta) -> BetaSource:
    return beta if isinstance(beta, BetaSource) else BetaSource(beta)


def step_flow(state: FlowState, beta: float) -> FlowState:
    """One step of the truncated map, with the exact Jacobian in μ₀ carried along.

    s_+ = L^ε s (1 - βs),  μ_+ = L^α (1 - cβs) μ,  c = (n+2)/(n+8).
    At or past the mass scale β is replaced by 0.
    """
    p = state.params
    if p.m2 is not None and state.j >= p.j_m:
        beta = 0.0
    Le, La = p.L ** p.eps, p.L ** p.alpha
    c = n_factor(p.n)
    s, mu = state.s, state.mu
    s_new = Le * s * (1.0 - beta * s)
    mu_new = La * (1.0 - c * beta * s) * mu
    ds_new = Le * (1.0 - 2.0 * beta * s) * state.ds
    dmu_new = La * ((1.0 - c * beta * s) * state.dmu - c * beta * mu * state.ds)
    bad = not (abs(s_new) < OVERFLOW and abs(mu_new) < OVERFLOW and math.isfinite(dmu_new))
    return FlowState(state.j + 1, s_new, mu_new, p, ds_new, dmu_new, bad)


def run_flow(state: FlowState, beta, j_max: int) -> FlowTrajectory:
    src = _as_source(beta)
    states = [state]
    reason = "completed"
    while states[-1].j < j_max:
        nxt = step_flow(states[-1], src(states[-1].j))
        states.append(nxt)
        if nxt.diverged:
            reason = "diverged"
            break
    p = state.params
    if reason == "completed" and p.m2 is not None and j_max > p.j_m:
        reason = "past mass scale"
    return FlowTrajectory(states, reason)


# --------------------------------------------------------------------------- fixed points


@dataclass
class FixedPoint:
    s: float
    multiplier: float
    stable: bool


def s_bar(eps: float, a: float, L: int) -> float:
    return (1.0 - L ** (-eps)) / a


def find_fixed_points(eps: float, a: float, L: int) -> list[FixedPoint]:
    """Roots of s = L^ε s(1 - as) with the derivative of the map at each."""
    Le = L ** eps
    out = [FixedPoint(0.0, Le, Le < 1)]
    if a <= 0:
        return out  # no nontrivial fixed point
    sb = s_bar(eps, a, L)
    mult = Le * (1.0 - 2.0 * a * sb)
    if sb == 0.0:
        return out
    out.append(FixedPoint(sb, mult, abs(mult) < 1))
    return out


# --------------------------------------------------------------------------- shooting


def shoot_critical_mu0(params: FlowParams, beta, s0: float, j_max: int, bracket: float = 1.0,
                       tol: float = 1e-15, max_iter: int = 200) -> float:
    """Bisection for the μ₀ whose trajectory keeps μ_{j_max} closest to zero."""
    src = _as_source(beta)

    def final_mu(mu0):
        return run_flow(FlowState.start(s0, mu0, params), src, j_max).final.mu

    lo, hi = -bracket, bracket
    f_lo, f_hi = final_mu(lo), final_mu(hi)
    grow = 0
    while not (f_lo < 0 < f_hi):
        grow += 1
        if grow > 40 or f_lo > f_hi:
            lo_tr = run_flow(FlowState.start(s0, lo, params), src, j_max).table()
            hi_tr = run_flow(FlowState.start(s0, hi, params), src, j_max).table()
            raise BracketingError(
                f"could not bracket the critical μ₀ (μ_end = {f_lo:.3g}, {f_hi:.3g})",
                {"low": lo_tr, "high": hi_tr},
            )
        lo, hi = 2 * lo, 2 * hi
        f_lo, f_hi = final_mu(lo), final_mu(hi)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        f_mid = final_mu(mid)
        if f_mid == 0.0 or hi - lo < tol:
            return mid
        if f_mid < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# --------------------------------------------------------------------------- exponent


@dataclass
class GammaFit:
    gamma: float            # 1/(1 - slope), integrating the differential inequality
    gamma_first_order: float  # 1 + slope
    slope: float            # d log(∂ν_N/∂ν₀) / d log m²
    slope_stderr: float
    residual: float
    target: float           # 1 + c ε/α
    params: dict
    rows: list = field(default_factory=list)  # (m², j_m, μ₀^c, ν_N, ∂ν_N/∂ν₀)

    def summary(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k != "rows"}
        out["slope_log_m"] = 2 * self.slope
        return out


def sensitivity(params: FlowParams, beta, s0: float, N: int):
    """(μ₀^c, ν_N, ∂ν_N/∂ν₀) at the critical initial condition, with ν_N = L^{-αN} μ_N."""
    mu0 = shoot_critical_mu0(params, beta, s0, N)
    traj = run_flow(FlowState.start(s0, mu0, params), beta, N)
    if traj.reason == "diverged":
        raise FitError("flow diverged at the critical initial condition")
    scale = params.L ** (-params.alpha * N)
    return mu0, scale * traj.final.mu, scale * traj.final.dmu


def extract_gamma(eps: float, alpha: float, n: float, L: int, beta_source="constant", *,
                  a: float | None = None, d: int = 1, m2_grid=None, s0: float | None = None,
                  max_residual: float = 0.05) -> GammaFit:
    """Fit log(∂ν_N/∂ν₀) against log m² on a grid of masses and convert the slope to γ̂.

    ``beta_source`` is "constant" (β ≡ a) or "table" (β_j(m²) computed from
    the covariance decomposition, which ties ε to 2α - d). The default grid
    is m² = L^{-αk}, k = 4..17, so that every mass scale is an integer.
    """
    if m2_grid is None:
        m2_grid = [float(L) ** (-alpha * k) for k in range(4, 18)]
    m2_grid = sorted(m2_grid, reverse=True)
    if math.log10(m2_grid[0] / m2_grid[-1]) < 2 - 1e-9:
        raise ConfigurationError("the m^2 grid must span at least two decades")
    if beta_source == "table":
        from .gaussian import boundary_layer, beta_table, estimate_a
        if abs(eps - (2 * alpha - d)) > 1e-12:
            raise ConfigurationError(f"β table needs ε = 2α - d = {2 * alpha - d}, got {eps}")
        if a is None:
            a = estimate_a(d, L, 16, alpha, n=n)
    elif beta_source == "constant":
        if a is None:
            a = 1.0
    else:
        raise ConfigurationError(f"unknown β source {beta_source!r}")
    if s0 is None:
        s0 = s_bar(eps, a, L)
    rows = []
    for m2 in m2_grid:
        params = FlowParams(L, eps, alpha, n, m2)
        N = params.j_m + 2
        if beta_source == "table":
            beta = beta_table(d, L, params.j_m + boundary_layer(L) + 1, alpha, m2, n)
            beta = np.concatenate([beta, np.zeros(max(0, N - len(beta)))])
        else:
            beta = a
        mu0, nuN, dnu = sensitivity(params, beta, s0, N)
        rows.append((m2, params.j_m, mu0, nuN, dnu))
    x = np.log([r[0] for r in rows])
    y = np.log([r[4] for r in rows])
    A = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    dof = max(len(x) - 2, 1)
    sigma2 = float(resid @ resid) / dof
    cov = sigma2 * np.linalg.inv(A.T @ A)
    slope = float(coef[1])
    rms = math.sqrt(float(np.mean(resid ** 2)))
    if rms > max_residual:
        raise FitError(f"log-log fit residual {rms:.3g} above {max_residual}")
    return GammaFit(
        gamma=1.0 / (1.0 - slope), gamma_first_order=1.0 + slope, slope=slope,
        slope_stderr=math.sqrt(max(cov[1, 1], 0.0)), residual=rms,
        target=1.0 + n_factor(n) * eps / alpha,
        params={"eps": eps, "alpha": alpha, "n": n, "L": L, "d": d, "a": a, "s0": s0,
                "beta_source": beta_source},
        rows=rows,
    )


# --------------------------------------------------------------------------- phase portrait


@dataclass
class PortraitRow:
    start: tuple[float, float]
    label: str
    trajectory: np.ndarray  # rows (j, s, μ)


def classify(traj: FlowTrajectory, s_star: float, mu_cap: float = 1e6, tol: float = 1e-6) -> str:
    last = traj.final
    if abs(last.s) >= OVERFLOW or (traj.reason == "diverged" and abs(last.mu) < OVERFLOW):
        return "s-diverging"
    if last.mu >= mu_cap:
        return "mu-diverging-up"
    if last.mu <= -mu_cap:
        return "mu-diverging-down"
    if abs(last.s - s_star) <= tol and abs(last.mu) <= tol:
        return "converging"
    return "undecided"


def phase_portrait(eps: float, a: float, L: int, alpha: float, n: float, starts, j_max: int,
                   mu_cap: float = 1e6) -> list[PortraitRow]:
    """Trajectories of the constant-β system from each (s₀, μ₀), labelled by their fate."""
    params = FlowParams(L, eps, alpha, n, None)
    fps = find_fixed_points(eps, a, L)
    s_star = fps[-1].s
    out = []
    for s0, mu0 in starts:
        traj = run_flow(FlowState.start(s0, mu0, params), a, j_max)
        out.append(PortraitRow((float(s0), float(mu0)), classify(traj, s_star, mu_cap), traj.table()))
    return out


def portrait_csv(rows: list[PortraitRow]) -> str:
    lines = ["trajectory,s0,mu0,label,j,s,mu"]
    for i, r in enumerate(rows):
        for j, s, mu in r.trajectory:
            lines.append(f"{i},{r.start[0]!r},{r.start[1]!r},{r.label},{int(j)},{s!r},{mu!r}")
    return "\n".join(lines) + "\n"
