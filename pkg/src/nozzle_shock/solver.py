"""Shock location, front-slope update and the free-boundary fixed-point loop."""
from dataclasses import dataclass, field
import os
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from scipy.integrate import trapezoid

from .errors import (ConvergenceError, DegenerateShockError, DomainError, MonotonicityError,
                     NoRootError, NozzleShockError, RegimeError)
from .gas import GasState, derived
from .shock_relations import h3_downstream, rh_residuals
from .subsonic import (FieldSet, FixedDomainGrid, ShockGeometry, check_hypotheses, conservation_audit,
                       recover_p, recover_q_s, shock_oblique_coeffs, solve_theta, theta_coefficients,
                       transformed_coefficients, ThetaBCs)
from .supersonic import solve_linearized

SCAN_POINTS = 64
UNIQUE, MULTIPLE_ROOTS, SEED_DISAGREEMENT, REGIME_BREACH = "Unique", "MultipleRoots", "SeedDisagreement", "RegimeBreach"


# ---------------------------------------------------------------- front

@dataclass(frozen=True)
class ShockFront:
    delta_xi: float
    xi0: float
    eta: np.ndarray
    slope: np.ndarray

    @property
    def xi_star(self):
        return self.xi0 + self.delta_xi

    @property
    def geometry(self):
        return ShockGeometry.from_slope(self.eta, self.xi_star, self.slope)

    @property
    def position(self):
        return self.geometry.psi

    def check(self, L, slope_cap):
        psi = self.position
        if np.any(psi <= 0) or np.any(psi >= L):
            k = int(np.argmin(np.minimum(psi, L - psi)))
            raise RegimeError(f"shock front leaves the nozzle (psi={psi[k]:.6g}) at eta node {k}",
                              location={"eta_node": k})
        if np.max(np.abs(self.slope)) > slope_cap:
            k = int(np.argmax(np.abs(self.slope)))
            raise RegimeError(f"front slope {self.slope[k]:.3g} exceeds cap {slope_cap:.3g} at eta node {k}",
                              location={"eta_node": k})


def update_front_slope(model, u_plus_trace, u_minus_trace, p_jump_floor):
    """psi' = [v] / [p] pointwise along the front."""
    jp = np.asarray(u_plus_trace.p) - np.asarray(u_minus_trace.p)
    if np.any(np.abs(jp) < p_jump_floor):
        k = int(np.argmin(np.abs(jp)))
        raise DegenerateShockError(f"pressure jump {jp[k]:.3g} below floor {p_jump_floor:.3g} at eta node {k}",
                                   location={"eta_node": k})
    jv = u_plus_trace.q * np.sin(u_plus_trace.theta) - u_minus_trace.q * np.sin(u_minus_trace.theta)
    return jv / jp


# ---------------------------------------------------------------- solvability

@dataclass
class SolvabilityContext:
    """Everything the solvability function needs at a fixed front slope.

    With ``corrections`` off it is the affine leading-order function. With
    corrections on it evaluates

        (1/sigma) [c_p int (p_trace - p+ - sigma Pe) d eta + sigma (L - xi*) + R]

    where p_trace is the exact R-H pressure behind the front at xi* and R is
    the subsonic remainder measured on the previous outer iterate.
    """
    setup: object
    Pe: float
    corrections: bool = False
    field: object = None
    slope: np.ndarray = None
    feedback: float = 0.0
    newton_tol: float = 1e-14
    evaluations: int = 0
    _last_trace: object = None

    def __post_init__(self):
        bg = self.setup.background
        self.c_p = bg.exit_prefactor
        self.eta = None if self.field is None else self.field.eta
        if self.corrections and self.field is None:
            raise DomainError("corrections need a supersonic field")
        if self.slope is None and self.eta is not None:
            self.slope = np.zeros_like(self.eta)

    @property
    def bounds(self):
        xi0, L = self.setup.nozzle.xi0, self.setup.nozzle.L
        return -xi0, L - xi0

    def closed_form(self, delta_xi):
        st = self.setup
        xi_star = st.nozzle.xi0 + delta_xi
        k = st.background.kappa
        return ((1.0 - k) * xi_star + (st.nozzle.L - xi_star) - st.interval.inflow_integral
                - st.interval.prefactor * self.Pe)

    def closed_form_root(self):
        st = self.setup
        return ((st.nozzle.L - st.interval.inflow_integral - st.interval.prefactor * self.Pe)
                / st.background.kappa - st.nozzle.xi0)

    def trace_pressure(self, delta_xi):
        """Exact R-H pressure behind the front for one or many wall positions."""
        st = self.setup
        dxi = np.atleast_1d(np.asarray(delta_xi, dtype=float))
        rel = ShockGeometry.from_slope(self.eta, 0.0, self.slope).psi
        psi = np.clip(st.nozzle.xi0 + dxi[:, None] + rel[None, :], 0.0, st.nozzle.L)
        um = self.field.trace_along(psi)
        guess = None
        if self._last_trace is not None and len(dxi) == 1:
            guess = self._last_trace
        up = h3_downstream(st.model, um, np.broadcast_to(self.slope, psi.shape), guess=guess, tol=self.newton_tol)
        if len(dxi) == 1:
            self._last_trace = up
        return up.p if np.ndim(delta_xi) else up.p[0]

    def evaluate(self, delta_xi):
        """Vectorized F~ over an array of wall offsets."""
        dxi = np.atleast_1d(np.asarray(delta_xi, dtype=float))
        lo, hi = self.bounds
        if np.any((dxi <= lo) | (dxi >= hi)):
            raise DomainError(f"delta_xi outside ({lo}, {hi})")
        self.evaluations += len(dxi)
        if not self.corrections:
            return self.closed_form(dxi)
        st = self.setup
        sigma = st.sigma
        pp = float(st.background.u_plus_bar.p)
        p_tr = np.atleast_2d(self.trace_pressure(dxi if len(dxi) > 1 else dxi[0]))
        integral = trapezoid(p_tr - pp - sigma * self.Pe, self.eta, axis=-1)
        xi_star = st.nozzle.xi0 + dxi
        return (self.c_p * integral + sigma * (st.nozzle.L - xi_star) + self.feedback) / sigma

    def __call__(self, delta_xi):
        return float(self.evaluate(float(delta_xi))[0])


def scan_f_tilde(ctx, n):
    lo, hi = ctx.bounds
    span = hi - lo
    grid = np.linspace(lo + 1e-9 * span, hi - 1e-9 * span, n)
    return grid, np.asarray(ctx.evaluate(grid), dtype=float)


def sign_changes(values):
    s = np.sign(values)
    return int(np.sum(s[:-1] * s[1:] < 0) + np.sum(s[1:-1] == 0))


def locate_shock(ctx, n_scan=SCAN_POINTS, xtol=None):
    L = ctx.setup.nozzle.L
    xtol = 1e-12 * L if xtol is None else xtol
    grid, vals = scan_f_tilde(ctx, n_scan)
    n_changes = sign_changes(vals)
    if n_changes == 0:
        raise NoRootError(
            f"solvability function has no sign change on the admissible range "
            f"(F~ from {vals[0]:.4g} to {vals[-1]:.4g}); Pe={ctx.Pe:.6g} outside admissible interval")
    if n_changes > 1:
        raise MonotonicityError(f"solvability function changes sign {n_changes} times: monotonicity violated",
                                sign_changes=n_changes)
    exact = np.where(vals == 0)[0]
    if len(exact):
        return float(grid[exact[0]])
    k = int(np.where(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0][0])
    a, b, fa = grid[k], grid[k + 1], vals[k]
    while b - a > xtol:
        m = 0.5 * (a + b)
        fm = ctx(m)
        if fm == 0.0:
            return float(m)
        if np.sign(fm) == np.sign(fa):
            a, fa = m, fm
        else:
            b = m
    return float(0.5 * (a + b))


# ---------------------------------------------------------------- reports

@dataclass
class SeedInit:
    psi_prime0: float = 0.0
    delta_xi0: float = 0.0
    fields0: FieldSet = None


@dataclass
class SolveReport:
    fields: FieldSet
    front: ShockFront
    grid: FixedDomainGrid
    trace_plus: GasState
    trace_minus: GasState
    iterations: list
    contraction_ratios: list
    hypothesis_report: object
    f_tilde_profile: tuple = None
    diagnostics: dict = field(default_factory=dict)
    converged: bool = True
    timing_s: float = 0.0

    @property
    def delta_xi(self):
        return self.front.delta_xi

    def tail_ratio(self, floor):
        return tail_contraction(self.iterations, floor)

    def norms(self, background):
        pp = float(background.u_plus_bar.p)
        qp = float(background.u_plus_bar.q)
        sp = float(background.u_plus_bar.s)
        f = self.fields
        return {
            "sup_theta": float(np.max(np.abs(f.theta))),
            "sup_p_minus_p_plus": float(np.max(np.abs(f.p - pp))),
            "sup_q_minus_q_plus": float(np.max(np.abs(f.q - qp))),
            "sup_s_minus_s_plus": float(np.max(np.abs(f.s - sp))),
            "sup_psi_prime": float(np.max(np.abs(self.front.slope))),
        }


def tail_contraction(iterations, floor):
    """Largest of the last three step ratios whose steps sit above the noise floor.

    The ratio out of the first iterate is skipped: it reflects the seed, not the map.
    """
    changes = [it["change"] for it in iterations]
    ratios = [changes[k] / changes[k - 1] for k in range(2, len(changes))
              if changes[k] > floor and changes[k - 1] > 0]
    if not ratios:
        return None
    return float(max(ratios[-3:]))


# ---------------------------------------------------------------- fixed point

@dataclass(frozen=True)
class SolverOptions:
    nx: int = 128
    ny: int = 64
    tol_fixed_point: float = 1e-10
    tol_newton: float = 1e-14
    tol_linear: float = 1e-10
    max_iters: int = 50
    max_inner: int = 30
    eps_hyp: float = 0.1
    slope_cap_factor: float = 10.0
    corrections: bool = True
    relocate: bool = True
    picard_tol: float = 1e-10
    noise_floor: float = 2e-11


def _planar_report(setup, grid, Pe, opts):
    bg = setup.background
    if Pe != 0.0:
        raise NoRootError("with sigma = 0 the admissible interval collapses; only Pe = 0 is accepted")
    fields = FieldSet.uniform(grid, bg.u_plus_bar)
    eta = grid.eta
    front = ShockFront(0.0, setup.nozzle.xi0, eta, np.zeros_like(eta))
    n = len(eta)
    tp = GasState(*(np.full(n, float(v)) for v in (bg.u_plus_bar.p, bg.u_plus_bar.theta, bg.u_plus_bar.q, bg.u_plus_bar.s)))
    tm = GasState(*(np.full(n, float(v)) for v in (bg.u_minus_bar.p, bg.u_minus_bar.theta, bg.u_minus_bar.q, bg.u_minus_bar.s)))
    hyp = check_hypotheses(setup.model, fields, tp, bg, opts.eps_hyp)
    it = [{"iteration": 1, "change": 0.0, "delta_xi": 0.0}]
    return SolveReport(fields, front, grid, tp, tm, it, [], hyp, converged=True)


def _exit_bcs(a11, a12, S):
    return (a11[-1] / S[-1], a12[-1], np.zeros(a11.shape[1]))


def fixed_point_solve(setup, Pe, opts=None, init=None, supersonic=None):
    """Outer free-boundary iteration from one seed.

    Each pass: upstream traces at the current front, exact R-H states
    behind it, elliptic theta solve with coefficients frozen at the
    previous fields, line-wise recovery of p, q, s, slope update from the
    fields' shock column, then relocation of the wall intersection.
    """
    t0 = time.perf_counter()
    opts = SolverOptions() if opts is None else opts
    init = SeedInit() if init is None else init
    model, bg, noz = setup.model, setup.background, setup.nozzle
    sigma = noz.sigma
    grid = FixedDomainGrid(opts.nx, opts.ny, noz.xi0, noz.L, setup.eta0)
    if sigma == 0.0:
        return _planar_report(setup, grid, Pe, opts)
    field_m = supersonic or solve_linearized(model, setup, n_eta=opts.ny, picard_tol=opts.picard_tol)
    eta = grid.eta
    pp = float(bg.u_plus_bar.p)
    p_exit = pp + sigma * Pe
    slope_cap = opts.slope_cap_factor * sigma
    p_floor = 0.5 * bg.p_jump

    slope = np.full(eta.shape, float(init.psi_prime0))
    delta_xi = float(init.delta_xi0)
    fields = init.fields0 or FieldSet.uniform(grid, bg.u_plus_bar, theta=sigma * eta[None, :] / setup.eta0)
    history, ratios = [], []
    trace_p = None
    prev_change = None
    converged = False
    hyp = None
    def frozen_solve(dxi, coeffs):
        """Linear subsonic problem at a given front with coefficients held fixed."""
        front = ShockFront(dxi, noz.xi0, eta, slope)
        front.check(noz.L, slope_cap)
        geom = front.geometry
        um = field_m.trace_along(geom.psi)
        up = h3_downstream(model, um, slope, guess=trace_p, tol=opts.tol_newton)
        a11, a12, a22 = coeffs
        S, g = geom.metric(grid)
        du = np.gradient(um.as_array(), eta, axis=0, edge_order=2)
        _, _, _, (l1, l2, rhs) = shock_oblique_coeffs(model, up, um, slope, du, p_star=bg.p_star, eps_p=opts.eps_hyp)
        bcs = ThetaBCs(bottom=np.zeros(grid.nx + 1), top=np.full(grid.nx + 1, sigma),
                       shock_m=(l1 / S[0] + g[0] * l2, l2, rhs), exit_m=_exit_bcs(a11, a12, S))
        A11, A12, A22 = transformed_coefficients(a11, a12, a22, S, g)
        sol = solve_theta(grid, A11, A12, A22, bcs, tol=opts.tol_linear)
        p, mismatch = recover_p(grid, geom, sol.theta, a11, a12, a22, p_exit)
        q, s = recover_q_s(model, p, up)
        feedback = -sigma * (noz.L - front.xi_star) - bg.exit_prefactor * trapezoid(p[0] - pp - sigma * Pe, eta)
        return FieldSet(p, sol.theta, q, s), up, um, sol, mismatch, float(feedback)

    inner_tol = max(1e-3 * opts.tol_fixed_point, 1e-11 * noz.L)
    for k in range(1, opts.max_iters + 1):
        # coefficients frozen at the current fields; the wall position is made
        # consistent with this frozen problem before the fields are updated
        a11, a12, a22, _ = theta_coefficients(model, fields.state())
        new_dxi = delta_xi
        for inner in range(1, opts.max_inner + 1):
            new_fields, up, um, sol, loop_mismatch, feedback = frozen_solve(new_dxi, (a11, a12, a22))
            trace_p = up
            if not opts.relocate:
                break
            ctx = SolvabilityContext(setup, Pe, corrections=opts.corrections, field=field_m,
                                     slope=slope, feedback=feedback, newton_tol=opts.tol_newton)
            located = locate_shock(ctx)
            step = abs(located - new_dxi)
            if step <= inner_tol:
                break
            new_dxi = located
        else:
            raise ConvergenceError(f"shock relocation did not settle in {opts.max_inner} passes "
                                   f"(last step {step:.3e}) at outer iteration {k}", history=history)
        hyp = check_hypotheses(model, new_fields, up, bg, opts.eps_hyp)
        hyp.raise_if_failed(grid)
        p, theta, q, s = new_fields.p, new_fields.theta, new_fields.q, new_fields.s
        new_slope = update_front_slope(model, GasState(p[0], theta[0], q[0], s[0]), um, p_floor)

        mask = grid.corner_collar(1)
        d_fields = new_fields.sup_diff(fields, mask)
        d_slope = float(np.max(np.abs(new_slope - slope)))
        d_xi = abs(new_dxi - delta_xi)
        # the wall offset lags the fields by one pass, so it is tracked but kept out of the norm
        change = d_fields + d_slope
        if prev_change:
            ratios.append(change / prev_change)
        history.append({"iteration": k, "change": change, "field_change": d_fields, "slope_change": d_slope,
                        "delta_xi_change": d_xi, "relocation_passes": inner, "delta_xi": new_dxi, "linear_residual": sol.residual,
                        "loop_mismatch": loop_mismatch, "feedback": float(feedback)})
        prev_change = change
        fields, slope, delta_xi = new_fields, new_slope, new_dxi
        if change <= opts.tol_fixed_point:
            converged = True
            break

    if not converged:
        raise ConvergenceError(f"fixed-point iteration did not converge in {opts.max_iters} iterations "
                               f"(last change {history[-1]['change']:.3e})", history=history)

    front = ShockFront(delta_xi, noz.xi0, eta, slope)
    geom = front.geometry
    um = field_m.trace_along(geom.psi)
    up = h3_downstream(model, um, slope, guess=trace_p, tol=opts.tol_newton)
    report = SolveReport(fields, front, grid, up, um, history, ratios, hyp, converged=True)
    report.diagnostics = solve_diagnostics(setup, report, field_m, Pe, opts)
    report.timing_s = time.perf_counter() - t0
    return report


def solve_diagnostics(setup, report, field_m, Pe, opts):
    model, bg = setup.model, setup.background
    sigma = setup.sigma
    up, um, front = report.trace_plus, report.trace_minus, report.front
    rh = np.abs(np.stack(rh_residuals(model, up, um, front.slope)))
    shock_col = GasState(report.fields.p[0], report.fields.theta[0], report.fields.q[0], report.fields.s[0])
    rh_field = np.abs(np.stack(rh_residuals(model, shock_col, um, front.slope)))
    audit = conservation_audit(model, report.grid, report.fields)
    ctx = SolvabilityContext(setup, Pe)
    tail = tail_contraction(report.iterations, opts.noise_floor)
    out = {
        "rh_residual_trace_max": float(np.max(rh)),
        "rh_residual_field_shock_column_max": float(np.max(rh_field)),
        "trace_field_pressure_mismatch": float(np.max(np.abs(shock_col.p - up.p))),
        "trace_field_theta_mismatch": float(np.max(np.abs(shock_col.theta - up.theta))),
        "entropy_dxi_residual": audit["entropy_dxi"],
        "bernoulli_dxi_residual": audit["bernoulli_dxi"],
        "loop_mismatch": report.iterations[-1]["loop_mismatch"],
        "linear_residual": report.iterations[-1]["linear_residual"],
        "delta_xi_closed_form": ctx.closed_form_root(),
        "delta_xi_minus_closed_form": report.delta_xi - ctx.closed_form_root(),
        "subsonic_feedback_over_sigma": report.iterations[-1]["feedback"] / sigma,
        "supersonic_picard_passes": field_m.picard_passes,
        "supersonic_first_correction": field_m.first_correction,
        "tail_contraction_ratio": tail,
        "contraction_certified": tail is not None and tail <= 0.5,
    }
    out.update(linearized_trace_diagnostic(setup, report, field_m))
    return out


def linearized_trace_diagnostic(setup, report, field_m):
    """Compare the exact R-H trace pressure with its linearization about the background.

    Returns the remainder of the linearized relation and the jump-condition
    remainders g1, g2, g3, each scaled by sigma^2.
    """
    model, bg = setup.model, setup.background
    sigma = setup.sigma
    up, um = report.trace_plus, report.trace_minus
    eta = report.front.eta
    qm, qp = float(bg.u_minus_bar.q), float(bg.u_plus_bar.q)
    rm, rp = bg.rho_minus, bg.rho_plus
    m_flux = bg.mass_flux
    # linearized relation evaluated at the vertical line xi* from the supersonic field
    from .supersonic import trace_and_integrals
    tr = trace_and_integrals(field_m, setup, report.front.xi_star)
    x_in = setup.y0(eta)
    p0, _, q0, s0 = (np.broadcast_to(v, eta.shape) for v in setup.inflow.at(x_in))
    delta_fs = ((bg.mach_minus2 - 1.0) / (rm * qm ** 2) * (1.0 - bg.kappa) * tr.delta_p
                + bg.kappa1 * sigma * (p0 + m_flux * q0) + bg.kappa2 * sigma * s0 + bg.kappa1 * tr.I_f3)
    lhs = (bg.mach_plus2 - 1.0) / (rp * qp ** 2) * (np.asarray(up.p) - float(bg.u_plus_bar.p))
    remainder = float(np.max(np.abs(lhs - delta_fs)))

    def lin_terms(state_bar, rho_bar, c2, dp, dq, ds):
        q, pbar = float(state_bar.q), float(state_bar.p)
        a = dp / (rho_bar ** 2 * q * c2) + dq / (rho_bar * q ** 2) - ds / (model.gamma * model.c_v * rho_bar * q)
        return a

    dplus = derived(model, up)
    dminus = derived(model, um)
    c2p = float(derived(model, bg.u_plus_bar).c) ** 2
    c2m = float(derived(model, bg.u_minus_bar).c) ** 2
    dpp, dqp, dsp = up.p - bg.u_plus_bar.p, up.q - qp, up.s - bg.u_plus_bar.s
    dpm, dqm, dsm = um.p - bg.u_minus_bar.p, um.q - qm, um.s - bg.u_minus_bar.s
    jp = up.p - um.p
    jv = dplus.v_comp - dminus.v_comp
    lp = lin_terms(bg.u_plus_bar, rp, c2p, dpp, dqp, dsp)
    lm = lin_terms(bg.u_minus_bar, rm, c2m, dpm, dqm, dsm)
    g1 = ((dplus.v_comp / dplus.u_comp - dminus.v_comp / dminus.u_comp) * jv / jp
          + (1.0 / (dplus.rho * dplus.u_comp) - 1.0 / (rp * qp) + lp)
          - (1.0 / (dminus.rho * dminus.u_comp) - 1.0 / (rm * qm) + lm))
    pp_, pm_ = float(bg.u_plus_bar.p), float(bg.u_minus_bar.p)
    g2 = (-(up.p * dplus.v_comp / dplus.u_comp - um.p * dminus.v_comp / dminus.u_comp) * jv / jp
          - (dplus.u_comp + up.p / (dplus.rho * dplus.u_comp) - qp - pp_ / (rp * qp) - dqp - dpp / (rp * qp))
          - pp_ * lp
          + (dminus.u_comp + um.p / (dminus.rho * dminus.u_comp) - qm - pm_ / (rm * qm) - dqm - dpm / (rm * qm))
          + pm_ * lm)
    ip, im = model.enthalpy(bg.u_plus_bar.p, bg.u_plus_bar.s), model.enthalpy(bg.u_minus_bar.p, bg.u_minus_bar.s)
    cv1 = (model.gamma - 1.0) * model.c_v
    g3 = (-(dplus.bernoulli_B - 0.5 * qp ** 2 - ip - dpp / rp - qp * dqp - pp_ / (rp * cv1) * dsp)
          + (dminus.bernoulli_B - 0.5 * qm ** 2 - im - dpm / rm - qm * dqm - pm_ / (rm * cv1) * dsm))
    s2 = sigma ** 2
    return {
        "linearized_trace_remainder_over_sigma2": remainder / s2,
        "g1_over_sigma2": float(np.max(np.abs(g1))) / s2,
        "g2_over_sigma2": float(np.max(np.abs(g2))) / s2,
        "g3_over_sigma2": float(np.max(np.abs(g3))) / s2,
    }


def sample_f_tilde(setup, report, Pe, field_m, n=256, corrections=True):
    """F~ over the admissible range at the converged slope and feedback."""
    feedback = report.iterations[-1]["feedback"] if report.iterations else 0.0
    ctx = SolvabilityContext(setup, Pe, corrections=corrections and setup.sigma > 0, field=field_m,
                             slope=report.front.slope, feedback=feedback)
    return scan_f_tilde(ctx, n)


# ---------------------------------------------------------------- uniqueness

SEED_SLOPES = (0.0, 1.0, -1.0, 2.0, -2.0)


def seed_set(setup, n_seeds):
    """Deterministic seeds: constant slopes in units of sigma, wall positions spread over (0.2L, 0.8L)."""
    L, xi0, sigma = setup.nozzle.L, setup.nozzle.xi0, setup.sigma
    positions = np.linspace(0.2 * L, 0.8 * L, n_seeds)
    return [SeedInit(psi_prime0=SEED_SLOPES[k % len(SEED_SLOPES)] * sigma * (1 + k // len(SEED_SLOPES)),
                     delta_xi0=float(positions[k] - xi0)) for k in range(n_seeds)]


def _run_seed(args):
    setup, Pe, opts, seed = args
    try:
        rep = fixed_point_solve(setup, Pe, opts, seed)
        return {"ok": True, "report": rep}
    except NozzleShockError as exc:
        return {"ok": False, "error": type(exc).__name__, "message": str(exc),
                "exit_code": getattr(exc, "exit_code", 1)}


def worker_count(n_tasks):
    cap = os.environ.get("NOZZLE_SHOCK_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            pass
    return max(1, min(n, n_tasks))


def run_parallel(fn, tasks):
    workers = worker_count(len(tasks))
    if workers == 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, tasks))


@dataclass
class UniquenessVerdict:
    verdict: str
    seeds: list
    delta_xi_spread: float
    field_spread: float
    sign_changes: int
    tail_ratios: list
    reports: list

    def as_dict(self):
        return {"verdict": self.verdict, "delta_xi_spread": self.delta_xi_spread,
                "field_spread": self.field_spread, "f_tilde_sign_changes": self.sign_changes,
                "tail_contraction_ratios": self.tail_ratios, "seeds": self.seeds}


def uniqueness_sweep(setup, Pe, opts=None, n_seeds=5, seeds=None):
    opts = SolverOptions() if opts is None else opts
    if n_seeds < 5 and seeds is None:
        raise DomainError("the uniqueness harness needs at least 5 seeds")
    seeds = seed_set(setup, n_seeds) if seeds is None else seeds
    field_m = solve_linearized(setup.model, setup, n_eta=opts.ny, picard_tol=opts.picard_tol)
    results = run_parallel(_run_seed, [(setup, Pe, opts, s) for s in seeds])

    L = setup.nozzle.L
    rows, reports = [], []
    for k, (seed, res) in enumerate(zip(seeds, results)):
        row = {"seed": k, "psi_prime0": seed.psi_prime0, "delta_xi0": seed.delta_xi0, "ok": res["ok"]}
        if res["ok"]:
            rep = res["report"]
            reports.append(rep)
            row.update({"delta_xi": rep.delta_xi, "iterations": len(rep.iterations),
                        "tail_ratio": tail_contraction(rep.iterations, opts.noise_floor),
                        "final_change": rep.iterations[-1]["change"]})
        else:
            row.update({"error": res["error"], "message": res["message"]})
        rows.append(row)

    failures = [r for r in rows if not r["ok"]]
    dxi_spread = field_spread = float("nan")
    n_changes = -1
    if reports:
        dx = np.array([r.delta_xi for r in reports])
        dxi_spread = float(dx.max() - dx.min())
        mask = reports[0].grid.corner_collar(1)
        field_spread = max((reports[0].fields.sup_diff(r.fields, mask) for r in reports[1:]), default=0.0)
        _, vals = sample_f_tilde(setup, reports[0], Pe, field_m, n=256)
        n_changes = sign_changes(vals)

    if failures or not reports:
        verdict = REGIME_BREACH
    elif n_changes != 1:
        verdict = MULTIPLE_ROOTS if n_changes > 1 else REGIME_BREACH
    elif dxi_spread > 1e-6 * L or field_spread > 10 * opts.tol_fixed_point:
        verdict = SEED_DISAGREEMENT
    else:
        verdict = UNIQUE
    tails = [r.get("tail_ratio") for r in rows if r["ok"]]
    return UniquenessVerdict(verdict, rows, dxi_spread, field_spread, n_changes, tails, reports)
