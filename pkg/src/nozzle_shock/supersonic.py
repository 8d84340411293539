"""Linearized supersonic flow ahead of the shock, marched in xi.

Deviations (dp, dtheta, dq, ds) from the uniform upstream state satisfy

    d_xi dp     = -beta d_eta dtheta + beta f2
    d_xi dtheta = -(1/q) d_eta dp    + f1 / q
    d_xi (rho q dq + dp) = f3,       d_xi ds = 0

with beta = rho^2 q^3 / (M^2 - 1). The forcing terms f1, f2, f3 are the
nonlinear remainders of the full Lagrangian equations; they vanish on the
first pass and are refreshed by Picard iteration.
"""
from dataclasses import dataclass
import math

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.interpolate import CubicSpline

from .errors import GridError
from .gas import GasState

CFL_TARGET = 0.9


@dataclass(frozen=True)
class SupersonicField:
    xi: np.ndarray
    eta: np.ndarray
    dp: np.ndarray          # shape (n_xi, n_eta)
    dtheta: np.ndarray
    dq: np.ndarray
    ds: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    f3: np.ndarray
    base: GasState
    rho_bar: float
    sigma: float
    picard_passes: int
    picard_changes: tuple
    first_correction: float   # sup change between pass 0 and pass 1

    def state(self):
        b = self.base
        return GasState(b.p + self.dp, b.theta + self.dtheta, b.q + self.dq, b.s + self.ds)

    def _splines(self):
        cache = self.__dict__.get("_spl")
        if cache is None:
            cache = {k: CubicSpline(self.xi, getattr(self, k), axis=0)
                     for k in ("dp", "dtheta", "dq", "ds")}
            object.__setattr__(self, "_spl", cache)
        return cache

    def trace_along(self, psi):
        """Full upstream state at (psi[..., j], eta[j]) for every eta node.

        ``psi`` may carry leading batch axes; the last axis runs over eta.
        """
        psi = np.asarray(psi, dtype=float)
        spl = self._splines()
        cols = np.broadcast_to(np.arange(len(self.eta)), psi.shape)
        out = {}
        for k, s in spl.items():
            seg = np.clip(np.searchsorted(self.xi, psi, side="right") - 1, 0, len(self.xi) - 2)
            t = psi - self.xi[seg]
            c = s.c[:, seg, cols]
            out[k] = ((c[0] * t + c[1]) * t + c[2]) * t + c[3]
        b = self.base
        return GasState(b.p + out["dp"], b.theta + out["dtheta"], b.q + out["dq"], b.s + out["ds"])


def characteristic_speed(background):
    bg = background
    return bg.mass_flux / math.sqrt(bg.mach_minus2 - 1.0)


def default_xi_steps(background, xi_end, d_eta):
    lam = characteristic_speed(background)
    return max(8, int(math.ceil(xi_end * lam / (CFL_TARGET * d_eta))))


def _coefficients(background):
    bg = background
    q = float(bg.u_minus_bar.q)
    rho = bg.rho_minus
    beta = rho ** 2 * q ** 3 / (bg.mach_minus2 - 1.0)
    return q, rho, beta


def forcing_terms(model, background, xi, dp, dtheta, dq, ds):
    """Nonlinear remainders f1, f2, f3 evaluated from the current fields."""
    q_bar, rho_bar, beta = _coefficients(background)
    b = background.u_minus_bar
    p = b.p + dp
    th = dtheta
    q = b.q + dq
    s = b.s + ds
    rho = model.density(p, s)
    m2 = q * q * rho / (model.gamma * p)
    px = np.gradient(p, xi, axis=0, edge_order=2)
    tx = np.gradient(th, xi, axis=0, edge_order=2)
    qx = np.gradient(q, xi, axis=0, edge_order=2)
    sin_t, cos_t = np.sin(th), np.cos(th)
    f1 = sin_t / (rho * q) * px + (q_bar - q * cos_t) * tx
    f2 = sin_t / (rho * q) * tx + (1.0 / beta + cos_t * (1.0 - m2) / (rho ** 2 * q ** 3)) * px
    f3 = (rho_bar * q_bar - rho * q) * qx
    return f1, f2, f3


def _ghost_extend(a, bottom, top):
    return np.concatenate(([bottom], a, [top]))


def _march(background, sigma, xi, eta, p_in, t_in, f1, f2):
    """Two-step Lax-Wendroff march of (dp, dtheta) with wall ghost nodes."""
    q_bar, _, beta = _coefficients(background)
    d_xi = xi[1] - xi[0]
    d_eta = eta[1] - eta[0]
    r = d_xi / d_eta
    n_xi, n_eta = len(xi), len(eta)
    P = np.empty((n_xi, n_eta))
    T = np.empty((n_xi, n_eta))
    P[0], T[0] = p_in, t_in
    Sp = beta * f2
    St = f1 / q_bar

    def extend(p, t, sp, st, f1_top):
        # bottom wall: theta odd, p even; top wall: theta - sigma odd and
        # d_eta p = f1 there so that d_xi theta = 0 along the wall
        pe = _ghost_extend(p, p[1], p[-2] + 2.0 * d_eta * f1_top)
        te = _ghost_extend(t, -t[1], 2.0 * sigma - t[-2])
        spe = _ghost_extend(sp, 2 * sp[0] - sp[1], 2 * sp[-1] - sp[-2])
        ste = _ghost_extend(st, 2 * st[0] - st[1], 2 * st[-1] - st[-2])
        return pe, te, spe, ste

    for n in range(n_xi - 1):
        pe, te, spe, ste = extend(P[n], T[n], Sp[n], St[n], f1[n, -1])
        ph = 0.5 * (pe[1:] + pe[:-1]) - 0.5 * r * beta * (te[1:] - te[:-1]) + 0.25 * d_xi * (spe[1:] + spe[:-1])
        th = 0.5 * (te[1:] + te[:-1]) - 0.5 * r / q_bar * (pe[1:] - pe[:-1]) + 0.25 * d_xi * (ste[1:] + ste[:-1])
        sp_mid = 0.5 * (Sp[n] + Sp[n + 1])
        st_mid = 0.5 * (St[n] + St[n + 1])
        P[n + 1] = P[n] - r * beta * (th[1:] - th[:-1]) + d_xi * sp_mid
        T[n + 1] = T[n] - r / q_bar * (ph[1:] - ph[:-1]) + d_xi * st_mid
        T[n + 1, 0] = 0.0
        T[n + 1, -1] = sigma
    return P, T


def solve_linearized(model, setup, xi_end=None, n_eta=None, n_xi=None, picard_max=5, picard_tol=1e-10):
    """March the linearized supersonic system from the entrance to ``xi_end``.

    ``n_eta`` is the number of eta cells; ``n_xi`` the number of xi steps
    (chosen from the CFL limit when omitted).
    """
    bg = setup.background
    sigma = setup.sigma
    xi_end = setup.nozzle.L if xi_end is None else xi_end
    n_eta = 64 if n_eta is None else n_eta
    eta = np.linspace(0.0, setup.eta0, n_eta + 1)
    d_eta = eta[1] - eta[0]
    lam = characteristic_speed(bg)
    if n_xi is None:
        n_xi = default_xi_steps(bg, xi_end, d_eta)
    cfl = lam * (xi_end / n_xi) / d_eta
    if cfl > 1.0:
        suggested = default_xi_steps(bg, xi_end, d_eta)
        raise GridError(f"supersonic march violates CFL ({cfl:.3f} > 1); use at least {suggested} xi steps",
                        suggested_nx=suggested)
    xi = np.linspace(0.0, xi_end, n_xi + 1)
    q_bar, rho_bar, _ = _coefficients(bg)
    m_flux = rho_bar * q_bar

    x_in = setup.y0(eta)
    p0, t0, q0, s0 = setup.inflow.at(x_in)
    p0, t0, q0, s0 = (np.broadcast_to(v, eta.shape).astype(float) for v in (p0, t0, q0, s0))
    p_in, t_in = sigma * p0, sigma * t0
    # boundary values take precedence at the entrance corners
    t_in[0], t_in[-1] = 0.0, sigma
    ds = np.broadcast_to(sigma * s0, (len(xi), len(eta))).copy()
    combo_in = sigma * (p0 + m_flux * q0)

    zeros = np.zeros((len(xi), len(eta)))
    f1, f2, f3 = zeros, zeros, zeros
    changes = []
    prev = None
    first_corr = 0.0
    passes = 0
    for k in range(picard_max + 1):
        P, T = _march(bg, sigma, xi, eta, p_in, t_in, f1, f2)
        int_f3 = cumulative_trapezoid(f3, xi, axis=0, initial=0.0)
        Q = (combo_in[None, :] + int_f3 - P) / m_flux
        used = (f1, f2, f3)     # forcing behind the returned fields
        passes = k + 1
        if prev is not None:
            change = max(np.max(np.abs(P - prev[0])), np.max(np.abs(T - prev[1])), np.max(np.abs(Q - prev[2])))
            changes.append(float(change))
            if k == 1:
                first_corr = float(change)
            if change <= picard_tol:
                break
        prev = (P, T, Q)
        if sigma == 0.0:
            break
        f1, f2, f3 = forcing_terms(model, bg, xi, P, T, Q, ds)
    f1, f2, f3 = used
    return SupersonicField(xi=xi, eta=eta, dp=P, dtheta=T, dq=Q, ds=ds, f1=f1, f2=f2, f3=f3,
                           base=bg.u_minus_bar, rho_bar=rho_bar, sigma=sigma,
                           picard_passes=passes, picard_changes=tuple(changes),
                           first_correction=first_corr)


@dataclass(frozen=True)
class SupersonicTraces:
    xi_star: float
    delta_p: np.ndarray
    delta_s: np.ndarray
    q_combination: np.ndarray
    I_f2: float
    I_f3: np.ndarray
    pl0_residual: float


def trace_and_integrals(field, setup, xi_star):
    """Traces on the vertical line xi = xi_star and the integral identity check."""
    bg = setup.background
    eta = field.eta
    psi = np.full(eta.shape, float(xi_star))
    up = field.trace_along(psi)
    b = field.base
    dp = up.p - b.p
    ds = up.s - b.s
    dq = up.q - b.q
    m_flux = bg.mass_flux
    combo = m_flux * dq + dp

    def upto(f):
        cum = cumulative_trapezoid(f, field.xi, axis=0, initial=0.0)
        return CubicSpline(field.xi, cum, axis=0)(xi_star)

    I_f3 = upto(field.f3)
    I_f2 = float(trapezoid(upto(field.f2), eta))
    coef = (bg.mach_minus2 - 1.0) / (bg.rho_minus * float(b.q) ** 2)
    sigma = field.sigma
    int_p0 = float(trapezoid(np.broadcast_to(setup.inflow.p0(setup.y0(eta)), eta.shape), eta))
    lhs = coef * float(trapezoid(dp, eta))
    rhs = -sigma * m_flux * xi_star + sigma * coef * int_p0 + m_flux * I_f2
    return SupersonicTraces(xi_star=float(xi_star), delta_p=dp, delta_s=ds, q_combination=combo,
                            I_f2=I_f2, I_f3=I_f3, pl0_residual=float(lhs - rhs))
