"""Rankine-Hugoniot algebra for a polytropic gas.

Covers the planar normal shock, the theta-p shock polar with its critical
points, the polar level-set function used on the shock boundary, the
four Lagrangian jump conditions and their batched inverse (downstream
state from upstream state and front slope).
"""
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError, NoShockError, OutOfPolarError
from .gas import GasState, derived, mach_squared

UPPER = "Upper"
LOWER = "Lower"

_CSTEP = 1e-30


@dataclass(frozen=True)
class PolarPoint:
    theta: object
    p: object
    downstream: GasState
    branch: str


@dataclass(frozen=True)
class PolarCriticalPoints:
    p_max: float
    p_star: float
    theta_star: float
    p_sonic: float
    theta_sonic: float

    @property
    def sonic_below_star(self):
        return self.p_sonic < self.p_star


def _branch_sign(branch):
    if branch == UPPER:
        return 1.0
    if branch == LOWER:
        return -1.0
    raise DomainError(f"unknown polar branch {branch!r}")


def _require_supersonic(model, u_minus):
    m2 = np.real(mach_squared(model, u_minus))
    if np.any(m2 <= 1.0):
        raise NoShockError(f"upstream Mach number must exceed 1 (M^2 = {np.min(m2):.6g})")
    return m2


# ---------------------------------------------------------------- normal shock

def normal_shock_downstream(model, u_minus):
    """Planar downstream state from mass, momentum and Bernoulli balance.

    With r = rho+/rho- the three balances reduce to a quadratic in r with
    the trivial root r = 1 factored out; the remaining linear residual is
    bracketed on [1, (g+1)/(g-1)] exactly when M- > 1.
    """
    _require_supersonic(model, u_minus)
    g = model.gamma
    d = derived(model, u_minus)
    p, q, rho = float(u_minus.p), float(u_minus.q), float(d.rho)
    a = 0.5 * q * q
    b = g * p / ((g - 1.0) * rho)
    e = g * q * q / (g - 1.0)

    def residual(r):
        return -(a + b) * r + (e - a)

    r_hi = (g + 1.0) / (g - 1.0)
    lo = residual(1.0)
    if lo <= 0.0:
        r = 1.0
    else:
        r = brentq(residual, 1.0, r_hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    p_plus = p + rho * q * q * (1.0 - 1.0 / r)
    return GasState.from_density(model, p_plus, r * rho, u_minus.theta, q / r)


def normal_shock_residuals(model, u_plus, u_minus):
    """Relative residuals of [rho q], [p + rho q^2], [B]."""
    dp, dm = derived(model, u_plus), derived(model, u_minus)
    mass = (dp.rho * u_plus.q - dm.rho * u_minus.q) / (dm.rho * u_minus.q)
    mom_m = u_minus.p + dm.rho * u_minus.q ** 2
    mom = (u_plus.p + dp.rho * u_plus.q ** 2 - mom_m) / mom_m
    bern = (dp.bernoulli_B - dm.bernoulli_B) / dm.bernoulli_B
    return mass, mom, bern


# ---------------------------------------------------------------- shock polar

def _polar_terms(model, p, p_minus, m2):
    g = model.gamma
    X = p / p_minus - 1.0
    Z = 2.0 * g / (g + 1.0) * (m2 - 1.0) - X
    W = p / p_minus + (g - 1.0) / (g + 1.0)
    return X, Z, W


def polar_max_pressure(model, u_minus):
    g = model.gamma
    m2 = mach_squared(model, u_minus)
    return u_minus.p * (2.0 * g * m2 - (g - 1.0)) / (g + 1.0)


def polar_tan_deflection(model, p, u_minus, branch=UPPER):
    """Signed tan(theta - theta_-) along the polar at pressure p."""
    g = model.gamma
    m2 = mach_squared(model, u_minus)
    X, Z, W = _polar_terms(model, p, u_minus.p, m2)
    ratio = Z / W
    slack = 1e-12 * (1.0 + np.abs(X))
    if np.any(np.real(ratio) < -slack):
        raise OutOfPolarError("negative radicand in the polar relation")
    ratio = np.where(np.real(ratio) < 0, 0.0, ratio)
    return _branch_sign(branch) * X / (g * m2 - X) * np.sqrt(ratio)


def _polar_rhs_slope(model, p, u_minus):
    """d/dp of the unsigned polar right-hand side (upper branch)."""
    g = model.gamma
    pm = u_minus.p
    m2 = mach_squared(model, u_minus)
    X, Z, W = _polar_terms(model, p, pm, m2)
    root = np.sqrt(Z / W)
    den = g * m2 - X
    d_frac = g * m2 / den ** 2 / pm
    d_root = -(W + Z) / (pm * W ** 2) / (2.0 * root)
    return d_frac * root + X / den * d_root


def _check_polar_range(model, p, u_minus):
    p_max = polar_max_pressure(model, u_minus)
    tol = 1e-12 * p_max
    p_arr = np.asarray(p)
    if np.any(p_arr < u_minus.p - tol) or np.any(p_arr > p_max + tol):
        raise OutOfPolarError(
            f"pressure outside polar range [{float(np.min(u_minus.p)):.6g}, {float(np.max(p_max)):.6g}]"
        )
    return np.clip(p_arr, u_minus.p, p_max)


def polar_state_at_pressure(model, u_minus, p, branch=UPPER):
    _require_supersonic(model, u_minus)
    p = _check_polar_range(model, p, u_minus)
    g = model.gamma
    dm = derived(model, u_minus)
    t = polar_tan_deflection(model, p, u_minus, branch)
    # velocity components in the frame aligned with the upstream flow
    u_par = u_minus.q - (p - u_minus.p) / (dm.rho * u_minus.q)
    q = u_par * np.sqrt(1.0 + t * t)
    rho = ((g + 1.0) * p + (g - 1.0) * u_minus.p) / ((g - 1.0) * p + (g + 1.0) * u_minus.p) * dm.rho
    theta = u_minus.theta + np.arctan(t)
    down = GasState.from_density(model, p, rho, theta, q)
    return PolarPoint(theta=theta, p=p, downstream=down, branch=branch)


def polar_curve(model, u_minus, n=201):
    """Sample both branches; rows ordered from (theta_-, p_-) to A and back."""
    p_max = float(polar_max_pressure(model, u_minus))
    s = np.linspace(0.0, 1.0, n)
    p = u_minus.p + (p_max - u_minus.p) * np.sin(0.5 * np.pi * s) ** 2
    upper = polar_state_at_pressure(model, u_minus, p, UPPER)
    lower = polar_state_at_pressure(model, u_minus, p[::-1], LOWER)
    return upper, lower


def polar_critical_points(model, u_minus):
    _require_supersonic(model, u_minus)
    p_minus = float(u_minus.p)
    p_max = float(polar_max_pressure(model, u_minus))
    span = p_max - p_minus

    # theta is maximal where the polar right-hand side is stationary
    slope = lambda p: float(_polar_rhs_slope(model, p, u_minus))
    lo, hi = p_minus + 1e-9 * span, p_max - 1e-12 * span
    p_star = _bisect(slope, lo, hi, 1e-13 * span)
    theta_star = float(np.arctan(polar_tan_deflection(model, p_star, u_minus)))

    def mach_excess(p):
        down = polar_state_at_pressure(model, u_minus, p).downstream
        return float(mach_squared(model, down)) - 1.0

    p_sonic = _bisect(mach_excess, p_minus + 1e-12 * span, p_max, 1e-13 * span)
    theta_sonic = float(np.arctan(polar_tan_deflection(model, p_sonic, u_minus)))
    return PolarCriticalPoints(p_max, p_star, theta_star, p_sonic, theta_sonic)


def _bisect(f, a, b, xtol, max_iter=200):
    fa, fb = f(a), f(b)
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    if np.sign(fa) == np.sign(fb):
        raise DomainError("bisection bracket does not straddle a root")
    for _ in range(max_iter):
        m = 0.5 * (a + b)
        fm = f(m)
        if fm == 0.0 or 0.5 * (b - a) < xtol:
            return m
        if np.sign(fm) == np.sign(fa):
            a, fa = m, fm
        else:
            b = m
    return 0.5 * (a + b)


# ---------------------------------------------------------------- level sets

def h1_residual_and_gradient(model, theta, p, u_minus, branch=UPPER, p_star=None):
    """Polar level set tan(theta - theta_-) -/+ RHS(p) and its gradient.

    Oriented so that d_p > 0 above the critical pressure on either branch.
    Returns ``(value, d_theta, d_p, certificate)`` where the certificate
    states d_p > 0 with p > p_star (None when p_star is not supplied).
    """
    sign = _branch_sign(branch)
    _check_polar_range(model, p, u_minus)
    m2 = mach_squared(model, u_minus)
    X, Z, W = _polar_terms(model, p, u_minus.p, m2)
    if np.any(Z / W <= 0):
        raise OutOfPolarError("polar radicand is not positive; gradient undefined")
    rhs = polar_tan_deflection(model, p, u_minus, UPPER)
    d = theta - u_minus.theta
    value = sign * np.tan(d) - rhs
    d_theta = sign / np.cos(d) ** 2
    d_p = -_polar_rhs_slope(model, p, u_minus)
    cert = None
    if p_star is not None:
        cert = bool(np.all(d_p > 0) and np.all(np.asarray(p) > p_star))
    return value, d_theta, d_p, cert


def h1_smooth(model, theta, p, p_minus, theta_minus, q_minus, s_minus):
    """Polynomial form of the polar level set, smooth through the normal-shock point.

    Squaring the polar relation removes the square root whose derivative
    blows up at the maximum pressure; the zero set is both branches.
    """
    g = model.gamma
    rho_m = model.density(p_minus, s_minus)
    m2 = q_minus ** 2 * rho_m / (g * p_minus)
    X, Z, W = _polar_terms(model, p, p_minus, m2)
    t = np.tan(theta - theta_minus)
    return t * t * (g * m2 - X) ** 2 * W - X * X * Z


def h1_smooth_gradients(model, u_plus, u_minus):
    """Complex-step gradients of ``h1_smooth``.

    Returns (d_theta, d_p, grad_minus) where grad_minus has a trailing axis
    ordered as (p_-, theta_-, q_-, s_-).
    """
    args = [u_plus.theta, u_plus.p, u_minus.p, u_minus.theta, u_minus.q, u_minus.s]
    args = [np.asarray(a, dtype=float) for a in args]
    grads = []
    for k in range(6):
        z = [a.astype(complex) for a in args]
        z[k] = z[k] + 1j * _CSTEP
        grads.append(np.imag(h1_smooth(model, *z)) / _CSTEP)
    d_theta, d_p = grads[0], grads[1]
    grad_minus = np.stack([grads[2], grads[3], grads[4], grads[5]], axis=-1)
    return d_theta, d_p, grad_minus


# ---------------------------------------------------------------- Lagrangian R-H

def rh_residuals(model, u_plus, u_minus, psi_slope, printed_g1=False):
    """Jump conditions across the front xi = psi(eta) in Lagrangian form.

    The first condition comes from the mass-conservation form after
    eliminating psi' with the fourth; it carries ``+ [v/u][v]``. Setting
    ``printed_g1`` evaluates the variant with a minus sign instead, which
    is not satisfied by shock-polar states and is kept for comparison only.
    """
    dp = derived(model, u_plus, check=False)
    dm = derived(model, u_minus, check=False)
    jp = u_plus.p - u_minus.p
    jv = dp.v_comp - dm.v_comp

    def jump(fp, fm):
        return fp - fm

    g1_sign = -1.0 if printed_g1 else 1.0
    G1 = jump(1.0 / (dp.rho * dp.u_comp), 1.0 / (dm.rho * dm.u_comp)) * jp \
        + g1_sign * jump(dp.v_comp / dp.u_comp, dm.v_comp / dm.u_comp) * jv
    G2 = jump(dp.u_comp + u_plus.p / (dp.rho * dp.u_comp), dm.u_comp + u_minus.p / (dm.rho * dm.u_comp)) * jp \
        + jump(u_plus.p * dp.v_comp / dp.u_comp, u_minus.p * dm.v_comp / dm.u_comp) * jv
    G3 = dp.bernoulli_B - dm.bernoulli_B
    G4 = jv - psi_slope * jp
    return G1, G2, G3, G4


def _rh_stack(model, x, u_minus, psi_slope):
    u = GasState(x[..., 0], x[..., 1], x[..., 2], x[..., 3])
    return np.stack(rh_residuals(model, u, u_minus, psi_slope), axis=-1)


def _rh_jacobian(model, x, u_minus, psi_slope):
    cols = []
    for k in range(4):
        xc = x.astype(complex)
        xc[..., k] += 1j * _CSTEP
        cols.append(np.imag(_rh_stack(model, xc, u_minus, psi_slope)) / _CSTEP)
    return np.stack(cols, axis=-1)


def _admissible(model, x):
    p, th, q, s = x[..., 0], x[..., 1], x[..., 2], x[..., 3]
    with np.errstate(invalid="ignore", over="ignore"):
        ok = (p > 0) & (q > 0) & (np.cos(th) > 0) & np.isfinite(s)
        m2 = np.where(ok, q * q * model.density(np.abs(p), s) / (model.gamma * np.abs(p)), 2.0)
    return ok & (m2 < 1.0)


def _normal_guess(model, u_minus):
    """Vectorized normal-shock downstream state (theta carried through)."""
    g = model.gamma
    rho = model.density(u_minus.p, u_minus.s)
    a = 0.5 * u_minus.q ** 2
    b = g * u_minus.p / ((g - 1.0) * rho)
    e = g * u_minus.q ** 2 / (g - 1.0)
    r = (e - a) / (a + b)
    p_plus = u_minus.p + rho * u_minus.q ** 2 * (1.0 - 1.0 / r)
    s_plus = model.entropy(p_plus, r * rho)
    return np.stack(np.broadcast_arrays(p_plus, u_minus.theta, u_minus.q / r, s_plus), axis=-1).astype(float)


def h3_downstream(model, u_minus, psi_slope, guess=None, tol=1e-14, max_iter=60):
    """Subsonic downstream state solving the four Lagrangian jump conditions.

    Works pointwise over arrays of upstream states and slopes. Damped Newton
    from the normal-shock state (or ``guess``) with every iterate kept
    subsonic; points that fail fall back to bisection along the subsonic arc.
    """
    _require_supersonic(model, u_minus)
    shape = np.broadcast(np.asarray(u_minus.p), np.asarray(psi_slope)).shape
    um = GasState(*(np.broadcast_to(np.asarray(a, dtype=float), shape) for a in
                    (u_minus.p, u_minus.theta, u_minus.q, u_minus.s)))
    slope = np.broadcast_to(np.asarray(psi_slope, dtype=float), shape)
    x = _normal_guess(model, um) if guess is None else np.array(guess.as_array(), dtype=float).reshape(shape + (4,))
    scale = np.stack(np.broadcast_arrays(um.p, 1.0, um.q, 1.0), axis=-1)
    xs = x.reshape(-1, 4)
    ums = GasState(*(a.reshape(-1) for a in (um.p, um.theta, um.q, um.s)))
    sl = slope.reshape(-1)

    G = _rh_stack(model, xs, ums, sl)
    done = np.zeros(len(xs), dtype=bool)
    for _ in range(max_iter):
        res = np.max(np.abs(G), axis=-1)
        done = res <= tol
        if np.all(done):
            break
        J = _rh_jacobian(model, xs, ums, sl)
        with np.errstate(all="ignore"):
            try:
                dx = np.linalg.solve(J, -G[..., None])[..., 0]
            except np.linalg.LinAlgError:
                dx = np.zeros_like(xs)
        dx[done] = 0.0
        alpha = np.ones(len(xs))
        accepted = done.copy()
        x_new = xs.copy()
        G_new = G.copy()
        for _ in range(30):
            trial = xs + alpha[:, None] * dx
            ok = _admissible(model, trial) & ~accepted
            if np.any(ok):
                Gt = np.full_like(G, np.inf)
                Gt[ok] = _rh_stack(model, trial[ok], ums.at(ok), sl[ok])
                better = ok & (np.max(np.abs(Gt), axis=-1) < np.maximum(res, tol) * (1 - 1e-4 * alpha) + 1e-300)
                # a residual already at round-off level may not decrease further
                better |= ok & (np.max(np.abs(Gt), axis=-1) <= tol)
                x_new[better] = trial[better]
                G_new[better] = Gt[better]
                accepted |= better
            if np.all(accepted):
                break
            alpha = np.where(accepted, alpha, 0.5 * alpha)
        stalled = ~accepted
        xs, G = x_new, G_new
        if np.all(stalled | done):
            break
    res = np.max(np.abs(G), axis=-1)
    bad = np.where(~(res <= max(tol, 1e-11)))[0]
    for k in bad:
        xs[k] = _h3_arc_bisection(model, ums.at(k), float(sl[k]))
    out = xs.reshape(shape + (4,))
    return GasState(out[..., 0], out[..., 1], out[..., 2], out[..., 3])


def _h3_arc_bisection(model, u_minus, slope, n_scan=401):
    """Scan the subsonic arc for a root of G4, then bisect on it."""
    u_minus = GasState(float(u_minus.p), float(u_minus.theta), float(u_minus.q), float(u_minus.s))
    try:
        crit = polar_critical_points(model, u_minus)
    except DomainError as exc:
        raise NoShockError(f"polar critical points unavailable: {exc}") from exc
    p_max, p_lo = crit.p_max, crit.p_sonic + 1e-9 * (crit.p_max - crit.p_sonic)

    def state(t):
        p = p_max - abs(t) * (p_max - p_lo)
        return polar_state_at_pressure(model, u_minus, p, UPPER if t >= 0 else LOWER).downstream

    def g4(t):
        return float(rh_residuals(model, state(t), u_minus, slope)[3])

    ts = np.linspace(-1.0, 1.0, n_scan)
    vals = np.array([g4(t) for t in ts])
    idx = np.where(np.sign(vals[:-1]) * np.sign(vals[1:]) <= 0)[0]
    if len(idx) == 0:
        raise NoShockError(f"no subsonic R-H root for front slope {slope:.6g}")
    k = idx[np.argmin(np.abs(ts[idx]))]
    t = _bisect(g4, ts[k], ts[k + 1], 1e-15)
    return state(t).as_array()


def rh_jump_max(model, u_plus, u_minus, psi_slope):
    return float(np.max(np.abs(np.stack(rh_residuals(model, u_plus, u_minus, psi_slope)))))
