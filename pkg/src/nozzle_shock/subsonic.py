"""Subsonic region behind the shock on the fixed rectangle (xi0, L) x (0, eta0).

The shock xi = psi(eta) is mapped to xi~ = xi0 by the stretch
xi = L + S(eta) (xi~ - L), S = (L - psi) / (L - xi0). In these coordinates
the flow angle solves a divergence-form elliptic equation with Dirichlet
walls and oblique conditions on the shock and the exit; pressure, speed
and entropy are then recovered line by line.
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.integrate import cumulative_trapezoid
from scipy.sparse.linalg import spsolve

from .errors import DomainError, EllipticityError, RegimeError, SolverError
from .gas import GasState


# ---------------------------------------------------------------- grid and geometry

@dataclass(frozen=True)
class FixedDomainGrid:
    nx: int
    ny: int
    xi0: float
    L: float
    eta0: float

    def __post_init__(self):
        if self.nx < 8 or self.ny < 8:
            raise DomainError(f"grid needs at least 8 cells per direction, got {self.nx}x{self.ny}")
        if not self.xi0 < self.L:
            raise DomainError("xi0 must be less than L")

    @property
    def xi(self):
        return np.linspace(self.xi0, self.L, self.nx + 1)

    @property
    def eta(self):
        return np.linspace(0.0, self.eta0, self.ny + 1)

    @property
    def hx(self):
        return (self.L - self.xi0) / self.nx

    @property
    def hy(self):
        return self.eta0 / self.ny

    @property
    def shape(self):
        return (self.nx + 1, self.ny + 1)

    def corner_collar(self, width=1):
        """Boolean mask that is False within ``width`` cells of any corner."""
        mask = np.ones(self.shape, dtype=bool)
        w = width + 1
        for i_sl in (slice(0, w), slice(self.nx + 1 - w, None)):
            for j_sl in (slice(0, w), slice(self.ny + 1 - w, None)):
                mask[i_sl, j_sl] = False
        return mask


@dataclass(frozen=True)
class ShockGeometry:
    """Front position psi and slope psi' on the eta nodes."""
    psi: np.ndarray
    slope: np.ndarray

    @classmethod
    def from_slope(cls, eta, xi_star, slope):
        slope = np.broadcast_to(np.asarray(slope, dtype=float), eta.shape).copy()
        from_top = cumulative_trapezoid(slope[::-1], eta[::-1], initial=0.0)[::-1]
        return cls(psi=xi_star + from_top, slope=slope)

    @property
    def xi_star(self):
        return float(self.psi[-1])

    def stretch(self, grid):
        S = (grid.L - self.psi) / (grid.L - grid.xi0)
        dS = -self.slope / (grid.L - grid.xi0)
        return S, dS

    def physical_xi(self, grid):
        S, _ = self.stretch(grid)
        return grid.L + S[None, :] * (grid.xi[:, None] - grid.L)

    def metric(self, grid):
        """Stretch S and the shear g = -S' (xi~ - L) / S on the node grid."""
        S, dS = self.stretch(grid)
        g = -dS[None, :] * (grid.xi[:, None] - grid.L) / S[None, :]
        return np.broadcast_to(S[None, :], grid.shape), g


# ---------------------------------------------------------------- coefficients

def _subsonic_parts(model, u):
    rho = model.density(u.p, u.s)
    m2 = u.q * u.q * rho / (model.gamma * u.p)
    cos_t = np.cos(u.theta)
    return rho, m2, cos_t


def _first_bad(mask):
    idx = np.argwhere(np.atleast_1d(mask))
    return tuple(int(i) for i in idx[0]) if len(idx) else None


def theta_coefficients(model, u):
    rho, m2, cos_t = _subsonic_parts(model, u)
    bad = (np.asarray(m2) >= 1.0) | (np.asarray(cos_t) <= 0.0)
    if np.any(bad):
        loc = _first_bad(bad)
        raise EllipticityError(
            f"ellipticity lost (M^2={float(np.atleast_1d(m2)[loc]):.6g}, "
            f"cos(theta)={float(np.atleast_1d(cos_t)[loc]):.6g}) at node {loc}",
            location={"node": loc})
    den = (1.0 - m2) * cos_t
    q = u.q
    a11 = q * (1.0 - m2 * cos_t ** 2) / den
    a12 = -rho * q * q * np.sin(u.theta) / den
    a22 = rho ** 2 * q ** 3 / den
    tr, det = a11 + a22, a11 * a22 - a12 ** 2
    lam = 0.5 * tr - np.sqrt(np.maximum(0.25 * tr * tr - det, 0.0))
    if np.any(lam <= 0):
        loc = _first_bad(lam <= 0)
        raise EllipticityError(f"coefficient matrix not positive definite at node {loc}", location={"node": loc})
    return a11, a12, a22, lam


def exit_oblique_coeffs(model, u):
    a11, a12, _, _ = theta_coefficients(model, u)
    return a11, -a12


def shock_conormal_vector(model, u_plus, psi_slope, d_theta, d_p):
    """Physical-coordinate vector l with l . grad(theta) = rhs on the shock."""
    rho, m2, cos_t = _subsonic_parts(model, u_plus)
    q, sin_t = u_plus.q, np.sin(u_plus.theta)
    den = (1.0 - m2) * cos_t
    k = psi_slope
    l1 = -k * d_theta + q * (k * rho * q * sin_t + 1.0 - m2 * cos_t ** 2) * d_p / den
    l2 = -d_theta - q * (k * rho ** 2 * q * q + rho * q * sin_t) * d_p / den
    return l1, l2


def shock_oblique_coeffs(model, u_plus, u_minus, psi_slope, du_minus_deta=None, p_star=None, eps_p=0.0):
    """Oblique shock condition A_s d_n theta + B_s d_tau theta = f_s.

    Uses the smooth polar level set, so the gradient stays finite at the
    normal-shock point. ``du_minus_deta`` is the derivative of the upstream
    trace along the front, shape (..., 4) ordered (p, theta, q, s).
    Returns (A_s, B_s, f_s, l) with l the unnormalized physical vector.
    """
    from .shock_relations import h1_smooth_gradients
    if p_star is not None:
        low = np.asarray(u_plus.p) <= p_star + eps_p
        if np.any(low):
            loc = _first_bad(low)
            raise RegimeError(
                f"shock-trace pressure {float(np.atleast_1d(u_plus.p)[loc]):.6g} <= p_star + eps "
                f"({p_star + eps_p:.6g}) at trace node {loc}", location={"trace_node": loc})
    d_theta, d_p, grad_minus = h1_smooth_gradients(model, u_plus, u_minus)
    l1, l2 = shock_conormal_vector(model, u_plus, psi_slope, d_theta, d_p)
    norm = np.sqrt(1.0 + np.asarray(psi_slope) ** 2)
    A_s = (l1 - psi_slope * l2) / norm ** 2
    B_s = (-psi_slope * l1 - l2) / norm ** 2
    if du_minus_deta is None:
        f_s = np.zeros_like(np.asarray(A_s, dtype=float))
        rhs = f_s
    else:
        rhs = np.sum(grad_minus * du_minus_deta, axis=-1)
        f_s = rhs / norm
    if np.any(np.asarray(A_s) <= 0):
        loc = _first_bad(np.asarray(A_s) <= 0)
        raise RegimeError(f"shock obliqueness coefficient A_s not positive at trace node {loc}",
                          location={"trace_node": loc})
    return A_s, B_s, f_s, (l1, l2, rhs)


def transformed_coefficients(a11, a12, a22, S, g):
    """Coefficients of the theta equation after the fixed-domain stretch."""
    A11 = a11 / S + 2.0 * g * a12 + g * g * a22 * S
    A12 = a12 + g * S * a22
    A22 = S * a22
    return A11, A12, A22


# ---------------------------------------------------------------- linear solve

@dataclass
class ThetaBCs:
    bottom: np.ndarray            # Dirichlet values along eta = 0, length nx+1
    top: np.ndarray               # Dirichlet values along eta = eta0
    shock_m: tuple                # (m1, m2, rhs) arrays of length ny+1 at xi~ = xi0
    exit_m: tuple                 # (m1, m2, rhs) at xi~ = L


@dataclass(frozen=True)
class ThetaSolution:
    theta: np.ndarray
    residual: float              # relative backward error of the sparse solve
    residual_abs: float


def assemble_theta_system(grid, A11, A12, A22, bcs, source=None):
    nx, ny = grid.nx, grid.ny
    hx, hy = grid.hx, grid.hy
    N = (nx + 1) * (ny + 1)
    idx = np.arange(N).reshape(nx + 1, ny + 1)
    rows, cols, vals = [], [], []
    rhs = np.zeros(N)

    def add(r, c, v):
        r, c, v = np.broadcast_arrays(r, c, v)
        rows.append(r.ravel())
        cols.append(c.ravel())
        vals.append(v.ravel())

    # interior: -div(A grad theta) = -source
    I, J = np.meshgrid(np.arange(1, nx), np.arange(1, ny), indexing="ij")
    r = idx[I, J]
    ae = 0.5 * (A11[I, J] + A11[I + 1, J]) / hx ** 2
    aw = 0.5 * (A11[I, J] + A11[I - 1, J]) / hx ** 2
    an = 0.5 * (A22[I, J] + A22[I, J + 1]) / hy ** 2
    as_ = 0.5 * (A22[I, J] + A22[I, J - 1]) / hy ** 2
    add(r, r, ae + aw + an + as_)
    add(r, idx[I + 1, J], -ae)
    add(r, idx[I - 1, J], -aw)
    add(r, idx[I, J + 1], -an)
    add(r, idx[I, J - 1], -as_)
    c = 1.0 / (4.0 * hx * hy)
    # d_x(A12 d_y theta) + d_y(A12 d_x theta)
    ce, cw = A12[I + 1, J] * c, A12[I - 1, J] * c
    cn, cs = A12[I, J + 1] * c, A12[I, J - 1] * c
    add(r, idx[I + 1, J + 1], -(ce + cn))
    add(r, idx[I + 1, J - 1], ce + cs)
    add(r, idx[I - 1, J + 1], cw + cn)
    add(r, idx[I - 1, J - 1], -(cw + cs))
    if source is not None:
        rhs[r.ravel()] = -np.asarray(source)[I, J].ravel()

    # walls (corners included)
    for j, vals_wall in ((0, bcs.bottom), (ny, bcs.top)):
        rr = idx[:, j]
        add(rr, rr, np.ones(nx + 1))
        rhs[rr] = np.broadcast_to(vals_wall, (nx + 1,))

    # oblique rows, scaled by hx so entries are O(1/h) like the stencil
    js = np.arange(1, ny)
    for i, (m1, m2, g), sgn in ((0, bcs.shock_m, -1), (nx, bcs.exit_m, 1)):
        m1 = np.broadcast_to(m1, (ny + 1,))[js]
        m2 = np.broadcast_to(m2, (ny + 1,))[js]
        g = np.broadcast_to(g, (ny + 1,))[js]
        rr = idx[i, js]
        i1, i2 = i - sgn, i - 2 * sgn
        # second-order one-sided difference pointing into the domain
        add(rr, rr, sgn * 3.0 * m1 / (2 * hx))
        add(rr, idx[i1, js], -sgn * 4.0 * m1 / (2 * hx))
        add(rr, idx[i2, js], sgn * m1 / (2 * hx))
        add(rr, idx[i, js + 1], m2 / (2 * hy))
        add(rr, idx[i, js - 1], -m2 / (2 * hy))
        rhs[rr] = g

    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N))
    return A, rhs


def solve_theta(grid, A11, A12, A22, bcs, source=None, tol=1e-10):
    A, b = assemble_theta_system(grid, A11, A12, A22, bcs, source)
    x = spsolve(A.tocsc(), b)
    if not np.all(np.isfinite(x)):
        raise SolverError("sparse solve produced non-finite values")
    r = A @ x - b
    res_abs = float(np.max(np.abs(r)))
    scale = float(abs(A).max() * np.max(np.abs(x)) + np.max(np.abs(b))) or 1.0
    res = res_abs / scale
    if res > tol:
        raise SolverError(f"linear residual {res:.3e} exceeds tolerance {tol:.1e}")
    return ThetaSolution(theta=x.reshape(grid.shape), residual=res, residual_abs=res_abs)


# ---------------------------------------------------------------- fields and recovery

@dataclass(frozen=True)
class FieldSet:
    p: np.ndarray
    theta: np.ndarray
    q: np.ndarray
    s: np.ndarray

    def state(self):
        return GasState(self.p, self.theta, self.q, self.s)

    def sup_diff(self, other, mask=None):
        diffs = []
        for k in ("p", "theta", "q", "s"):
            d = np.abs(getattr(self, k) - getattr(other, k))
            diffs.append(float(np.max(d[mask] if mask is not None else d)))
        return max(diffs)

    @classmethod
    def uniform(cls, grid, state, theta=None):
        shape = grid.shape
        th = np.full(shape, float(state.theta)) if theta is None else np.broadcast_to(theta, shape).copy()
        return cls(np.full(shape, float(state.p)), th, np.full(shape, float(state.q)), np.full(shape, float(state.s)))


def physical_gradient(grid, geometry, f):
    """(d_xi f, d_eta f) in physical coordinates from computational differences."""
    S, g = geometry.metric(grid)
    fx = np.gradient(f, grid.xi, axis=0, edge_order=2)
    fy = np.gradient(f, grid.eta, axis=1, edge_order=2)
    return fx / S, fy + g * fx


def recover_p(grid, geometry, theta, a11, a12, a22, exit_value):
    """Integrate d_xi p = a12 theta_xi + a22 theta_eta inward from the exit.

    Returns (p, loop_mismatch) where the mismatch compares the eta-derivative
    of the recovered p with the second row of the gradient relation.
    """
    S, g = geometry.metric(grid)
    tx, ty = physical_gradient(grid, geometry, theta)
    dp_dxi_c = S * (a12 * tx + a22 * ty)        # derivative in xi~
    from_exit = cumulative_trapezoid(dp_dxi_c[::-1], grid.xi[::-1], axis=0, initial=0.0)[::-1]
    p = exit_value + from_exit
    # audit: computational eta-derivative vs relation for d_eta p
    dp_eta_phys = -a11 * tx - a12 * ty
    dp_xi_phys = a12 * tx + a22 * ty
    S_, dS = geometry.stretch(grid)
    shear = dS[None, :] * (grid.xi[:, None] - grid.L)
    predicted = dp_eta_phys + shear * dp_xi_phys
    measured = np.gradient(p, grid.eta, axis=1, edge_order=2)
    mism = np.abs(measured - predicted)
    mask = grid.corner_collar(1)
    return p, float(np.max(mism[mask]))


def recover_q_s(model, p, trace):
    """Entropy and Bernoulli constant carried along each eta-line from the shock trace."""
    s = np.broadcast_to(np.asarray(trace.s)[None, :], p.shape).copy()
    B = 0.5 * np.asarray(trace.q) ** 2 + model.enthalpy(trace.p, trace.s)
    B = np.broadcast_to(B[None, :], p.shape)
    q2 = 2.0 * (B - model.enthalpy(p, s))
    if np.any(q2 <= 0):
        loc = _first_bad(q2 <= 0)
        raise RegimeError(f"Bernoulli inversion failed (q^2 <= 0) at node {loc}", location={"node": loc})
    return np.sqrt(q2), s


def conservation_audit(model, grid, fields):
    """Independent differences of s and q^2/2 + i along each eta-line."""
    bern = 0.5 * fields.q ** 2 + model.enthalpy(fields.p, fields.s)
    d_s = np.max(np.abs(np.diff(fields.s, axis=0))) / grid.hx
    d_b = np.max(np.abs(np.diff(bern, axis=0))) / grid.hx
    return {"entropy_dxi": float(d_s), "bernoulli_dxi": float(d_b)}


# ---------------------------------------------------------------- hypotheses

@dataclass
class HypothesisReport:
    eps: float
    mach_ok: bool
    mach_margin: float
    mach_location: object
    pressure_ok: bool
    pressure_margin: float
    pressure_location: object
    u_ok: bool
    u_min: float
    u_location: object
    details: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.mach_ok and self.pressure_ok and self.u_ok

    def as_dict(self):
        return {
            "passed": self.passed, "eps": self.eps,
            "mach": {"passed": self.mach_ok, "margin": self.mach_margin, "worst_node": self.mach_location},
            "shock_pressure": {"passed": self.pressure_ok, "margin": self.pressure_margin,
                               "worst_trace_node": self.pressure_location},
            "horizontal_velocity": {"passed": self.u_ok, "min": self.u_min, "worst_node": self.u_location},
        }

    def raise_if_failed(self, grid=None):
        if self.passed:
            return
        msgs, loc = [], {}
        if not self.mach_ok:
            msgs.append(f"M^2 exceeds 1-eps by {-self.mach_margin:.3g} at node {self.mach_location}")
            loc["mach_node"] = self.mach_location
            if grid is not None and self.mach_location is not None:
                i, j = self.mach_location
                loc["mach_xi_eta"] = (float(grid.xi[i]), float(grid.eta[j]))
        if not self.pressure_ok:
            msgs.append(f"shock pressure below p_star+eps by {-self.pressure_margin:.3g} "
                        f"at trace node {self.pressure_location}")
            loc["pressure_trace_node"] = self.pressure_location
        if not self.u_ok:
            msgs.append(f"horizontal velocity not positive at node {self.u_location}")
            loc["u_node"] = self.u_location
        raise RegimeError("outside uniqueness regime: " + "; ".join(msgs), location=loc)


def check_hypotheses(model, fields, trace, background, eps):
    m2 = fields.q ** 2 * model.density(fields.p, fields.s) / (model.gamma * fields.p)
    mach_margin_field = (1.0 - eps) - m2
    k = np.unravel_index(np.argmin(mach_margin_field), m2.shape)
    p_tr = np.asarray(trace.p)
    p_margin = p_tr - (background.p_star + eps)
    kp = int(np.argmin(p_margin))
    u = fields.q * np.cos(fields.theta)
    ku = np.unravel_index(np.argmin(u), u.shape)
    return HypothesisReport(
        eps=eps,
        mach_ok=bool(np.min(mach_margin_field) >= 0), mach_margin=float(np.min(mach_margin_field)),
        mach_location=tuple(int(i) for i in k),
        pressure_ok=bool(np.min(p_margin) >= 0), pressure_margin=float(np.min(p_margin)), pressure_location=kp,
        u_ok=bool(np.min(u) > 0), u_min=float(np.min(u)), u_location=tuple(int(i) for i in ku),
        details={"max_mach2": float(np.max(m2)), "min_trace_p": float(np.min(p_tr)), "p_star": background.p_star},
    )
