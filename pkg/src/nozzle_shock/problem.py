"""Problem ingestion: geometry, inflow profiles, background shock and derived constants."""
from dataclasses import dataclass, field, replace
import csv
import math

import numpy as np
from scipy.integrate import cumulative_simpson, simpson
from scipy.interpolate import CubicHermiteSpline, CubicSpline

from .errors import ConfigError, DomainError, InputError
from .gas import GasModel, GasState, derived, mach_squared, state_from_mach
from .shock_relations import normal_shock_downstream, polar_critical_points, rh_residuals


@dataclass(frozen=True)
class NozzleSpec:
    L: float = 1.0
    sigma: float = 0.01
    xi0: float = 0.5
    sigma_cap: float = 0.05
    force: bool = False

    def __post_init__(self):
        if not self.L > 0:
            raise ConfigError(f"L must be positive, got {self.L}")
        if not 0 < self.xi0 < self.L:
            raise ConfigError(f"xi0 must lie in (0, L), got {self.xi0}")
        if self.sigma < 0:
            raise ConfigError(f"sigma must be non-negative, got {self.sigma}")
        if self.sigma > self.sigma_cap and not self.force:
            raise ConfigError(f"sigma={self.sigma} exceeds the cap {self.sigma_cap}; pass --force to override")

    def wall_height(self, x1):
        return 1.0 + x1 * math.tan(self.sigma)


# ---------------------------------------------------------------- profiles

class Profile:
    """Scalar profile on [0, 1] with value and derivative access.

    Built-ins evaluate analytic formulas; tabulated profiles use a cubic
    spline for values and one-sided second-order differences for the
    endpoint derivatives.
    """

    def __init__(self, name, xs, values, builtin=None, scale=1.0):
        self.name = name
        self.xs = np.asarray(xs, dtype=float)
        self.values = np.asarray(values, dtype=float)
        self.builtin = builtin
        self.scale = float(scale)
        if builtin is None:
            self._spline = CubicSpline(self.xs, self.values)

    def _formula(self, order, x):
        return self.scale * BUILTINS[self.builtin][order](np.asarray(x, dtype=float))

    def __call__(self, x):
        if self.builtin is not None:
            return self._formula(0, x)
        return self._spline(x)

    def derivative(self, x, order=1):
        if self.builtin is not None:
            return self._formula(order, x)
        return self._spline(x, order)

    def endpoint_derivatives(self):
        """(f'(0), f''(0), f'(1), f''(1))."""
        if self.builtin is not None:
            return tuple(float(self._formula(k, x)) for x in (0.0, 1.0) for k in (1, 2))
        return one_sided_derivatives(self.xs, self.values)

    def scaled(self, factor):
        name = f"{self.name}*{factor:g}"
        if self.builtin is not None:
            return Profile(name, self.xs, factor * self.values, self.builtin, self.scale * factor)
        return Profile(name, self.xs, factor * self.values)

    @property
    def is_zero(self):
        return not np.any(self.values)


def one_sided_derivatives(xs, values):
    if len(xs) < 5:
        raise InputError(f"profile needs at least 5 samples, got {len(xs)}")
    h = xs[1] - xs[0]
    f = values
    d1_0 = (-3 * f[0] + 4 * f[1] - f[2]) / (2 * h)
    d2_0 = (2 * f[0] - 5 * f[1] + 4 * f[2] - f[3]) / h ** 2
    d1_1 = (3 * f[-1] - 4 * f[-2] + f[-3]) / (2 * h)
    d2_1 = (2 * f[-1] - 5 * f[-2] + 4 * f[-3] - f[-4]) / h ** 2
    return float(d1_0), float(d2_0), float(d1_1), float(d2_1)


_TWO_PI = 2.0 * np.pi


def _zero(x):
    return 0.0 * x


def _one(x):
    return 1.0 + 0.0 * x


def _identity(x):
    return 1.0 * x


def _bump(x):
    return np.sin(np.pi * x) ** 2


def _bump_d1(x):
    return np.pi * np.sin(_TWO_PI * x)


def _bump_d2(x):
    return _TWO_PI * np.pi * np.cos(_TWO_PI * x)


# rises from 0 to 1 with zero slope and curvature at both ends
def _ramp(x):
    return x - np.sin(_TWO_PI * x) / _TWO_PI


def _ramp_d1(x):
    return 1.0 - np.cos(_TWO_PI * x)


def _ramp_d2(x):
    return _TWO_PI * np.sin(_TWO_PI * x)


# name -> (value, first derivative, second derivative); module-level so profiles pickle
BUILTINS = {
    "zero": (_zero, _zero, _zero),
    "const": (_one, _zero, _zero),
    "affine": (_identity, _one, _zero),
    "bump": (_bump, _bump_d1, _bump_d2),
    "ramp": (_ramp, _ramp_d1, _ramp_d2),
}


def builtin_profile(name, scale=1.0, n=257):
    if name not in BUILTINS:
        raise InputError(f"unknown builtin profile {name!r}; choose from {sorted(BUILTINS)}")
    xs = np.linspace(0.0, 1.0, n)
    prof = Profile(name, xs, BUILTINS[name][0](xs), builtin=name)
    return prof if scale == 1.0 else prof.scaled(scale)


def load_profile_csv(path):
    xs, vals = [], []
    try:
        with open(path, newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh), start=1):
                if not row or row[0].strip().startswith("#"):
                    continue
                if len(row) != 2:
                    raise InputError(f"{path}:{lineno}: expected 2 columns (x2, value), got {len(row)}")
                try:
                    x, v = float(row[0]), float(row[1])
                except ValueError:
                    if not xs:  # header row
                        continue
                    raise InputError(f"{path}:{lineno}: non-numeric entry {row!r}")
                xs.append(x)
                vals.append(v)
    except OSError as exc:
        raise InputError(f"cannot read profile {path}: {exc}") from exc
    xs, vals = np.array(xs), np.array(vals)
    if len(xs) < 5:
        raise InputError(f"{path}: profile needs at least 5 samples, got {len(xs)}")
    if abs(xs[0]) > 1e-12 or abs(xs[-1] - 1.0) > 1e-12:
        raise InputError(f"{path}: x2 must run from 0 to 1")
    h = np.diff(xs)
    if np.any(h <= 0) or np.max(np.abs(h - h.mean())) > 1e-9:
        raise InputError(f"{path}: x2 samples must be uniform and increasing")
    if not np.all(np.isfinite(vals)):
        raise InputError(f"{path}: non-finite values")
    return Profile(str(path), xs, vals)


def resolve_profile(spec):
    """Builtin name, ``name:scale``, or a CSV path."""
    if isinstance(spec, Profile):
        return spec
    if spec is None:
        return builtin_profile("zero")
    text = str(spec)
    name, _, scale = text.partition(":")
    if name in BUILTINS:
        try:
            return builtin_profile(name, float(scale) if scale else 1.0)
        except ValueError:
            raise InputError(f"bad profile scale in {text!r}")
    return load_profile_csv(text)


@dataclass(frozen=True)
class InflowPerturbation:
    p0: Profile = field(default_factory=lambda: builtin_profile("zero"))
    theta0: Profile = field(default_factory=lambda: builtin_profile("ramp"))
    q0: Profile = field(default_factory=lambda: builtin_profile("zero"))
    s0: Profile = field(default_factory=lambda: builtin_profile("zero"))

    @classmethod
    def zero(cls):
        z = builtin_profile("zero")
        return cls(z, z, z, z)

    def at(self, x):
        return self.p0(x), self.theta0(x), self.q0(x), self.s0(x)


@dataclass(frozen=True)
class InletProfile:
    """Entrance state U_-(0, x2) = background + sigma * U0(x2)."""
    model: GasModel
    base: GasState
    perturbation: InflowPerturbation
    sigma: float

    def __call__(self, x):
        p0, t0, q0, s0 = self.perturbation.at(x)
        s = self.sigma
        return GasState(self.base.p + s * p0, self.base.theta + s * t0,
                        self.base.q + s * q0, self.base.s + s * s0)

    def mass_flux_density(self, x):
        u = self(x)
        return self.model.density(u.p, u.s) * u.q * np.cos(u.theta)


# ---------------------------------------------------------------- background

@dataclass(frozen=True)
class BackgroundShock:
    u_minus_bar: GasState
    u_plus_bar: GasState
    p_jump: float
    kappa: float
    kappa1: float
    kappa2: float
    eta0: float
    rho_minus: float
    rho_plus: float
    mach_minus2: float
    mach_plus2: float
    p_star: float
    p_sonic: float
    g_script: float = 0.0

    @property
    def mass_flux(self):
        return self.rho_minus * float(self.u_minus_bar.q)

    @property
    def exit_prefactor(self):
        """(1 - M+^2) / (rho+^2 q+^3)."""
        return (1.0 - self.mach_plus2) / (self.rho_plus ** 2 * float(self.u_plus_bar.q) ** 3)


def build_background(model, u_minus_bar):
    u_minus_bar = GasState(*(float(v) for v in (u_minus_bar.p, u_minus_bar.theta, u_minus_bar.q, u_minus_bar.s)))
    u_plus = normal_shock_downstream(model, u_minus_bar)
    dm, dp = derived(model, u_minus_bar), derived(model, u_plus)
    g = model.gamma
    pp, qp, rp = float(u_plus.p), float(u_plus.q), float(dp.rho)
    qm, rm = float(u_minus_bar.q), float(dm.rho)
    jump = pp - float(u_minus_bar.p)
    kappa = ((g - 1.0) / (g * pp) + 1.0 / (rp * qp ** 2)) * jump
    kappa1 = -(kappa + jump / (rp * qp ** 2)) / (rm * qm ** 2) - (g - 1.0) / (g * pp) * (1.0 - rp / rm)
    cm2, cp2 = float(dm.c) ** 2, float(dp.c) ** 2
    kappa2 = (kappa + (cm2 - cp2) / cp2) / (g * model.c_v)
    if not kappa > 0:
        raise DomainError(f"kappa must be positive, got {kappa}")
    res = np.abs(rh_residuals(model, u_plus, u_minus_bar, 0.0))
    if np.max(res) > 1e-10 * max(1.0, pp):
        raise DomainError(f"background R-H residual too large: {np.max(res):.3e}")
    crit = polar_critical_points(model, u_minus_bar)
    return BackgroundShock(
        u_minus_bar=u_minus_bar, u_plus_bar=u_plus, p_jump=jump,
        kappa=kappa, kappa1=kappa1, kappa2=kappa2, eta0=rm * qm,
        rho_minus=rm, rho_plus=rp,
        mach_minus2=float(dm.mach) ** 2, mach_plus2=float(dp.mach) ** 2,
        p_star=crit.p_star, p_sonic=crit.p_sonic,
    )


def background_from_parameters(model, p_minus=1.0, rho_minus=1.0, mach_minus=2.0):
    return build_background(model, state_from_mach(model, p_minus, rho_minus, mach_minus))


# ---------------------------------------------------------------- mass-flux coordinate

def _quadrature_grid(n):
    return np.linspace(0.0, 1.0, n)


def mass_flux_width(model, inlet, n=1025):
    x = _quadrature_grid(n)
    return float(simpson(inlet.mass_flux_density(x), x=x))


class Y0Map:
    """Inverse of eta(x2) = int_0^x2 (rho q cos theta)(0, s) ds at the entrance.

    Nodal slopes 1/(rho q cos theta) are known exactly, so the inverse is a
    cubic Hermite spline in eta.
    """

    def __init__(self, inlet, n=1025):
        x = _quadrature_grid(n)
        f = inlet.mass_flux_density(x)
        eta = cumulative_simpson(f, x=x, initial=0.0)
        self.eta0 = float(eta[-1])
        self._inlet = inlet
        self._spline = CubicHermiteSpline(eta, x, 1.0 / f)

    def __call__(self, eta):
        return np.clip(self._spline(eta), 0.0, 1.0)

    def derivative(self, eta):
        return 1.0 / self._inlet.mass_flux_density(self(eta))


def y0_map(model, inlet, n=1025):
    return Y0Map(inlet, n)


def profile_integrals(inlet, n=1025):
    """int_0^eta0 f(Y0(eta)) d eta for each perturbation profile, by x-substitution."""
    x = _quadrature_grid(n)
    w = inlet.mass_flux_density(x)
    p0, t0, q0, s0 = inlet.perturbation.at(x)
    integ = lambda f: float(simpson(np.broadcast_to(f, x.shape) * w, x=x))
    return {"p0": integ(p0), "theta0": integ(t0), "q0": integ(q0), "s0": integ(s0)}


# ---------------------------------------------------------------- receiver pressure

@dataclass(frozen=True)
class PeInterval:
    lo: float
    hi: float
    scaled_lo: float
    scaled_hi: float
    prefactor: float          # (1 - M+^2) eta0 / (rho+^2 q+^3)
    inflow_integral: float    # I, the inflow contribution to the solvability function
    g_script_printed: float   # the printed G integral, reported for comparison

    @property
    def width(self):
        return self.hi - self.lo

    @property
    def midpoint(self):
        return 0.5 * (self.lo + self.hi)

    def contains(self, pe):
        return self.lo < pe < self.hi


def inflow_integral(background, integrals):
    """Inflow term I of the reduced solvability function.

    I = (1/(rho+ q+)) int [(k1 + (1-k)(M-^2-1)/(rho- q-^2)) p0 + k1 rho- q- q0 + k2 s0] d eta
    """
    bg = background
    qm = float(bg.u_minus_bar.q)
    coef_p = bg.kappa1 + (1.0 - bg.kappa) * (bg.mach_minus2 - 1.0) / (bg.rho_minus * qm ** 2)
    total = coef_p * integrals["p0"] + bg.kappa1 * bg.mass_flux * integrals["q0"] + bg.kappa2 * integrals["s0"]
    return total / (bg.rho_plus * float(bg.u_plus_bar.q))


def g_script_printed(background, integrals):
    bg = background
    m = bg.mass_flux
    return ((1.0 - bg.kappa) * integrals["p0"]
            - (bg.kappa1 * (integrals["p0"] + m * integrals["q0"]) + bg.kappa2 * integrals["s0"]) / m)


def admissible_pe_interval(background, integrals, L, eta0=None):
    """Receiver-pressure interval for which the shock sits strictly inside (0, L).

    The scaled exit term c_p eta0 Pe must lie in ((1-k)L - I, L - I), the
    range swept by the solvability function's root as xi* crosses (0, L).
    """
    eta0 = background.eta0 if eta0 is None else eta0
    pref = background.exit_prefactor * eta0
    I = inflow_integral(background, integrals)
    s_lo, s_hi = (1.0 - background.kappa) * L - I, L - I
    return PeInterval(lo=s_lo / pref, hi=s_hi / pref, scaled_lo=s_lo, scaled_hi=s_hi,
                      prefactor=pref, inflow_integral=I,
                      g_script_printed=g_script_printed(background, integrals))


# ---------------------------------------------------------------- compatibility

@dataclass(frozen=True)
class CompatibilityCheck:
    name: str
    residual: float
    passed: bool
    note: str = ""


def _check(name, residual, scale, tol=1e-6, note=""):
    ok = abs(residual) <= tol * max(1.0, scale)
    return CompatibilityCheck(name, float(residual), bool(ok), note)


def validate_compatibility(model, inlet, sigma=None, tol=1e-6):
    """Corner compatibility of the inflow data with the walls.

    The top-corner angle condition is enforced as theta0(1) = 1 so that
    the entrance angle sigma*theta0(1) meets the wall angle sigma.
    """
    pert = inlet.perturbation
    sigma = inlet.sigma if sigma is None else sigma
    g, cv = model.gamma, model.c_v
    p0d1_0, p0d2_0, p0d1_1, p0d2_1 = pert.p0.endpoint_derivatives()
    t0d1_0, t0d2_0, t0d1_1, t0d2_1 = pert.theta0.endpoint_derivatives()
    q0d1_0, _, q0d1_1, _ = pert.q0.endpoint_derivatives()
    s0d1_0, _, s0d1_1, _ = pert.s0.endpoint_derivatives()

    u00, u01 = inlet(0.0), inlet(1.0)
    m2_00 = float(mach_squared(model, u00))
    m2_01 = float(mach_squared(model, u01))
    rho01 = float(model.density(u01.p, u01.s))
    q00, q01 = float(u00.q), float(u01.q)
    tan_s = math.tan(sigma)

    checks = [
        _check("theta0(0)=0", float(pert.theta0(0.0)), 1.0, tol),
        _check("theta0(1)=1", float(pert.theta0(1.0)) - 1.0, 1.0, tol,
               note="printed as theta0(1)=sigma; enforced as theta0(1)=1 to match the wall angle"),
        _check("p0'(0)=0", p0d1_0, 1.0, tol),
    ]
    # first-order top corner, multiplied through by tan(sigma) to stay finite as sigma -> 0
    a = t0d1_1 * tan_s
    b = (m2_01 - 1.0) / (rho01 * q01 ** 2) * p0d1_1
    checks.append(_check("theta0'(1) relation", a + b if sigma > 0 else b, max(abs(a), abs(b)), tol,
                         note="evaluated as tan(sigma)*theta0'(1) + (M^2-1)/(rho q^2) p0'(1)"))
    if sigma > 0:
        checks.append(_check("theta0'(1) relation (printed scale)", t0d1_1 + b / tan_s,
                             max(abs(t0d1_1), abs(b / tan_s)), tol))

    bottom_mix = s0d1_0 / (g * cv) - 2.0 * q0d1_0 / q00
    r_bottom = (m2_00 - 1.0) * t0d2_0 + bottom_mix * t0d1_0
    checks.append(_check("second-order (0,0)", r_bottom, max(abs((m2_00 - 1) * t0d2_0), abs(bottom_mix * t0d1_0)), tol))

    m4 = m2_01 ** 2
    sin_s, cos_s = math.sin(sigma), math.cos(sigma)
    m_hat = m2_01 - 1.0 - g * m4 * sin_s ** 2 + m2_01 * (1.0 + m4 - 2.0 * m2_01) * cos_s ** 2
    terms = [
        (m2_01 - 1.0 + tan_s ** 2) * t0d2_1,
        2.0 * (m2_01 - 1.0) * tan_s / (rho01 * q01 ** 2) * p0d2_1,
        (m2_01 - 1.0 + tan_s ** 2) / (m2_01 - 1.0) * (s0d1_1 / (g * cv) - 2.0 * q0d1_1 / q01) * t0d1_1,
        2.0 * m_hat * sin_s / ((m2_01 - 1.0) ** 2 * cos_s ** 3) * t0d1_1 ** 2,
    ]
    checks.append(_check("second-order (0,1)", sum(terms), max(abs(t) for t in terms), tol))
    return CompatibilityReport(checks)


@dataclass(frozen=True)
class CompatibilityReport:
    checks: list

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    @property
    def derivative_conditions_passed(self):
        return all(c.passed for c in self.checks if "'" in c.name or "second" in c.name)

    def failed(self):
        return [c.name for c in self.checks if not c.passed]

    def as_dict(self):
        return {
            "passed": self.passed,
            "checks": [{"name": c.name, "residual": c.residual, "passed": c.passed, "note": c.note}
                       for c in self.checks],
        }


# ---------------------------------------------------------------- bundle

@dataclass(frozen=True)
class ProblemSetup:
    model: GasModel
    background: BackgroundShock
    nozzle: NozzleSpec
    inflow: InflowPerturbation
    inlet: InletProfile
    eta0: float
    y0: Y0Map
    integrals: dict
    interval: PeInterval

    @property
    def sigma(self):
        return self.nozzle.sigma

    def with_sigma(self, sigma):
        return build_setup(self.model, self.background, replace(self.nozzle, sigma=sigma), self.inflow)


def build_setup(model, background, nozzle, inflow=None):
    inflow = InflowPerturbation() if inflow is None else inflow
    inlet = InletProfile(model, background.u_minus_bar, inflow, nozzle.sigma)
    for x in (0.0, 0.5, 1.0):
        if float(mach_squared(model, inlet(x))) <= 1.0:
            raise ConfigError("entrance state is not supersonic")
    y0 = y0_map(model, inlet)
    integrals = profile_integrals(inlet)
    interval = admissible_pe_interval(background, integrals, nozzle.L, y0.eta0)
    bg = replace(background, g_script=interval.g_script_printed)
    return ProblemSetup(model, bg, nozzle, inflow, inlet, y0.eta0, y0, integrals, interval)
