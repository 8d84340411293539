"""Polytropic gas: equation of state and derived flow quantities.

States are value objects over ``(p, theta, q, s)``. Every field may be a
scalar or a numpy array (of a common shape); all formulas broadcast, and
they also accept complex input so that complex-step derivatives work
through them.
"""
from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class GasModel:
    gamma: float = 1.4
    c_v: float = 1.0
    R_const: float = 1.0

    def __post_init__(self):
        if not self.gamma > 1:
            raise DomainError(f"gamma must exceed 1, got {self.gamma}")
        if not self.c_v > 0:
            raise DomainError(f"c_v must be positive, got {self.c_v}")
        if not self.R_const > 0:
            raise DomainError(f"R_const must be positive, got {self.R_const}")

    def entropy_factor(self, s):
        """A(s) = R exp(s / c_v)."""
        return self.R_const * np.exp(s / self.c_v)

    def density(self, p, s):
        return (p / self.entropy_factor(s)) ** (1.0 / self.gamma)

    def entropy(self, p, rho):
        """Inverse of the EOS: s such that p = A(s) rho^gamma."""
        return self.c_v * np.log(p / (self.R_const * rho ** self.gamma))

    def enthalpy(self, p, s):
        return self.gamma * p / ((self.gamma - 1.0) * self.density(p, s))

    def speed_from_bernoulli(self, B, p, s):
        """Speed q with q^2/2 + i(p, s) = B; returns NaN where q^2 < 0."""
        q2 = 2.0 * (B - self.enthalpy(p, s))
        with np.errstate(invalid="ignore"):
            return np.sqrt(q2)


@dataclass(frozen=True)
class GasState:
    p: object
    theta: object
    q: object
    s: object

    @classmethod
    def from_density(cls, model, p, rho, theta, q):
        return cls(p=p, theta=theta, q=q, s=model.entropy(p, rho))

    def replace(self, **kw):
        return replace(self, **kw)

    def as_array(self):
        """Stack to shape (..., 4) in the order (p, theta, q, s)."""
        return np.stack(np.broadcast_arrays(self.p, self.theta, self.q, self.s), axis=-1)

    @classmethod
    def from_array(cls, arr):
        arr = np.asarray(arr)
        return cls(p=arr[..., 0], theta=arr[..., 1], q=arr[..., 2], s=arr[..., 3])

    def at(self, index):
        """Pick one node (or a slice) out of an array-valued state."""
        take = lambda a: np.asarray(a)[index] if np.ndim(a) else a
        return GasState(take(self.p), take(self.theta), take(self.q), take(self.s))


@dataclass(frozen=True)
class DerivedState:
    rho: object
    c: object
    mach: object
    enthalpy_i: object
    bernoulli_B: object
    u_comp: object
    v_comp: object


def _check_positive(u):
    p = np.real(np.asarray(u.p))
    q = np.real(np.asarray(u.q))
    if np.any(~(p > 0)):
        raise DomainError("pressure must be positive")
    if np.any(~(q > 0)):
        raise DomainError("speed must be positive")


def derived(model, u, check=True):
    if check:
        _check_positive(u)
    rho = model.density(u.p, u.s)
    c2 = model.gamma * u.p / rho
    c = np.sqrt(c2)
    i = c2 / (model.gamma - 1.0)
    return DerivedState(
        rho=rho,
        c=c,
        mach=u.q / c,
        enthalpy_i=i,
        bernoulli_B=0.5 * u.q ** 2 + i,
        u_comp=u.q * np.cos(u.theta),
        v_comp=u.q * np.sin(u.theta),
    )


def mach_squared(model, u):
    rho = model.density(u.p, u.s)
    return u.q ** 2 * rho / (model.gamma * u.p)


SUPERSONIC = "Supersonic"
SUBSONIC = "Subsonic"
MARGINAL = "Marginal"


def flow_regime(model, u, eps=0.0):
    if eps < 0:
        raise DomainError("eps must be non-negative")
    m2 = float(mach_squared(model, u))
    if m2 <= 1.0 - eps and not (eps == 0 and m2 == 1.0):
        return SUBSONIC
    if m2 >= 1.0 + eps and not (eps == 0 and m2 == 1.0):
        return SUPERSONIC
    return MARGINAL


def state_from_mach(model, p, rho, mach, theta=0.0):
    """Uniform state with given pressure, density and Mach number."""
    c = np.sqrt(model.gamma * p / rho)
    return GasState.from_density(model, p, rho, theta, mach * c)
