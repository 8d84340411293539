"""Run configuration: YAML ingestion with key and line context.

Keys may be written nested (``grid: {nx: 128}``) or dotted (``grid.nx: 128``).
Relative profile paths resolve against the config file's directory.
"""
from dataclasses import dataclass, field, replace
import math
import os

import yaml

from .errors import ConfigError
from .gas import GasModel
from .problem import BUILTINS, InflowPerturbation, NozzleSpec, background_from_parameters, build_setup, resolve_profile
from .solver import SolverOptions

PROFILE_KEYS = ("p0", "theta0", "q0", "s0")

# dotted key -> (attribute, type)
_SCHEMA = {
    "gamma": ("gamma", float),
    "c_v": ("c_v", float),
    "p_minus": ("p_minus", float),
    "rho_minus": ("rho_minus", float),
    "mach_minus": ("mach_minus", float),
    "sigma": ("sigma", float),
    "sigma_cap": ("sigma_cap", float),
    "L": ("L", float),
    "xi0": ("xi0", float),
    "Pe": ("Pe", "pe"),
    "Pe_values": ("pe_values", "pe_list"),
    "grid.nx": ("nx", int),
    "grid.ny": ("ny", int),
    "tol.newton": ("tol_newton", float),
    "tol.fixed_point": ("tol_fixed_point", float),
    "tol.linear": ("tol_linear", float),
    "eps_hyp": ("eps_hyp", float),
    "max_iters": ("max_iters", int),
    "seeds": ("seeds", int),
    "force": ("force", bool),
    **{f"profiles.{k}": (k, str) for k in PROFILE_KEYS},
}


@dataclass(frozen=True)
class RunConfig:
    gamma: float = 1.4
    c_v: float = 1.0
    p_minus: float = 1.0
    rho_minus: float = 1.0
    mach_minus: float = 2.0
    sigma: float = 0.01
    sigma_cap: float = 0.05
    L: float = 1.0
    xi0: float = 0.5
    Pe: object = "midpoint"
    pe_values: tuple = ()
    nx: int = 128
    ny: int = 64
    tol_newton: float = 1e-14
    tol_fixed_point: float = 1e-10
    tol_linear: float = 1e-10
    eps_hyp: float = 0.1
    max_iters: int = 50
    seeds: int = 5
    force: bool = False
    p0: str = "zero"
    theta0: str = "ramp"
    q0: str = "zero"
    s0: str = "zero"
    out: str = "out"
    emit_fields: bool = False
    source: str = None
    base_dir: str = "."
    lines: dict = field(default_factory=dict, compare=False)

    def where(self, key):
        line = self.lines.get(key)
        origin = self.source or "<config>"
        return f"{origin}:{line} [{key}]" if line else f"{origin} [{key}]"

    def validate(self):
        for key in ("tol.newton", "tol.fixed_point", "tol.linear", "eps_hyp"):
            val = getattr(self, _SCHEMA[key][0])
            if not val > 0:
                raise ConfigError(f"{self.where(key)}: tolerance must be > 0, got {val}")
        for key in ("grid.nx", "grid.ny"):
            val = getattr(self, _SCHEMA[key][0])
            if val < 8:
                raise ConfigError(f"{self.where(key)}: grid size must be >= 8, got {val}")
        if self.seeds < 1:
            raise ConfigError(f"{self.where('seeds')}: seed count must be positive")
        if self.max_iters < 1:
            raise ConfigError(f"{self.where('max_iters')}: max_iters must be positive")
        return self

    # -- builders ---------------------------------------------------------

    def _wrap(self, key, fn):
        try:
            return fn()
        except ConfigError as exc:
            raise type(exc)(f"{self.where(key)}: {exc}") from exc
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"{self.where(key)}: {exc}") from exc

    def model(self):
        return self._wrap("gamma", lambda: GasModel(gamma=self.gamma, c_v=self.c_v))

    def background(self):
        return background_from_parameters(self.model(), self.p_minus, self.rho_minus, self.mach_minus)

    def nozzle(self):
        return self._wrap("sigma", lambda: NozzleSpec(self.L, self.sigma, self.xi0, self.sigma_cap, self.force))

    def inflow(self):
        profiles = {}
        for k in PROFILE_KEYS:
            spec = getattr(self, k)
            path = os.path.join(self.base_dir, spec) if _looks_like_path(spec) else spec
            profiles[k] = self._wrap(f"profiles.{k}", lambda: resolve_profile(path))
        return InflowPerturbation(**profiles)

    def setup(self):
        model = self.model()
        return build_setup(model, background_from_parameters(model, self.p_minus, self.rho_minus, self.mach_minus),
                           self.nozzle(), self.inflow())

    def solver_options(self, **overrides):
        opts = SolverOptions(nx=self.nx, ny=self.ny, tol_fixed_point=self.tol_fixed_point, tol_linear=self.tol_linear,
                             tol_newton=self.tol_newton, max_iters=self.max_iters, eps_hyp=self.eps_hyp)
        return replace(opts, **overrides)

    def resolve_pe(self, setup, value=None):
        value = self.Pe if value is None else value
        return _pe_value(value, setup, self.where("Pe"))

    def with_overrides(self, **kw):
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


def _looks_like_path(spec):
    name = str(spec).partition(":")[0]
    return name not in BUILTINS


def _pe_value(value, setup, where):
    iv = setup.interval
    if isinstance(value, str):
        named = {"midpoint": iv.midpoint, "mid": iv.midpoint, "lo": iv.lo, "hi": iv.hi}
        if value in named:
            return float(named[value])
        raise ConfigError(f"{where}: Pe must be a number or one of {sorted(named)}, got {value!r}")
    return float(value)


def _flatten(node, prefix, out):
    """Map dotted keys to (python value, line) from a composed YAML node."""
    if not isinstance(node, yaml.MappingNode):
        raise ConfigError(f"line {node.start_mark.line + 1}: expected a mapping at {prefix or 'top level'}")
    for key_node, val_node in node.value:
        key = f"{prefix}{key_node.value}"
        line = key_node.start_mark.line + 1
        if isinstance(val_node, yaml.MappingNode):
            _flatten(val_node, key + ".", out)
        else:
            out[key] = (yaml.safe_load(yaml.serialize(val_node)), line)


def _coerce(key, kind, value, line):
    where = f"line {line} [{key}]"
    try:
        if kind is float:
            if isinstance(value, bool):
                raise ValueError
            v = float(value)
            if not math.isfinite(v):
                raise ValueError
            return v
        if kind is int:
            if isinstance(value, bool) or float(value) != int(value):
                raise ValueError
            return int(value)
        if kind is bool:
            if not isinstance(value, bool):
                raise ValueError
            return value
        if kind is str:
            return str(value)
        if kind == "pe":
            return value if isinstance(value, str) else _coerce(key, float, value, line)
        if kind == "pe_list":
            if not isinstance(value, list) or not value:
                raise ValueError
            return tuple(v if isinstance(v, str) else _coerce(key, float, v, line) for v in value)
    except (TypeError, ValueError):
        pass
    label = {float: "a finite number", int: "an integer", bool: "true/false", str: "a string",
             "pe": "a number or 'midpoint'", "pe_list": "a non-empty list"}[kind]
    raise ConfigError(f"{where}: expected {label}, got {value!r}")


def parse_config_text(text, source=None, base_dir="."):
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        loc = f"line {mark.line + 1}" if mark else "unknown line"
        raise ConfigError(f"{source or '<config>'}: {loc}: invalid YAML ({getattr(exc, 'problem', exc)})") from exc
    flat = {}
    if root is not None:
        _flatten(root, "", flat)
    values, lines = {}, {}
    for key, (value, line) in flat.items():
        if key not in _SCHEMA:
            raise ConfigError(f"{source or '<config>'}:{line}: unknown key {key!r}")
        attr, kind = _SCHEMA[key]
        try:
            values[attr] = _coerce(key, kind, value, line)
        except ConfigError as exc:
            raise ConfigError(f"{source or '<config>'}: {exc}") from exc
        lines[key] = line
    return RunConfig(**values, source=source, base_dir=base_dir, lines=lines).validate()


def load_config(path):
    if path is None:
        return RunConfig().validate()
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, source=str(path), base_dir=os.path.dirname(os.path.abspath(path)))

