"""Command-line entry point.

Exit codes: 0 success, 2 configuration or input error, 3 regime breach or
no shock, 4 non-convergence or linear-solver failure, 5 no root (receiver
pressure outside the admissible interval).
"""
import argparse
import math
import os
import sys

from . import __version__
from .config import load_config
from .errors import ConfigError, NozzleShockError
from .reports import (background_payload, interval_payload, polar_rows, solve_payload, write_csv, write_fields,
                      write_json)
from .shock_relations import polar_critical_points, polar_curve
from .solver import (UNIQUE, SolvabilityContext,
                     fixed_point_solve, run_parallel, sample_f_tilde, uniqueness_sweep)
from .supersonic import solve_linearized
from .problem import validate_compatibility

EXIT_OK, EXIT_CONFIG, EXIT_REGIME, EXIT_CONVERGENCE, EXIT_NO_ROOT = 0, 2, 3, 4, 5


def _out(args, name):
    return os.path.join(args.out, name)


def _config_echo(cfg):
    keys = ("gamma", "c_v", "p_minus", "rho_minus", "mach_minus", "sigma", "L", "xi0", "Pe", "nx", "ny",
            "tol_newton", "tol_fixed_point", "tol_linear", "eps_hyp", "max_iters", "p0", "theta0", "q0", "s0")
    return {k: getattr(cfg, k) for k in keys}


def cmd_polar(cfg, args):
    model = cfg.model()
    um = cfg.background().u_minus_bar
    crit = polar_critical_points(model, um)
    upper, lower = polar_curve(model, um, n=args.samples)
    write_csv(_out(args, "polar.csv"), ("branch", "theta", "p", "q", "s"), polar_rows(upper, lower))
    write_json(_out(args, "critical_points.json"), {
        "p_minus": float(um.p), "mach_minus": cfg.mach_minus,
        "p_max": crit.p_max, "p_star": crit.p_star, "theta_star_rad": crit.theta_star,
        "theta_star_deg": math.degrees(crit.theta_star), "p_sonic": crit.p_sonic,
        "theta_sonic_rad": crit.theta_sonic, "p_sonic_below_p_star": crit.sonic_below_star,
    })
    print(f"p_max={crit.p_max:.10g} p_star={crit.p_star:.10g} theta_star={math.degrees(crit.theta_star):.6f} deg "
          f"p_sonic={crit.p_sonic:.10g}")
    return EXIT_OK


def cmd_background(cfg, args):
    model = cfg.model()
    bg = cfg.background()
    write_json(_out(args, "background.json"), background_payload(model, bg))
    print(f"kappa={bg.kappa:.12g} kappa1={bg.kappa1:.12g} kappa2={bg.kappa2:.12g} [p]={bg.p_jump:.12g}")
    return EXIT_OK


def cmd_interval(cfg, args):
    setup = cfg.setup()
    payload = interval_payload(setup)
    write_json(_out(args, "pe_interval.json"), payload)
    print(f"Pe in ({payload['Pe_lo']:.10g}, {payload['Pe_hi']:.10g})")
    return EXIT_OK


def cmd_validate(cfg, args):
    setup = cfg.setup()
    rep = validate_compatibility(setup.model, setup.inlet, setup.sigma)
    write_json(_out(args, "compatibility.json"), rep.as_dict())
    for c in rep.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name} residual={c.residual:.3e}")
    return EXIT_OK


def _pe(cfg, setup, args):
    return cfg.resolve_pe(setup, args.pe[0] if getattr(args, "pe", None) else None)


def cmd_solve(cfg, args):
    setup = cfg.setup()
    Pe = _pe(cfg, setup, args)
    opts = cfg.solver_options()
    report = fixed_point_solve(setup, Pe, opts)
    if setup.sigma > 0:
        field_m = solve_linearized(setup.model, setup, n_eta=opts.ny, picard_tol=opts.picard_tol)
        xs, vals = sample_f_tilde(setup, report, Pe, field_m, n=256)
        write_csv(_out(args, "f_tilde.csv"), ("delta_xi", "f_tilde"), zip(xs, vals))
    write_json(_out(args, "report.json"), solve_payload(setup, Pe, report, _config_echo(cfg)))
    if args.emit_fields:
        write_fields(args.out, report)
    print(f"converged in {len(report.iterations)} iterations: delta_xi={report.delta_xi:.12g} "
          f"xi_star={report.front.xi_star:.12g}")
    return EXIT_OK


def _verdict_exit(verdict):
    if verdict.verdict == UNIQUE:
        return EXIT_OK
    errors = {r.get("error") for r in verdict.seeds if not r["ok"]}
    if errors == {"NoRootError"}:
        return EXIT_NO_ROOT
    if errors and errors <= {"ConvergenceError", "SolverError"}:
        return EXIT_CONVERGENCE
    return EXIT_REGIME


def cmd_uniqueness(cfg, args):
    setup = cfg.setup()
    Pe = _pe(cfg, setup, args)
    n_seeds = args.seeds if args.seeds is not None else cfg.seeds
    verdict = uniqueness_sweep(setup, Pe, cfg.solver_options(), n_seeds=n_seeds)
    payload = verdict.as_dict()
    payload.update({"Pe": Pe, "sigma": setup.sigma, "config": _config_echo(cfg)})
    write_json(_out(args, "verdict.json"), payload)
    print(f"verdict: {verdict.verdict} (delta_xi spread {verdict.delta_xi_spread:.3e})")
    return _verdict_exit(verdict)


def _sweep_one(task):
    setup, Pe, opts = task
    row = {"Pe": Pe, "inside_interval": setup.interval.contains(Pe)}
    row["delta_xi_leading_order"] = SolvabilityContext(setup, Pe).closed_form_root()
    try:
        rep = fixed_point_solve(setup, Pe, opts)
        row.update(status="ok", delta_xi=rep.delta_xi, iterations=len(rep.iterations), exit_code=0)
    except NozzleShockError as exc:
        row.update(status=type(exc).__name__, delta_xi=float("nan"), iterations=0, exit_code=exc.exit_code)
    return row


def cmd_sweep_pe(cfg, args):
    setup = cfg.setup()
    values = args.pe if args.pe else cfg.pe_values
    if not values:
        raise ConfigError("sweep-pe needs Pe values (--pe or Pe_values in the config)")
    pes = [cfg.resolve_pe(setup, v) for v in values]
    rows = run_parallel(_sweep_one, [(setup, Pe, cfg.solver_options()) for Pe in pes])
    header = ("Pe", "inside_interval", "delta_xi_leading_order", "delta_xi", "status", "iterations", "exit_code")
    write_csv(_out(args, "pe_sweep.csv"), header, [[r[k] for k in header] for r in rows])
    for r in rows:
        print(f"Pe={r['Pe']:.8g} delta_xi={r['delta_xi']:.10g} status={r['status']}")
    return EXIT_OK


HELP = {
    "polar": "sample the shock polar and its critical points",
    "background": "background normal shock and its constants",
    "interval": "admissible receiver-pressure interval",
    "validate": "corner compatibility of the inflow profiles",
    "solve": "solve the free-boundary problem for one receiver pressure",
    "uniqueness": "multi-seed uniqueness certificate",
    "sweep-pe": "shock position for a list of receiver pressures",
}

COMMANDS = {
    "polar": cmd_polar, "background": cmd_background, "interval": cmd_interval, "validate": cmd_validate,
    "solve": cmd_solve, "uniqueness": cmd_uniqueness, "sweep-pe": cmd_sweep_pe,
}


def _pe_arg(text):
    try:
        return float(text)
    except ValueError:
        return text


def build_parser():
    parser = argparse.ArgumentParser(prog="nozzle-shock", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--config", help="YAML run configuration")
        p.add_argument("--out", default=None, help="output directory (default: out)")
        p.add_argument("--force", action="store_true", help="allow sigma above the cap")
        if name == "polar":
            p.add_argument("--samples", type=int, default=201)
        if name in ("solve", "uniqueness", "sweep-pe"):
            p.add_argument("--pe", type=_pe_arg, nargs="+" if name == "sweep-pe" else 1,
                           help="receiver pressure perturbation (number or 'midpoint')")
        if name == "solve":
            p.add_argument("--emit-fields", action="store_true", help="write fields.csv and shock_trace.csv")
        if name == "uniqueness":
            p.add_argument("--seeds", type=int, default=None)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        cfg = cfg.with_overrides(force=True if args.force else None, out=args.out,
                                 emit_fields=getattr(args, "emit_fields", None) or None)
        args.out = cfg.out
        args.emit_fields = cfg.emit_fields
        if getattr(args, "seeds", None) is not None and args.seeds < 5:
            raise ConfigError("--seeds must be at least 5")
        os.makedirs(args.out, exist_ok=True)
        if not os.access(args.out, os.W_OK):
            raise ConfigError(f"output directory {args.out} is not writable")
        return COMMANDS[args.command](cfg, args)
    except NozzleShockError as exc:
        label = {2: "config", 3: "regime", 4: "solver", 5: "no-root"}.get(exc.exit_code, "error")
        if type(exc).__name__ == "NoShockError":
            label = "no-shock"
        print(f"{label}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"config: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
