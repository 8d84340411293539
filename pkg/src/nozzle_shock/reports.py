"""JSON and CSV emitters.

Outputs are deterministic for identical inputs: keys are sorted, floats use
repr precision, and the only wall-clock value lives under ``timing``.
"""
import csv
import dataclasses
import json
import math
import os

import numpy as np

from . import __version__
from .gas import derived


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return _plain(dataclasses.asdict(obj))
    return obj


def write_json(path, payload):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    body = dict(_plain(payload))
    body.setdefault("version", __version__)
    with open(path, "w") as fh:
        json.dump(body, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def write_csv(path, header, rows):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def state_dict(model, u):
    d = derived(model, u)
    return {"p": float(u.p), "theta": float(u.theta), "q": float(u.q), "s": float(u.s),
            "rho": float(d.rho), "mach": float(d.mach)}


def background_payload(model, background):
    bg = background
    return {
        "gamma": model.gamma, "c_v": model.c_v,
        "upstream": state_dict(model, bg.u_minus_bar),
        "downstream": state_dict(model, bg.u_plus_bar),
        "p_jump": bg.p_jump, "kappa": bg.kappa, "kappa1": bg.kappa1, "kappa2": bg.kappa2,
        "eta0_uniform": bg.eta0, "p_star": bg.p_star, "p_sonic": bg.p_sonic,
        "p_sonic_below_p_star": bool(bg.p_sonic < bg.p_star),
    }


def interval_payload(setup):
    iv = setup.interval
    return {
        "Pe_lo": iv.lo, "Pe_hi": iv.hi, "Pe_midpoint": iv.midpoint, "width": iv.width,
        "scaled_lo": iv.scaled_lo, "scaled_hi": iv.scaled_hi, "prefactor": iv.prefactor,
        "inflow_integral": iv.inflow_integral, "g_script_printed": iv.g_script_printed,
        "eta0": setup.eta0, "kappa": setup.background.kappa, "L": setup.nozzle.L, "sigma": setup.sigma,
    }


def polar_rows(upper, lower):
    rows = []
    for branch, pts in (("upper", upper), ("lower", lower)):
        ds = pts.downstream
        for k in range(len(np.atleast_1d(pts.p))):
            rows.append((branch, float(np.atleast_1d(pts.theta)[k]), float(np.atleast_1d(pts.p)[k]),
                         float(np.atleast_1d(ds.q)[k]), float(np.atleast_1d(ds.s)[k])))
    return rows


def solve_payload(setup, Pe, report, config_echo=None):
    bg = setup.background
    front = report.front
    return {
        "Pe": Pe,
        "sigma": setup.sigma,
        "delta_xi": front.delta_xi,
        "xi_star": front.xi_star,
        "converged": report.converged,
        "iterations": report.iterations,
        "contraction_ratios": report.contraction_ratios,
        "norms": report.norms(bg),
        "hypotheses": report.hypothesis_report.as_dict(),
        "diagnostics": report.diagnostics,
        "front": {"eta": front.eta, "slope": front.slope, "position": front.position},
        "grid": {"nx": report.grid.nx, "ny": report.grid.ny},
        "interval": interval_payload(setup),
        "config": config_echo or {},
        "timing": {"wall_seconds": report.timing_s},
    }


def write_fields(out_dir, report):
    g = report.grid
    geom = report.front.geometry
    xphys = geom.physical_xi(g)
    f = report.fields
    rows = []
    for i in range(g.nx + 1):
        for j in range(g.ny + 1):
            rows.append((i, j, float(g.xi[i]), float(g.eta[j]), float(xphys[i, j]),
                         float(f.p[i, j]), float(f.theta[i, j]), float(f.q[i, j]), float(f.s[i, j])))
    write_csv(os.path.join(out_dir, "fields.csv"),
              ("i", "j", "xi_fixed", "eta", "xi", "p", "theta", "q", "s"), rows)
    tp, tm = report.trace_plus, report.trace_minus
    trows = [(j, float(report.front.eta[j]), float(report.front.position[j]), float(report.front.slope[j]),
              float(tm.p[j]), float(tm.theta[j]), float(tm.q[j]), float(tm.s[j]),
              float(tp.p[j]), float(tp.theta[j]), float(tp.q[j]), float(tp.s[j])) for j in range(g.ny + 1)]
    write_csv(os.path.join(out_dir, "shock_trace.csv"),
              ("j", "eta", "psi", "psi_slope", "p_minus", "theta_minus", "q_minus", "s_minus",
               "p_plus", "theta_plus", "q_plus", "s_plus"), trows)
