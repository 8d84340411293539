import functools
import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from nozzle_shock.gas import GasModel
from nozzle_shock.problem import InflowPerturbation, NozzleSpec, background_from_parameters, build_setup
from nozzle_shock.solver import SolverOptions, fixed_point_solve


@pytest.fixture(scope="session")
def model():
    return GasModel()


@pytest.fixture(scope="session")
def background(model):
    return background_from_parameters(model, 1.0, 1.0, 2.0)


@functools.lru_cache(maxsize=None)
def cached_setup(sigma, zero_inflow=False, L=1.0, xi0=0.5):
    model = GasModel()
    bg = background_from_parameters(model, 1.0, 1.0, 2.0)
    inflow = InflowPerturbation.zero() if zero_inflow else None
    return build_setup(model, bg, NozzleSpec(L, sigma, xi0), inflow)


@functools.lru_cache(maxsize=None)
def cached_solve(sigma, zero_inflow=False, pe="mid", nx=128, ny=64, corrections=True):
    setup = cached_setup(sigma, zero_inflow)
    Pe = setup.interval.midpoint if pe == "mid" else pe
    return setup, Pe, fixed_point_solve(setup, Pe, SolverOptions(nx=nx, ny=ny, corrections=corrections))


@pytest.fixture(scope="session")
def setup_default():
    return cached_setup(0.01)


@pytest.fixture(scope="session")
def solved_default():
    return cached_solve(0.01)


ACCEPTANCE_LINES = []


def record_criterion(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {title} | {detail}"
    ACCEPTANCE_LINES.append((number, line))
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
