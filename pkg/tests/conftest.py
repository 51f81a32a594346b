import json

import numpy as np
import pytest

from hyperlock.cli import bundled_dir
from hyperlock.field import Numerics
from hyperlock.problem import load_problem, manufacture_system

FORCING = ["cos(2*pi*t)*(1+x)", "0"]
BOUNDARY_FORCING = ["0", "sin(2*pi*t)"]
TAU0 = 0.05
LADDER = (1e-2, 5e-3, 2.5e-3, 1.25e-3)

_criteria: dict[int, tuple[bool, str]] = {}


def bundled(name):
    return load_problem(json.loads((bundled_dir() / f"{name}.json").read_text()))


@pytest.fixture(scope="session")
def num16():
    return Numerics(modes=16, n_x=65)


@pytest.fixture(scope="session")
def num32():
    return Numerics(modes=32, n_x=129)


@pytest.fixture(scope="session")
def ellipse():
    """(problem, unforced solution) with the symbolic construction data in ``sol.meta``."""
    return manufacture_system()


@pytest.fixture(scope="session")
def ellipse_linear():
    """The ellipse instance without the radial term: b is exactly M(x) u."""
    return manufacture_system(radial_damping=0)


@pytest.fixture(scope="session")
def ellipse_forced():
    return bundled("ellipse_forced")


@pytest.fixture(scope="session")
def wave():
    return bundled("wave")


@pytest.fixture(scope="session")
def wave_forced():
    return bundled("wave_forced")


@pytest.fixture(scope="session")
def lock_ctx(ellipse_forced, num16):
    from hyperlock.locking import system_context

    p, sol = ellipse_forced
    return system_context(p, sol.field(num16), num16)


@pytest.fixture(scope="session")
def root0(lock_ctx):
    from hyperlock.locking import nearest_root

    return nearest_root(lock_ctx.curve, TAU0, 0.0)


@pytest.fixture(scope="session")
def seed0(lock_ctx, root0):
    from hyperlock.locking import seed_solution

    return seed_solution(TAU0, root0.phi, lock_ctx)


@pytest.fixture(scope="session")
def ladder(lock_ctx, seed0):
    """Locked solutions at fixed tau0 on eps = 1e-2 / 2^k, k = 0..3 (largest first)."""
    from hyperlock.locking import solve_locked

    out = []
    warm = seed0
    for eps in sorted(LADDER):
        sol = solve_locked(eps, TAU0, warm, lock_ctx)
        warm = (sol.phi, sol.w.coef)
        out.append(sol)
    return sorted(out, key=lambda s: -s.eps)


@pytest.fixture(scope="session")
def fos_lock(wave_forced, num16):
    from hyperlock.secondorder import fos_lock_context

    p2, sol = wave_forced
    return fos_lock_context(p2, sol.field(num16), num16)


@pytest.fixture(scope="session")
def ellipse_adjoint(ellipse, num16):
    from hyperlock.adjoint import solve_adjoint_sys

    p, sol = ellipse
    return solve_adjoint_sys(p, sol.field(num16), num16)


@pytest.fixture(scope="session")
def wave_adjoint(wave, num16):
    from hyperlock.secondorder import solve_adjoint_eq

    p2, sol = wave
    return solve_adjoint_eq(p2, sol.field(num16), num16)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def criterion():
    """Record the outcome of an acceptance criterion for the terminal summary."""

    def record(number: int, passed: bool, detail: str):
        _criteria[number] = (bool(passed), detail)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        passed, detail = _criteria[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")

