"""Shared fixtures: small evolved fields for unit tests and the (expensive)
production-scale runs behind the acceptance criteria, evolved once per
session."""
from __future__ import annotations

import time

import pytest

from nullwave import (DiagnosticsSpec, InitialData, NullGrid, PotentialSet,
                      evolve_mode, evolve_series, march, minkowski,
                      reissner_nordstrom)


@pytest.fixture(scope="session", autouse=True)
def warm_jit():
    # compile the march kernel once so per-test timings measure the scheme,
    # not numba compilation
    grid = NullGrid(1.0, 2.0, 2.0, 14.0, 0.5, 1.0)
    march(minkowski(), PotentialSet(epsilon=0.0), grid,
          InitialData("zero"), 0)


@pytest.fixture(scope="session")
def bump():
    return InitialData("compact-polynomial-bump", 1.0, 16.0, 3.0)


@pytest.fixture(scope="session")
def small_grid():
    return NullGrid(u0=1.0, uF=41.0, v0=2.0, vmax=202.0, h=0.05, R=10.0)


@pytest.fixture(scope="session")
def field_eps005(small_grid, bump):
    ps = PotentialSet.from_strings(0.05, w0="1")
    return evolve_mode(minkowski(), ps, small_grid, bump, 0)


@pytest.fixture(scope="session")
def field_eps005_l1(small_grid, bump):
    ps = PotentialSet.from_strings(0.05, w0="1")
    return evolve_mode(minkowski(), ps, small_grid, bump, 1)


@pytest.fixture(scope="session")
def field_rn(small_grid, bump):
    ps = PotentialSet.from_strings(0.05, w0="1")
    return evolve_mode(reissner_nordstrom(1.0, 0.5), ps, small_grid, bump, 0)


@pytest.fixture(scope="session")
def field_free(small_grid, bump):
    return evolve_mode(minkowski(), PotentialSet(epsilon=0.0), small_grid, bump, 0)


# -- production-scale acceptance runs ---------------------------------------

SHARP_GRID = NullGrid(u0=1.0, uF=1601.0, v0=2.0, vmax=12802.0, h=0.1, R=10.0)
SHARP_SPEC = DiagnosticsSpec(p_list=(2.0,), u_stride=20, with_T=True,
                             extrap_fracs=(0.5, 0.75, 1.0))
SHARP_WINDOW = (400.0, 1500.0)


def _timed_series(bg, ps, grid, data, ell, spec):
    t0 = time.perf_counter()
    series, _ = evolve_series(bg, ps, grid, data, ell, spec)
    return series, time.perf_counter() - t0


@pytest.fixture(scope="session")
def sharp_runs(bump, warm_jit):
    """epsilon -> (series, elapsed seconds) for the inverse-square benchmark."""
    out = {}
    for eps in (0.05, 0.2):
        ps = PotentialSet.from_strings(eps, w0="1")
        out[eps] = _timed_series(minkowski(), ps, SHARP_GRID, bump, 0, SHARP_SPEC)
    return out


@pytest.fixture(scope="session")
def l1_run(bump, warm_jit):
    grid = NullGrid(u0=1.0, uF=601.0, v0=2.0, vmax=4802.0, h=0.1, R=10.0)
    ps = PotentialSet.from_strings(0.05, w0="1")
    return _timed_series(minkowski(), ps, grid, bump, 1, SHARP_SPEC)


@pytest.fixture(scope="session")
def oscillating_run(bump, warm_jit):
    grid = NullGrid(u0=1.0, uF=801.0, v0=2.0, vmax=6402.0, h=0.1, R=10.0)
    ps = PotentialSet.from_strings(0.05, w0="sin(u + log(r))")
    return _timed_series(minkowski(), ps, grid, bump, 0, SHARP_SPEC)


def acceptance_line(number: int, name: str, ok: bool, detail: str = ""):
    status = "PASS" if ok else "FAIL"
    print(f"[acceptance {number}] {name}: {status}  {detail}")
    assert ok, f"criterion {number} ({name}) failed: {detail}"
