"""Shared fixtures and the acceptance PASS/FAIL summary."""

from __future__ import annotations

import time

import numpy as np
import pytest

from mutualism import atlas
from mutualism.model import default_params

ACCEPTANCE: dict[int, tuple[bool, str]] = {}

REF_D = (0.195, 0.2, 0.22, 0.224, 0.23)

# wall-clock seconds spent building the shared session fixtures
TIMINGS: dict[str, float] = {}


def record(criterion: int, ok: bool, detail: str = "") -> None:
    """Remember the outcome of an acceptance criterion (a failed sub-check sticks)."""
    prev = ACCEPTANCE.get(criterion)
    if prev is not None and not prev[0]:
        return
    ACCEPTANCE[criterion] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def params():
    return default_params()


@pytest.fixture(scope="session")
def slices(params):
    """One-parameter cycle slices at the tabulated D values."""
    t0 = time.perf_counter()
    out = {D: atlas.run_slice(params, D) for D in REF_D}
    TIMINGS["slices"] = time.perf_counter() - t0
    return out


@pytest.fixture(scope="session")
def sweep(params):
    """Full two-parameter assembly over the oscillatory window."""
    t0 = time.perf_counter()
    lp, hc, eq_pts = atlas.equilibrium_curves(params)
    curves, sl = atlas.sweep_cycle_curves(params, np.linspace(*atlas.OSC_D, 22))
    pts = atlas.locate_codim2(curves, sl, hc, eq_pts)
    TIMINGS["sweep"] = time.perf_counter() - t0
    return {"lp": lp, "hopf": hc, "curves": curves, "slices": sl, "codim2": {c.kind: c for c in pts}}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
