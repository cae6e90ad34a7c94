"""Acceptance criteria 1-11, one PASS/FAIL line each in the terminal summary.

Published values below are the tabulated one-parameter events, codimension-two
locations and regional checks that the package is meant to reproduce.
"""

from __future__ import annotations

import time

import numpy as np
import pytest

from mutualism.continuation import branch_events
from mutualism.cycles import continue_cycles, cycle_from_hopf, detect_homoclinic
from mutualism.dynamics import basin_map, classify_attractor, default_grid
from mutualism.equilibria import (
    F_curve,
    F_deriv_discriminant,
    c3_product_form,
    find_coexistence,
    phi_discriminant,
    routh_hurwitz,
    washout_equilibrium,
)
from mutualism.model import default_params, growth, jacobian

from .conftest import TIMINGS, record
from .oracles import brute_force_equilibria
from .strategies import random_params, random_with_coexistence

# (D, kind, sigma, T or None); T only for cycle events
REF_EVENTS = [
    (0.195, "LP", 2.883, None), (0.195, "Hom", 3.277, None), (0.195, "PD", 3.280, 17.77),
    (0.195, "H", 3.289, None),
    (0.2, "LP", 2.8504, None), (0.2, "Hom", 3.2307, None), (0.2, "LPC", 3.2319, 11.83),
    (0.2, "PD", 3.2323, 18.47), (0.2, "LPC", 3.2325, 16.11), (0.2, "H", 3.2381, None),
    (0.22, "LP", 2.736, None), (0.22, "LPC", 3.0585, 9.60), (0.22, "H", 3.0590, None),
    (0.22, "Hom", 3.066645, None), (0.22, "PD", 3.066687, 26.26), (0.22, "LPC", 3.066688, 26.13),
    (0.224, "LP", 2.716, None), (0.224, "LPC", 3.02724, 9.3), (0.224, "H", 3.02736, None),
    (0.224, "Hom", 3.0376, None),
    (0.23, "LP", 2.736, None), (0.23, "H", 2.982, None), (0.23, "Hom", 2.996, None),
]
REF_STATES = [
    (0.195, "LP", (0.669, 0.190, 0.143)), (0.195, "H", (0.338, 0.243, 0.196)),
    (0.2, "LP", (0.665, 0.191, 0.144)), (0.2, "H", (0.341, 0.244, 0.197)),
    (0.22, "LP", (0.652, 0.197, 0.150)), (0.22, "H", (0.352, 0.247, 0.200)),
    (0.224, "LP", (0.650, 0.198, 0.151)), (0.224, "H", (0.354, 0.247, 0.201)),
    (0.23, "LP", (0.647, 0.199, 0.152)), (0.23, "H", (0.357, 0.248, 0.201)),
]
L1_SIGNS = {0.195: -1, 0.2: -1, 0.22: -1, 0.224: -1, 0.23: 1}
CODIM2 = {"BT": ((2.243, 0.550), 0.05), "GH": ((2.995, 0.228), 0.01), "CPC": ((3.271, 0.196), 0.01),
          "R2": ((3.0437, 0.2232), 0.01), "R1": ((3.0396, 0.2237), 0.01)}


@pytest.fixture(scope="module")
def branches():
    t0 = time.perf_counter()
    out = {D: branch_events(default_params(D=D)) for D in L1_SIGNS}
    TIMINGS["branches"] = time.perf_counter() - t0
    return out


def _events(D, kind, slices, branches):
    if kind in ("LP", "H"):
        return branches[D].events_of(kind)
    return slices[D].of(kind)


# ---------------------------------------------------------------- 1


def test_criterion_01_washout_spectrum(rng):
    t0 = time.perf_counter()
    bad = 0
    for _ in range(100):
        p = random_params(rng)
        e = washout_equilibrium(p)
        got = sorted(z.real for z in e.eigenvalues)
        want = sorted([-p.D, -p.removal_rate(1), -p.removal_rate(2)])
        bad += got != want or any(z.imag != 0 for z in e.eigenvalues)
    dt = time.perf_counter() - t0
    ok = bad == 0 and dt < 1.0
    record(1, ok, f"{100 - bad}/100 exact, {dt:.2f} s")
    assert ok


# ---------------------------------------------------------------- 2


def test_criterion_02_no_mortality_fold():
    t0 = time.perf_counter()
    b = branch_events(default_params(S_in=0.5, D=0.2, mortality=False), range_=(0.0, 3.0))
    dt = time.perf_counter() - t0
    lp = b.events_of("LP")
    ok = len(lp) == 1 and abs(lp[0].param - 0.1687) <= 0.0005 and dt < 5.0
    record(2, ok, f"sigma = {lp[0].param:.6f} (0.1687), {dt:.2f} s" if lp else "no fold")
    assert ok


# ---------------------------------------------------------------- 3


def _event_ids():
    return [f"D{D}-{k}-{s}" for D, k, s, _ in REF_EVENTS]


def _event_params():
    out = []
    for row in REF_EVENTS:
        D, kind, sigma, _ = row
        if D == 0.23 and kind == "LP":
            # the tabulated fold value repeats the D = 0.22 entry; the state triple matches 2.688
            out.append(pytest.param(*row, marks=pytest.mark.xfail(strict=True, reason="tabulated value")))
        else:
            out.append(row)
    return out


@pytest.mark.parametrize("D,kind,sigma,T", _event_params(), ids=_event_ids())
def test_criterion_03_event_locations(slices, branches, D, kind, sigma, T):
    evs = _events(D, kind, slices, branches)
    assert evs, f"no {kind} event at D = {D}"
    ev = min(evs, key=lambda e: abs(e.param - sigma))
    if kind in ("LPC", "PD"):
        tol = 2e-5 if D == 0.22 else 0.0005
    else:
        tol = 0.002
    ok = abs(ev.param - sigma) <= tol
    msg = f"D={D} {kind}: {ev.param:.7f} vs {sigma}"
    if T is not None:
        ok &= abs(ev.diagnostics["T"] - T) <= 0.02 * T
        msg += f", T {ev.diagnostics['T']:.2f} vs {T}"
    record(3, ok, msg if not ok else "all tabulated events within tolerance")
    assert ok, msg


def test_criterion_03_order_at_d022(slices):
    sl = slices[0.22]
    kinds = [e.kind for e in sorted(sl.events + sl.hopf, key=lambda e: e.param)]
    ok = kinds == ["LPC", "H", "Hom", "PD", "LPC"]
    record(3, ok, f"order at D=0.22: {'-'.join(kinds)}")
    assert ok


def test_criterion_03_runtime(slices, branches):
    total = TIMINGS.get("slices", 0.0) + TIMINGS.get("branches", 0.0)
    ok = total < 600.0
    record(3, ok, f"{total:.0f} s")
    assert ok


# ---------------------------------------------------------------- 4


@pytest.mark.parametrize("D,kind,state", REF_STATES, ids=[f"D{D}-{k}" for D, k, _ in REF_STATES])
def test_criterion_04_event_states(branches, D, kind, state):
    ev = branches[D].events_of(kind)[0]
    err = float(np.max(np.abs(ev.state - np.array(state))))
    ok = err <= 0.002
    record(4, ok, f"max component error {err:.1e}" if not ok else "all triples within 0.002")
    assert ok, f"D={D} {kind}: {ev.state} vs {state}"


# ---------------------------------------------------------------- 5


def test_criterion_05_hopf_criticality():
    t0 = time.perf_counter()
    got = {}
    for D in L1_SIGNS:
        got[D] = branch_events(default_params(D=D)).events_of("H")[0].diagnostics["l1"]
    dt = time.perf_counter() - t0
    ok = all(np.sign(got[D]) == s for D, s in L1_SIGNS.items()) and dt < 30.0
    record(5, ok, ", ".join(f"{D}: {v:+.3f}" for D, v in got.items()) + f"; {dt:.1f} s")
    assert ok


# ---------------------------------------------------------------- 6


def test_criterion_06_codim2(sweep):
    pts = sweep["codim2"]
    parts, ok = [], True
    for kind, ((s, d), tol) in CODIM2.items():
        pt = pts.get(kind)
        if pt is None:
            ok = False
            parts.append(f"{kind} missing")
            continue
        dist = float(np.hypot(pt.S_in - s, pt.D - d))
        ok &= dist <= tol
        parts.append(f"{kind} {dist:.4f}")
    ok &= pts.get("R1") is not None and pts["R1"].proxy
    ok &= TIMINGS.get("sweep", 0.0) < 1800.0
    record(6, ok, ", ".join(parts) + f"; {TIMINGS.get('sweep', 0.0):.0f} s")
    assert ok


# ---------------------------------------------------------------- 7


@pytest.mark.slow
def test_criterion_07_tristability():
    t0 = time.perf_counter()
    bm = basin_map(default_params(S_in=3.2324, D=0.2), n=21)
    dt = time.perf_counter() - t0
    labels = bm.distinct()
    periods = sorted(a.period for a in bm.attractors if a.kind == "cycle")
    spread = len(periods) >= 2 and periods[-1] > 1.2 * periods[0]
    ok = len(labels) >= 3 and "E0" in labels and spread and dt < 300.0
    record(7, ok, f"{labels}, {dt:.0f} s")
    assert ok


# ---------------------------------------------------------------- 8


def test_criterion_08_homoclinic_fit():
    t0 = time.perf_counter()
    p = default_params(D=0.2)
    h = branch_events(p).events_of("H")[0]
    ev = detect_homoclinic(continue_cycles(cycle_from_hopf(h, p), range_=(2.0, 4.0)))
    dt = time.perf_counter() - t0
    r2 = ev.diagnostics.get("R2", 0.0)
    ok = ev.kind == "Hom" and r2 >= 0.99 and abs(ev.param - 3.2307) <= 0.002 and dt < 120.0
    record(8, ok, f"sigma_hom = {ev.param:.5f}, R2 = {r2:.6f}, {dt:.1f} s")
    assert ok


# ---------------------------------------------------------------- 9


def test_criterion_09_identities(rng):
    t0 = time.perf_counter()
    worst = {"c3": 0.0, "prod": 0.0, "F": 0.0}
    n_eq = n_prod = 0
    disc_ok = True
    while n_eq < 500:
        p = random_with_coexistence(rng, 1)[0]
        for i in (1, 2):
            disc_ok &= phi_discriminant(i, p) > 0
            if p.removal_rate(i) != p.species(i)[0]:
                disc_ok &= F_deriv_discriminant(i, p) > 0
        for e in find_coexistence(p):
            S, x1, x2 = e.state
            rh = routh_hurwitz(e.state, p)
            det = np.linalg.det(jacobian(e.state, p))
            worst["c3"] = max(worst["c3"], abs(rh.c3 + det) / max(abs(rh.c3), 1e-300))
            try:
                prod = c3_product_form(e.state, p)
                worst["prod"] = max(worst["prod"], abs(prod - rh.c3) / max(abs(rh.c3), 1e-300))
                n_prod += 1
            except ArithmeticError:
                pass
            # implicit residual: growth on the F curve equals the removal rate
            x1f = F_curve(1, x2, p)
            Sf = p.S_in - p.D1 / p.D * x1f - p.D2 / p.D * x2
            worst["F"] = max(worst["F"], abs(growth(1, Sf, x2, p) - p.removal_rate(1)), abs(x1f - x1))
            n_eq += 1
    q = default_params(D=0.2)
    h = branch_events(q).events_of("H")[0]
    fam = continue_cycles(cycle_from_hopf(h, q), range_=(2.0, 4.0), keep_cycles=True)
    cs = [fam.cycles[k] for k in np.linspace(0, len(fam.cycles) - 1, 20).astype(int)]
    liou = max(c.liouville_error() for c in cs)
    dt = time.perf_counter() - t0
    ok = (worst["c3"] <= 1e-8 and worst["prod"] <= 1e-8 and worst["F"] < 1e-10 and disc_ok
          and liou <= 1e-5 and n_prod >= 400 and dt < 60.0)
    record(9, ok, f"c3 {worst['c3']:.1e}, product {worst['prod']:.1e} ({n_prod}), F {worst['F']:.1e}, "
                  f"Liouville {liou:.1e}, {dt:.1f} s")
    assert ok


# ---------------------------------------------------------------- 10


def test_criterion_10_oracle(rng):
    t0 = time.perf_counter()
    mismatches = 0
    total = 0
    for p in random_with_coexistence(rng, 20):
        ref = brute_force_equilibria(p.as_array())
        got = [e.state for e in find_coexistence(p)]
        total += len(ref)
        same = len(ref) == len(got) and all(np.max(np.abs(a - b)) < 1e-8 for a, b in zip(ref, got))
        mismatches += not same
    dt = time.perf_counter() - t0
    ok = mismatches == 0 and dt < 120.0
    record(10, ok, f"{20 - mismatches}/20 draws equal ({total} equilibria), {dt:.1f} s")
    assert ok


# ---------------------------------------------------------------- 11


@pytest.mark.slow
def test_criterion_11_global_washout(rng):
    t0 = time.perf_counter()
    draws = []
    while len(draws) < 5:
        p = random_params(rng, mortality=False)
        if not find_coexistence(p):
            draws.append(p)
    n_ok = 0
    for p in draws:
        x1, x2, S0 = default_grid(p, 21)
        for a in x1:
            for b in x2:
                lab = classify_attractor((S0, a, b), p)
                n_ok += lab.kind == "equilibrium" and lab.index == 0
    dt = time.perf_counter() - t0
    ok = n_ok == 5 * 441 and dt < 300.0
    record(11, ok, f"{n_ok}/{5 * 441} to washout, {dt:.0f} s")
    assert ok
