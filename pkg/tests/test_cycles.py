"""Limit cycles: shooting, Floquet multipliers, family events and period curves."""

from __future__ import annotations

import numpy as np
import pytest

from mutualism.continuation import branch_events, transversality
from mutualism.cycles import (
    PeriodCurve,
    closure_residual,
    continue_cycles,
    cycle_from_hopf,
    detect_homoclinic,
    expected_hopf_side,
    fit_log_period,
    hopf_side,
    period_curve,
)
from mutualism.dynamics import integrate
from mutualism.model import default_params

from .oracles import hausdorff, monodromy_ref


def _family(D):
    p = default_params(D=D)
    h = branch_events(p).events_of("H")[0]
    seed = cycle_from_hopf(h, p)
    return {"p": p, "hopf": h, "seed": seed, "fam": continue_cycles(seed, range_=(2.0, 4.0), keep_cycles=True)}


@pytest.fixture(scope="module")
def d200():
    return _family(0.2)


@pytest.fixture(scope="module")
def d195():
    return _family(0.195)


def _max_mult(c):
    return max(abs(m) for m in c.nontrivial)


def test_trivial_multiplier_everywhere(d200, d195):
    for fam in (d200["fam"], d195["fam"]):
        for c in fam.cycles:
            assert np.min(np.abs(c.multipliers - 1.0)) < 1e-6


def test_liouville_on_twenty_cycles(d200):
    cs = d200["fam"].cycles
    for k in np.linspace(0, len(cs) - 1, 20).astype(int):
        assert cs[k].liouville_error() < 1e-5


def test_closure_residual_on_moderate_cycles(d200, d195):
    checked = 0
    for fam in (d200["fam"], d195["fam"]):
        for c in fam.cycles[::3]:
            # one long integration amplifies node error by the leading multiplier
            if _max_mult(c) < 2.0:
                assert closure_residual(c) < 1e-8
                checked += 1
    assert checked > 10


def test_seed_period_matches_linearisation(d200):
    h, seed = d200["hopf"], d200["seed"]
    c2 = h.diagnostics["c"][1]
    assert abs(seed.period - 2 * np.pi / np.sqrt(c2)) < 1e-3 * seed.period


@pytest.mark.parametrize("D", [0.195, 0.2, 0.23])
def test_seed_side_follows_normal_form(D):
    p = default_params(D=D)
    h = branch_events(p).events_of("H")[0]
    seed = cycle_from_hopf(h, p)
    side = expected_hopf_side(h.diagnostics["l1"], transversality(h, p))
    assert hopf_side(seed, h.param) == side
    assert seed.stability == ("unstable" if D == 0.23 else "stable")


def test_stable_cycle_at_3235(d200):
    fam = d200["fam"]
    first_fold = fam.events_of("LPC")[0].param
    onset = [c for c in fam.cycles if c.param > first_fold and c.period < 11.0]
    c = min(onset, key=lambda c: abs(c.param - 3.235))
    assert abs(c.param - 3.235) < 2e-3
    assert c.stability == "stable"
    assert _max_mult(c) < 1.0


def test_multiplier_below_minus_one_past_pd(d200):
    fam = d200["fam"]
    pd = fam.events_of("PD")[0]
    after = [c for c in fam.cycles if c.period > pd.diagnostics["T"]][:5]
    assert after
    for c in after:
        real_neg = [m for m in c.nontrivial if abs(np.imag(m)) < 1e-12 and np.real(m) < -1.0]
        assert real_neg


@pytest.mark.parametrize("kind,sigma,T", [("LPC", 3.2319, 11.83), ("PD", 3.2323, 18.47), ("LPC", 3.2325, 16.11)])
def test_events_at_d200(d200, kind, sigma, T):
    evs = d200["fam"].events_of(kind)
    ev = min(evs, key=lambda e: abs(e.param - sigma))
    assert abs(ev.param - sigma) < 5e-4
    assert abs(ev.diagnostics["T"] - T) < 0.02 * T


def test_pd_at_d195(d195):
    ev = d195["fam"].events_of("PD")[0]
    assert abs(ev.param - 3.280) < 5e-4
    assert abs(ev.diagnostics["T"] - 17.77) < 0.02 * 17.77


@pytest.mark.parametrize("key,sigma", [("d195", 3.277), ("d200", 3.2307)])
def test_homoclinic_extrapolation(request, key, sigma):
    fam = request.getfixturevalue(key)["fam"]
    ev = detect_homoclinic(fam)
    assert ev.kind == "Hom"
    assert abs(ev.param - sigma) < 0.002
    assert ev.diagnostics["R2"] >= 0.99 and ev.diagnostics["b"] > 0


def test_homoclinic_at_d230():
    ev = detect_homoclinic(_family(0.23)["fam"])
    assert ev.kind == "Hom"
    assert abs(ev.param - 2.996) < 0.002


def test_log_fit_recovers_synthetic_law():
    sh = 1.5
    sig = sh + np.geomspace(1e-2, 1e-8, 8)
    T = 3.0 - 2.0 * np.log(sig - sh)
    got, a, b, r2 = fit_log_period(sig, T)
    assert abs(got - sh) < 1e-10
    assert abs(b - 2.0) < 1e-6 and r2 > 0.999999


def test_period_curve_patterns(d200, d195):
    pcs = period_curve(d200["fam"])
    assert [c.label for c in pcs] == ["C1", "C2", "C3"]
    assert [c.stability_pattern() for c in pcs] == ["S", "U", "SU"]
    one = period_curve(d195["fam"])
    assert len(one) == 1 and one[0].stability_pattern() == "SU"


def test_period_grows_toward_homoclinic(d200):
    last = period_curve(d200["fam"])[-1]
    tail = last.periods[np.argmax(last.periods > 40):]
    assert np.all(np.diff(tail) > 0)
    assert np.all(np.diff(last.params[-len(tail):]) < 0)


def test_period_curve_rejects_nonpositive_period():
    with pytest.raises(ValueError):
        PeriodCurve("C1", np.array([1.0]), np.array([0.0]), ["stable"])


@pytest.mark.parametrize("key", ["d195", "d200"])
def test_stability_flips_only_at_events(request, key):
    fam = request.getfixturevalue(key)["fam"]
    st = [s.stability for s in fam.samples]
    flips = [k for k in range(1, len(st)) if st[k] != st[k - 1]]
    evs = [e for e in fam.events if e.kind in ("LPC", "PD")]
    assert len(flips) == len(evs)
    for k, e in zip(flips, sorted(evs, key=lambda e: e.diagnostics["T"])):
        lo, hi = sorted((fam.samples[k - 1].period, fam.samples[k].period))
        assert lo - 1e-6 <= e.diagnostics["T"] <= hi + 1e-6


def test_lpc_cycles_collide(d200):
    ev = d200["fam"].events_of("LPC")[0]
    cs = [c for c in d200["fam"].cycles if abs(c.period - ev.diagnostics["T"]) < 1.0]
    near = sorted(cs, key=lambda c: abs(c.param - ev.param))[:2]
    d_far = max(abs(c.period - ev.diagnostics["T"]) for c in cs)
    assert all(abs(c.period - ev.diagnostics["T"]) <= d_far for c in near)
    # on both sides of the fold the parameter sits on the same side of the event
    side = [np.sign(c.param - ev.param) for c in cs]
    assert len(set(side) - {0.0}) == 1


def test_continued_cycle_matches_simulation(d195):
    fam = d195["fam"]
    c = min((c for c in fam.cycles if c.stability == "stable"), key=lambda c: abs(c.param - 3.285))
    assert abs(c.param - 3.285) < 2e-3
    q = c.params
    tr = integrate(c.nodes[0] + np.array([0.0, 1e-3, 0.0]), q, 1500.0)
    t = np.linspace(1500.0 - 2 * c.period, 1500.0, 2000)
    tail = integrate(tr.final, q, 2 * c.period, t_eval=t - t[0]).y
    assert hausdorff(c.orbit(40), tail) < 1e-3


def test_multipliers_against_variational_oracle(d200):
    c = min(d200["fam"].cycles, key=lambda c: abs(c.period - 14.0))
    M, end = monodromy_ref(c.nodes[0], c.period, c.params.as_array())
    assert np.max(np.abs(end - c.nodes[0])) < 1e-7
    ref = sorted(np.abs(np.linalg.eigvals(M)))
    got = sorted(np.abs(c.multipliers))
    np.testing.assert_allclose(got, ref, rtol=1e-5, atol=1e-7)
