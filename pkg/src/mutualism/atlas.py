"""Two-parameter operating diagram in (S_in, D).

Fold and Hopf curves of equilibria are continued directly; cycle folds and
period doublings are assembled from one-parameter slices in S_in.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import arclength
from .arclength import StepPolicy
from .continuation import BifurcationEvent, branch_events, lyapunov_l1
from .cycles import CycleFamily, cycle_from_hopf, continue_cycles, detect_homoclinic, period_curve
from .equilibria import classify, find_coexistence, routh_hurwitz
from .errors import ConvergenceError, DomainError, IllConditionedError, MutualismError
from .model import ModelParams, jacobian, param_derivative, rhs

log = logging.getLogger(__name__)

DEFAULT_WINDOW = (0.0, 5.0, 0.0, 0.8)
DEFAULT_GRID = (200, 160)
OSC_D = (0.19, 0.232)
CURVE_TOL = 1e-10
GH_TOL = 1e-4
EVENT_DRIFT = 10.0  # bound on |d sigma / dD| of cycle events and Hopf points near the oscillatory window


@dataclass
class BifCurve:
    kind: str  # LP | H | LPC | PD | Hom
    S_in: np.ndarray
    D: np.ndarray
    aux: dict[str, np.ndarray] = field(default_factory=dict)
    label: str = ""

    def __len__(self) -> int:
        return len(self.S_in)

    def to_dict(self) -> dict:
        out = {"type": self.kind, "label": self.label,
               "S_in": [float(f"{v:.12g}") for v in self.S_in],
               "D": [float(f"{v:.12g}") for v in self.D]}
        for k, v in self.aux.items():
            arr = np.asarray(v, dtype=float)
            out[k] = np.round(arr, 12).tolist()
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "BifCurve":
        aux = {k: np.asarray(v, dtype=float) for k, v in d.items() if k not in ("type", "label", "S_in", "D")}
        return cls(d["type"], np.asarray(d["S_in"], dtype=float), np.asarray(d["D"], dtype=float), aux,
                   d.get("label", ""))


@dataclass
class Codim2Point:
    kind: str  # BT | GH | CPC | R1 | R2
    S_in: float
    D: float
    provenance: str
    uncertainty: float
    proxy: bool = False
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        diag = {k: (float(f"{v:.12g}") if isinstance(v, float) else v) for k, v in self.diagnostics.items()}
        return {"type": self.kind, "S_in": float(f"{self.S_in:.12g}"), "D": float(f"{self.D:.12g}"),
                "provenance": self.provenance, "uncertainty": float(f"{self.uncertainty:.6g}"),
                "proxy": self.proxy, "diagnostics": diag}

    @classmethod
    def from_dict(cls, d: dict) -> "Codim2Point":
        return cls(d["type"], d["S_in"], d["D"], d["provenance"], d["uncertainty"], d.get("proxy", False),
                   d.get("diagnostics", {}))


# ----------------------------------------------------------------------------
# equilibrium bifurcation curves
# ----------------------------------------------------------------------------


def _det_test(state, q):
    return float(np.linalg.det(jacobian(state, q)))


def _c4_test(state, q):
    return routh_hurwitz(state, q).c4


def _curve_system(p: ModelParams, test):
    """Residual/Jacobian of {rhs = 0, test = 0} in u = (S, x1, x2, S_in, D)."""

    def at(u):
        try:
            return p.with_operating(S_in=u[3], D=u[4])
        except DomainError as exc:
            raise ConvergenceError(str(exc)) from exc

    def fj(u):
        q = at(u)
        x = u[:3]
        r = np.empty(4)
        J = np.empty((4, 5))
        r[:3] = rhs(x, q)
        J[:3, :3] = jacobian(x, q)
        J[:3, 3] = param_derivative(x, q, "sin")
        J[:3, 4] = param_derivative(x, q, "d")
        r[3] = test(x, q)
        for k in range(5):
            h = 1e-6 * max(1.0, abs(u[k]))
            up, um = u.copy(), u.copy()
            up[k] += h
            um[k] -= h
            J[3, k] = (test(up[:3], at(up)) - test(um[:3], at(um))) / (2 * h)
        return r, J

    return fj


def _inside(u, window) -> bool:
    smin, smax, dmin, dmax = window
    return smin <= u[3] <= smax and dmin < u[4] <= dmax and np.all(u[:3] > 0)


def _trace_curve(fj, u0, window, policy, max_steps, monitors, tols, stop_when=None):
    """Pseudo-arclength in both directions; returns ordered points and located monitor zeros."""
    _, J0 = fj(u0)
    t0 = arclength.tangent(J0)
    halves = []
    found = []
    for sgn in (1.0, -1.0):
        u, t = u0.copy(), sgn * t0
        pts = [u.copy()]
        ds = policy.ds
        vals = [m(u) for m in monitors]
        for _ in range(max_steps):
            try:
                un, Jn = arclength.correct(fj, u, t, ds, policy.newton_tol, policy.newton_maxiter)
                if np.linalg.norm(un - u) > 2.5 * ds:
                    raise ConvergenceError("jump")
            except ConvergenceError:
                ds *= policy.shrink
                if ds < policy.ds_min:
                    break
                continue
            tn = arclength.tangent(Jn, t)
            new_vals = [m(un) for m in monitors]
            stop = False
            for k, (a, b) in enumerate(zip(vals, new_vals)):
                if a * b < 0 and math.isfinite(a) and math.isfinite(b):
                    tol = tols[k]
                    try:
                        h, gz = arclength.bracket_root(
                            lambda hh: monitors[k](arclength.correct(fj, u, t, hh, policy.newton_tol, 12)[0]),
                            0.0, a, ds, b, tol)
                        uz = arclength.correct(fj, u, t, h, policy.newton_tol, 12)[0]
                        # arclength over which |test| stays below the localisation tolerance
                        width = ds * (tol + abs(gz)) / abs(b - a)
                    except ConvergenceError:
                        uz = u + (a / (a - b)) * (un - u)
                        width = ds
                    found.append((k, uz, width))
                    if stop_when is not None and stop_when(k):
                        pts.append(uz)
                        stop = True
            if stop:
                break
            if not _inside(un, window):
                break
            u, t, vals = un, tn, new_vals
            pts.append(u.copy())
            ds = min(ds * policy.grow, policy.ds_max)
        halves.append(pts)
    back = halves[1][1:][::-1]
    return np.array(back + halves[0]), found


def _seed_vector(event: BifurcationEvent) -> np.ndarray:
    return np.concatenate([np.asarray(event.state, dtype=float), [event.S_in, event.D]])


def continue_lp_curve(p: ModelParams, seed: BifurcationEvent, window=DEFAULT_WINDOW,
                      policy: StepPolicy | None = None, max_steps: int = 4000) -> BifCurve:
    """Fold curve: equilibrium system plus det J = 0 in (S, x1, x2, S_in, D)."""
    policy = policy or StepPolicy(ds=0.01, ds_min=1e-8, ds_max=0.02, newton_tol=CURVE_TOL)
    fj = _curve_system(p, _det_test)
    u0 = _polish_curve_point(fj, _seed_vector(seed))

    def c2_mon(u):
        return routh_hurwitz(u[:3], p.with_operating(S_in=u[3], D=u[4])).c2

    pts, found = _trace_curve(fj, u0, window, policy, max_steps, [c2_mon], [1e-12])
    aux = {"S": pts[:, 0], "x1": pts[:, 1], "x2": pts[:, 2]}
    curve = BifCurve("LP", pts[:, 3], pts[:, 4], aux, "Gamma_LP")
    curve.aux["bt_candidates"] = np.array([[u[3], u[4]] for _, u, _ in found]).reshape(-1, 2)
    return curve


def _polish_curve_point(fj, u):
    """Newton with the last unknown (D) frozen."""
    u = u.copy()
    for _ in range(30):
        r, J = fj(u)
        if np.max(np.abs(r)) < CURVE_TOL:
            return u
        du = np.linalg.solve(J[:, :4], -r)
        u[:4] += du
    raise ConvergenceError("curve seed did not converge")


def continue_hopf_curve(p: ModelParams, seed: BifurcationEvent, window=DEFAULT_WINDOW,
                        policy: StepPolicy | None = None, max_steps: int = 4000,
                        with_l1: bool = True) -> tuple[BifCurve, list[Codim2Point]]:
    """Hopf curve: equilibrium system plus c4 = 0, traced while c2 > 0 and c3 > 0.

    Returns the curve and the codimension-two points met on it: GH where l1
    changes sign, BT where c2 reaches zero (the curve ends there).
    """
    policy = policy or StepPolicy(ds=0.01, ds_min=1e-8, ds_max=0.02, newton_tol=CURVE_TOL)
    fj = _curve_system(p, _c4_test)
    u0 = _polish_curve_point(fj, _seed_vector(seed))

    def q_of(u):
        return p.with_operating(S_in=u[3], D=u[4])

    def l1_mon(u):
        try:
            return lyapunov_l1(u[:3], q_of(u))
        except (IllConditionedError, MutualismError, np.linalg.LinAlgError):
            return float("nan")

    def c2_mon(u):
        return routh_hurwitz(u[:3], q_of(u)).c2

    monitors = [l1_mon, c2_mon] if with_l1 else [lambda u: 1.0, c2_mon]
    pts, found = _trace_curve(fj, u0, window, policy, max_steps, monitors, [GH_TOL, 1e-12],
                              stop_when=lambda k: k == 1)
    c2 = np.array([c2_mon(u) for u in pts])
    c3 = np.array([routh_hurwitz(u[:3], q_of(u)).c3 for u in pts])
    keep = (c2 >= -1e-12) & (c3 >= -1e-12)
    pts, c2, c3 = pts[keep], c2[keep], c3[keep]
    aux = {"S": pts[:, 0], "x1": pts[:, 1], "x2": pts[:, 2], "omega2": c2}
    if with_l1:
        aux["l1"] = np.array([l1_mon(u) for u in pts])
    curve = BifCurve("H", pts[:, 3], pts[:, 4], aux, "Gamma_H")
    points = []
    for k, u, ds in found:
        if k == 0:
            points.append(Codim2Point("GH", float(u[3]), float(u[4]), "Gamma_H: l1 sign change", ds,
                                      diagnostics={"l1": l1_mon(u), "omega": math.sqrt(max(c2_mon(u), 0.0))}))
        else:
            points.append(Codim2Point("BT", float(u[3]), float(u[4]), "Gamma_H: c2 -> 0", ds,
                                      diagnostics={"c2": c2_mon(u),
                                                   "c3": routh_hurwitz(u[:3], q_of(u)).c3}))
    return curve, points


def equilibrium_curves(p: ModelParams, D_seed: float = 0.2, window=DEFAULT_WINDOW,
                       sin_range=(0.0, 5.0)) -> tuple[BifCurve | None, BifCurve | None, list[Codim2Point]]:
    """Gamma_LP and Gamma_H seeded from the S_in branch at ``D_seed``."""
    q = p.with_operating(D=D_seed)
    lp = hc = None
    pts: list[Codim2Point] = []
    br = branch_events(q, "sin", sin_range)
    lp_ev = next((e for e in br.events if e.kind == "LP"), None)
    h_ev = next((e for e in br.events if e.kind == "H"), None)
    if lp_ev is not None:
        lp = continue_lp_curve(p, lp_ev, window)
    if h_ev is not None:
        hc, pts = continue_hopf_curve(p, h_ev, window)
    if lp is not None:
        for bt in [c for c in pts if c.kind == "BT"]:
            d = _distance_to_curve((bt.S_in, bt.D), lp)
            cand = lp.aux.get("bt_candidates", np.empty((0, 2)))
            if len(cand):
                d = min(d, float(np.min(np.hypot(cand[:, 0] - bt.S_in, cand[:, 1] - bt.D))))
            bt.diagnostics["distance_to_LP"] = d
            bt.uncertainty = max(bt.uncertainty, d)
    return lp, hc, pts


def _distance_to_curve(pt, curve: BifCurve) -> float:
    if curve is None or len(curve) == 0:
        return float("inf")
    P = np.column_stack([curve.S_in, curve.D])
    a, b = P[:-1], P[1:]
    ab = b - a
    L = np.einsum("ij,ij->i", ab, ab)
    L[L == 0] = 1e-300
    s = np.clip(np.einsum("ij,ij->i", np.asarray(pt) - a, ab) / L, 0, 1)
    proj = a + s[:, None] * ab
    d = np.linalg.norm(proj - np.asarray(pt), axis=1)
    return float(d.min()) if len(d) else float(np.linalg.norm(P[0] - pt))


# ----------------------------------------------------------------------------
# cycle curves from slices
# ----------------------------------------------------------------------------


@dataclass
class SliceResult:
    D: float
    events: list[BifurcationEvent]
    families: list[CycleFamily]
    hopf: list[BifurcationEvent]
    error: str | None = None

    def of(self, kind: str) -> list[BifurcationEvent]:
        return sorted((e for e in self.events if e.kind == kind), key=lambda e: e.param)

    def signature(self) -> tuple[int, int]:
        return len(self.of("LPC")), len(self.of("PD"))


def run_slice(p: ModelParams, D: float, sin_range=(2.0, 4.0), keep_families: bool = True) -> SliceResult:
    q = p.with_operating(D=D)
    try:
        br = branch_events(q, "sin", sin_range)
    except MutualismError as exc:
        return SliceResult(D, [], [], [], str(exc))
    hopf = [e for e in br.events if e.kind == "H"]
    events, fams = [], []
    for h in hopf:
        try:
            seed = cycle_from_hopf(h, q)
            fam = continue_cycles(seed, range_=sin_range)
        except MutualismError as exc:
            log.warning("slice D=%g: cycle family failed: %s", D, exc)
            continue
        hom = detect_homoclinic(fam)
        fam.events.append(hom)
        for e in fam.events:
            e.D = D
        events.extend(e for e in fam.events if e.kind in ("LPC", "PD", "Hom"))
        if keep_families:
            fams.append(fam)
    return SliceResult(D, events, fams, hopf)


def sweep_slices(p: ModelParams, D_grid, sin_range=(2.0, 4.0), refine: int = 4,
                 progress=None) -> list[SliceResult]:
    """Slices at every D in the grid, refined ``refine``-fold where the event count changes."""
    D_grid = sorted(float(d) for d in D_grid)
    res = {}
    for k, D in enumerate(D_grid):
        res[D] = run_slice(p, D, sin_range)
        if progress:
            progress(k + 1, len(D_grid))
    if refine > 1:
        extra = []
        for a, b in zip(D_grid[:-1], D_grid[1:]):
            if res[a].signature() != res[b].signature():
                extra.extend(a + (b - a) * j / refine for j in range(1, refine))
        for D in extra:
            res[D] = run_slice(p, D, sin_range)
    return [res[D] for D in sorted(res)]


def _other_multiplier(ev: BifurcationEvent) -> float:
    m = ev.diagnostics.get("multipliers")
    if not m:
        return float("nan")
    target = 1.0 if ev.kind == "LPC" else -1.0
    z = [complex(*a) for a in m]
    z.sort(key=lambda c: abs(c - target))
    return float(z[1].real)


def chain_events(slices: list[SliceResult], kind: str) -> list[BifCurve]:
    """Nearest-neighbour chaining of per-slice event values into curves.

    Each chain predicts its next sigma by linear extrapolation and matches on
    sigma and log-period; unmatched events start new chains.
    """
    chains: list[list[tuple[float, BifurcationEvent]]] = []
    for sl in slices:
        evs = sl.of(kind)
        free = list(range(len(evs)))
        live = [c for c in chains if c[-1][0] < sl.D and c[-1][0] == _last_D(chains, c, slices, sl)]
        scored = []
        for ci, c in enumerate(live):
            pred_s, pred_T = _predict(c, sl.D)
            for ei in free:
                e = evs[ei]
                d = abs(e.param - pred_s) / 0.01 + abs(math.log(e.diagnostics["T"] / pred_T))
                scored.append((d, ci, ei))
        scored.sort()
        used_c, used_e = set(), set()
        for d, ci, ei in scored:
            if ci in used_c or ei in used_e or d > 5.0:
                continue
            live[ci].append((sl.D, evs[ei]))
            used_c.add(ci)
            used_e.add(ei)
        for ei in free:
            if ei not in used_e:
                chains.append([(sl.D, evs[ei])])
    curves = []
    for n, c in enumerate(sorted(chains, key=lambda c: (c[0][0], c[0][1].param))):
        curves.append(BifCurve(
            kind,
            np.array([e.param for _, e in c]),
            np.array([D for D, _ in c]),
            {"T": np.array([e.diagnostics["T"] for _, e in c]),
             "other_multiplier": np.array([_other_multiplier(e) for _, e in c])},
            f"Gamma_{kind}_{n + 1}",
        ))
    return curves


def _last_D(chains, c, slices, sl):
    """D of the slice preceding ``sl`` (chains must be continued slice by slice)."""
    Ds = [s.D for s in slices]
    k = Ds.index(sl.D)
    return Ds[k - 1] if k > 0 else None


def _predict(c, D):
    if len(c) == 1:
        return c[0][1].param, c[0][1].diagnostics["T"]
    (D0, e0), (D1, e1) = c[-2], c[-1]
    w = (D - D1) / (D1 - D0)
    s = e1.param + w * (e1.param - e0.param)
    T = e1.diagnostics["T"] * (e1.diagnostics["T"] / e0.diagnostics["T"]) ** w
    return s, T


def bisect_slices(p: ModelParams, slices: list[SliceResult], has, sin_range=(2.0, 4.0),
                  iters: int = 3) -> list[SliceResult]:
    """Bisect in D every bracket where the predicate ``has(slice)`` switches value."""
    res = {s.D: s for s in slices}
    for _ in range(iters):
        Ds = sorted(res)
        new = [0.5 * (a + b) for a, b in zip(Ds[:-1], Ds[1:]) if has(res[a]) != has(res[b])]
        for D in new:
            res[D] = run_slice(p, D, sin_range)
    return [res[D] for D in sorted(res)]


def _has_lpc_pair(sl: SliceResult) -> bool:
    return len(sl.of("LPC")) >= 2


def _has_pd(sl: SliceResult) -> bool:
    return len(sl.of("PD")) > 0


def sweep_cycle_curves(p: ModelParams, D_grid=None, sin_range=(2.0, 4.0), refine: int = 4,
                       slices: list[SliceResult] | None = None, progress=None, bisect: int = 3):
    """LPC, PD and homoclinic curves from slices.  Returns (curves, slices).

    After the ×``refine`` pass, brackets where the LPC pair or the PD event
    appears or disappears are bisected ``bisect`` more times.
    """
    if slices is None:
        if D_grid is None:
            D_grid = np.linspace(*OSC_D, 22)
        slices = sweep_slices(p, D_grid, sin_range, refine, progress)
        if bisect > 0:
            slices = bisect_slices(p, slices, _has_lpc_pair, sin_range, bisect)
            slices = bisect_slices(p, slices, _has_pd, sin_range, bisect)
    curves = chain_events(slices, "LPC") + chain_events(slices, "PD")
    hom = [(sl.D, e) for sl in slices for e in sl.events if e.kind == "Hom"]
    if hom:
        curves.append(BifCurve("Hom", np.array([e.param for _, e in hom]), np.array([D for D, _ in hom]),
                               {}, "Gamma_Hom"))
    return curves, slices


def close_pairs(slices: list[SliceResult], loc_tol: float = 1e-8) -> list[tuple[float, float, float]]:
    """Slices where a PD and an LPC value are closer than twice the localisation tolerance."""
    out = []
    for sl in slices:
        for a in sl.of("PD"):
            for b in sl.of("LPC"):
                if abs(a.param - b.param) < 2 * loc_tol:
                    out.append((sl.D, a.param, b.param))
    return out


# ----------------------------------------------------------------------------
# codimension-two points
# ----------------------------------------------------------------------------


def _spacing(slices, D) -> float:
    Ds = np.array(sorted(s.D for s in slices))
    if len(Ds) < 2:
        return float("inf")
    k = int(np.argmin(np.abs(Ds - D)))
    gaps = []
    if k > 0:
        gaps.append(Ds[k] - Ds[k - 1])
    if k < len(Ds) - 1:
        gaps.append(Ds[k + 1] - Ds[k])
    return float(max(gaps))


def _end_uncertainty(c: BifCurve, k: int, slices) -> float:
    """Distance in the plane spanned by the unresolved D-bracket beyond a chain end."""
    D = float(c.D[k])
    after = [s.D for s in slices if s.D > D]
    dD = (min(after) - D) if after else _spacing(slices, D)
    slope = 0.0
    if len(c) > 1:
        j = k - 1 if k > 0 else k + 1
        if c.D[j] != c.D[k]:
            slope = (c.S_in[k] - c.S_in[j]) / (c.D[k] - c.D[j])
    return float(dD * math.hypot(1.0, slope))


def locate_cpc(slices: list[SliceResult]) -> Codim2Point | None:
    """Coalescence of the two LPC values per slice, from a quadratic fit of gap^2 against D.

    The fitted root is only accepted inside the bracket between the last slice
    without an LPC pair and the first slice with one; otherwise the bracket
    midpoint is used.  The bracket width is the reported uncertainty.
    """
    pairs = []
    for sl in slices:
        lpc = sl.of("LPC")
        if len(lpc) >= 2:
            # the pair born together: closest in sigma
            gap, a, b = min(((b.param - a.param, a, b) for a, b in zip(lpc[:-1], lpc[1:])), key=lambda z: z[0])
            pairs.append((sl.D, gap, 0.5 * (a.param + b.param)))
    if not pairs:
        return None
    pairs.sort()
    D_hi = pairs[0][0]
    below = [s.D for s in slices if s.D < D_hi and not _has_lpc_pair(s)]
    D_lo = max(below) if below else D_hi - _spacing(slices, D_hi)
    use = pairs[:3]
    D = np.array([u[0] for u in use])
    g2 = np.array([u[1] ** 2 for u in use])
    mid = np.array([u[2] for u in use])
    Dc = 0.5 * (D_lo + D_hi)
    method = "bracket midpoint"
    if len(use) == 3:
        roots = [r.real for r in np.roots(np.polyfit(D, g2, 2)) if abs(r.imag) < 1e-12]
        cand = [r for r in roots if D_lo <= r <= D_hi]
        if cand:
            Dc = max(cand)
            method = "gap^2 quadratic fit"
    if len(use) >= 2:
        Sc = float(np.polyval(np.polyfit(D[:2], mid[:2], 1), Dc))
    else:
        Sc = float(mid[0])
    slope = (mid[1] - mid[0]) / (D[1] - D[0]) if len(use) >= 2 else 0.0
    unc = max(D_hi - D_lo, 1e-12) * math.hypot(1.0, slope)
    return Codim2Point("CPC", Sc, float(Dc), f"LPC slices: {method}", float(unc),
                       diagnostics={"n_slices": len(use), "min_gap": float(np.sqrt(g2[0])),
                                    "bracket": [float(D_lo), float(D_hi)]})


def locate_r2(curves: list[BifCurve], slices: list[SliceResult]) -> Codim2Point | None:
    """Turning point in D of the assembled PD curve (its D-extremal end)."""
    pd = [c for c in curves if c.kind == "PD" and len(c) > 0]
    if not pd:
        return None
    c = max(pd, key=len)
    k = int(np.argmax(c.D))
    D = float(c.D[k])
    unc = _end_uncertainty(c, k, slices)
    return Codim2Point("R2", float(c.S_in[k]), D, f"{c.label}: D-extremal point", float(unc),
                       diagnostics={"T": float(c.aux["T"][k]),
                                    "other_multiplier": float(c.aux["other_multiplier"][k])})


def locate_r1_proxy(curves: list[BifCurve], hopf: BifCurve | None, slices: list[SliceResult]) -> Codim2Point | None:
    """Proxy for the 1:1 resonance on the cycle-fold curve.

    The cycle-fold chain that shadows the period-doubling curve ends where its
    period diverges; its D-extremal point is reported.  The closest approach of
    every fold chain to Gamma_H is attached for reference.
    """
    lpc = [c for c in curves if c.kind == "LPC" and len(c) > 0]
    if not lpc:
        return None
    c = max(lpc, key=lambda c: float(np.max(c.aux["T"])))
    k = int(np.argmax(c.D))
    D = float(c.D[k])
    unc = _end_uncertainty(c, k, slices)
    diag = {"T": float(c.aux["T"][k]), "chain": c.label}
    if hopf is not None:
        for cc in lpc:
            dists = [_distance_to_curve((s, d), hopf) for s, d in zip(cc.S_in, cc.D)]
            j = int(np.argmin(dists))
            diag[f"closest_to_H_{cc.label}"] = [float(dists[j]), float(cc.S_in[j]), float(cc.D[j])]
    return Codim2Point("R1", float(c.S_in[k]), D, f"{c.label}: D-extremal point (proxy)", float(unc),
                       proxy=True, diagnostics=diag)


def locate_codim2(curves: list[BifCurve], slices: list[SliceResult], hopf: BifCurve | None = None,
                  equilibrium_points: list[Codim2Point] | None = None) -> list[Codim2Point]:
    out = list(equilibrium_points or [])
    for fn in (lambda: locate_cpc(slices), lambda: locate_r2(curves, slices),
               lambda: locate_r1_proxy(curves, hopf, slices)):
        pt = fn()
        if pt is not None:
            out.append(pt)
    return out


# ----------------------------------------------------------------------------
# regions
# ----------------------------------------------------------------------------


@dataclass
class RegionGrid:
    S_in: np.ndarray
    D: np.ndarray
    labels: np.ndarray  # (nD, nS) of str
    flagged: np.ndarray  # (nD, nS) bool
    inventory: dict = field(default_factory=dict)

    def label_at(self, S_in: float, D: float) -> str:
        i = int(np.argmin(np.abs(self.S_in - S_in)))
        j = int(np.argmin(np.abs(self.D - D)))
        return str(self.labels[j, i])

    def counts(self) -> dict[str, int]:
        u, c = np.unique(self.labels, return_counts=True)
        return {str(a): int(b) for a, b in zip(u, c)}


def equilibrium_inventory(S_in: float, D: float, p: ModelParams) -> tuple[str, str]:
    """('J0' | 'J1' | 'J2', stability string of the coexistence equilibria)."""
    q = p.with_operating(S_in=S_in, D=D)
    eqs = find_coexistence(q)
    if not eqs:
        return "J0", ""
    st = "".join("S" if classify(e, q).stability == "LES" else "U" for e in eqs)
    if "S" in st:
        return "J2", st
    return "J1", st


def _slice_cycles(pieces, S_in: float) -> list[tuple[str, str]]:
    """(label, stability) of every cycle piece of a slice existing at S_in."""
    out = []
    for pc in pieces:
        lo, hi = float(np.min(pc.params)), float(np.max(pc.params))
        if lo < S_in < hi:
            k = int(np.argmin(np.abs(pc.params - S_in)))
            out.append((pc.label, "s" if pc.stability[k] == "stable" else "u"))
    return out


def region_label(eq_class: str, cycles: list[tuple[str, str]]) -> str:
    if eq_class == "J0" or not cycles:
        return f"{eq_class}^0" if eq_class != "J0" else "J0"
    cycles = sorted(cycles)
    idx = "".join(c[0][1:] for c in cycles)
    stab = "".join(c[1] for c in cycles)
    return f"{eq_class}^C{idx}{stab}"


def classify_regions(p: ModelParams, window=DEFAULT_WINDOW, resolution=DEFAULT_GRID,
                     slices: list[SliceResult] | None = None, curves: list[BifCurve] | None = None,
                     progress=None) -> RegionGrid:
    """Label every cell of an (S_in, D) grid with its equilibrium and cycle inventory.

    Equilibria are recomputed per cell; cycles are borrowed from the nearest
    D slice.  A cell is flagged when a slice event lies within the distance
    the event can drift between the slice and the cell, or when the cell sits
    in the Hopf curve's D range with two unstable equilibria but outside the
    slice coverage (its cycle inventory is then unknown).
    """
    smin, smax, dmin, dmax = window
    nS, nD = resolution
    S = np.linspace(smin, smax, nS + 1)[:-1] + (smax - smin) / nS / 2
    Dg = np.linspace(dmin, dmax, nD + 1)[:-1] + (dmax - dmin) / nD / 2
    labels = np.empty((nD, nS), dtype=object)
    flagged = np.zeros((nD, nS), dtype=bool)
    slices = sorted(slices or [], key=lambda s: s.D)
    sD = np.array([s.D for s in slices])
    pieces = [period_curve(s.families) if s.families else [] for s in slices]
    marks = [np.array([e.param for e in s.events] + [h.param for h in s.hopf]) for s in slices]
    half = 0.5 * (np.max(np.diff(sD)) if len(sD) > 1 else 0.0)
    dS = (smax - smin) / nS
    hopf_D = None
    for c in curves or []:
        if c.kind == "H" and len(c):
            hopf_D = (float(np.min(c.D)), float(np.max(c.D)))
    for j, D in enumerate(Dg):
        sl = pcs = mk = None
        if len(sD) and sD[0] - half <= D <= sD[-1] + half:
            ks = int(np.argmin(np.abs(sD - D)))
            sl, pcs, mk = slices[ks], pieces[ks], marks[ks]
        drift = EVENT_DRIFT * abs(sl.D - D) + dS if sl is not None else 0.0
        for i, s in enumerate(S):
            try:
                cls, _ = equilibrium_inventory(s, D, p)
            except MutualismError:
                labels[j, i] = "unresolved"
                flagged[j, i] = True
                continue
            cyc = _slice_cycles(pcs, s) if (sl is not None and cls != "J0") else []
            labels[j, i] = region_label(cls, cyc)
            if sl is not None:
                if cls != "J0" and len(mk) and np.min(np.abs(mk - s)) < drift:
                    flagged[j, i] = True
            elif cls == "J1" and hopf_D is not None and hopf_D[0] <= D <= hopf_D[1]:
                flagged[j, i] = True
        if progress:
            progress(j + 1, nD)
    return RegionGrid(S, Dg, labels.astype(str), flagged)


# ----------------------------------------------------------------------------
# orchestration
# ----------------------------------------------------------------------------


@dataclass
class Atlas:
    curves: list[BifCurve]
    codim2: list[Codim2Point]
    regions: RegionGrid | None
    slices: list[SliceResult] = field(default_factory=list)


def build_atlas(p: ModelParams, window=DEFAULT_WINDOW, grid=DEFAULT_GRID, n_slices: int = 22,
                D_range=OSC_D, sin_range=(2.0, 4.0), refine: int = 4, regions: bool = True,
                progress=None) -> Atlas:
    lp, hc, eq_pts = equilibrium_curves(p, window=window)
    D_grid = np.linspace(*D_range, n_slices) if n_slices > 0 else []
    cyc_curves, slices = sweep_cycle_curves(p, D_grid, sin_range, refine, progress=progress) \
        if n_slices > 0 else ([], [])
    curves = [c for c in (lp, hc) if c is not None] + cyc_curves
    pts = locate_codim2(cyc_curves, slices, hc, eq_pts)
    reg = classify_regions(p, window, grid, slices, curves) if regions else None
    return Atlas(curves, pts, reg, slices)
