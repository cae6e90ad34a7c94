"""Pseudo-arclength continuation of coexistence equilibria in S_in or D.

Fold (LP) points are located on the sign change of c3 = -det J*, Hopf points on
the sign change of c4 = c1*c2 - c3 subject to c2 > 0 and c3 > 0.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import arclength
from .arclength import StepPolicy
from .equilibria import Equilibrium, classify, cubic_roots, polish, routh_hurwitz
from .errors import ConvergenceError, IllConditionedError, LocalizationError
from .model import ModelParams, jacobian, param_derivative, rhs

log = logging.getLogger(__name__)

EVENT_TOL = 1e-10


@dataclass
class BranchPoint:
    param: float
    state: np.ndarray
    tangent: np.ndarray
    c: tuple[float, float, float, float]
    mu: float
    nu: float
    arclength: float = 0.0

    @property
    def t_lp(self) -> float:
        return self.c[2]

    @property
    def t_h(self) -> float:
        return self.c[3]

    @property
    def stable(self) -> bool:
        return self.c[2] > 0 and self.c[3] > 0

    @property
    def n_unstable(self) -> int:
        ev = cubic_roots(self.c[0], self.c[1], self.c[2])
        return sum(1 for z in ev if z.real > 0)


@dataclass
class BifurcationEvent:
    kind: str  # LP | H | LPC | PD | Hom | neutral-saddle | terminated
    param: float
    state: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)
    free: str = "sin"
    D: float | None = None
    S_in: float | None = None

    def to_dict(self) -> dict:
        out = {"type": self.kind, "param": float(f"{self.param:.12g}"), "free": self.free}
        if self.state is not None:
            out["state"] = [float(f"{v:.12g}") for v in self.state]
        if self.D is not None:
            out["D"] = float(f"{self.D:.12g}")
        if self.S_in is not None:
            out["S_in"] = float(f"{self.S_in:.12g}")
        diag = {}
        for k, v in self.diagnostics.items():
            if isinstance(v, float):
                diag[k] = float(f"{v:.12g}")
            elif isinstance(v, (list, tuple)):
                diag[k] = [float(f"{x:.12g}") if isinstance(x, float) else x for x in v]
            else:
                diag[k] = v
        out["diagnostics"] = diag
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "BifurcationEvent":
        state = np.asarray(d["state"], dtype=float) if d.get("state") is not None else None
        return cls(d["type"], float(d["param"]), state, dict(d.get("diagnostics", {})), d.get("free", "sin"),
                   d.get("D"), d.get("S_in"))


@dataclass
class Branch:
    free: str
    base: ModelParams
    points: list[BranchPoint]
    events: list[BifurcationEvent]
    terminated: str | None = None

    def params(self) -> np.ndarray:
        return np.array([pt.param for pt in self.points])

    def states(self) -> np.ndarray:
        return np.array([pt.state for pt in self.points])

    def events_of(self, kind: str) -> list[BifurcationEvent]:
        return [e for e in self.events if e.kind == kind]


# ----------------------------------------------------------------------------
# equilibrium system in (S, x1, x2, lambda)
# ----------------------------------------------------------------------------


def _params_at(p: ModelParams, free: str, lam: float) -> ModelParams:
    return p.with_param(free, lam)


def _fj(p: ModelParams, free: str):
    def fj(v):
        q = _params_at(p, free, v[3])
        u = v[:3]
        J = np.empty((3, 4))
        J[:, :3] = jacobian(u, q)
        J[:, 3] = param_derivative(u, q, free)
        return rhs(u, q), J

    return fj


def _point(v: np.ndarray, t: np.ndarray, p: ModelParams, free: str, s: float) -> BranchPoint:
    q = _params_at(p, free, v[3])
    rh = routh_hurwitz(v[:3], q)
    ev = cubic_roots(rh.c1, rh.c2, rh.c3)
    complex_pair = [z for z in ev if z.imag > 0]
    if complex_pair:
        mu, nu = complex_pair[0].real, complex_pair[0].imag
    else:
        mu, nu = max(z.real for z in ev), 0.0
    return BranchPoint(float(v[3]), v[:3].copy(), t.copy(), rh.as_tuple(), mu, nu, s)


def _test(pt: BranchPoint, kind: str) -> float:
    return pt.c[2] if kind == "LP" else pt.c[3]


def continue_equilibria(
    start: Equilibrium | np.ndarray,
    p: ModelParams,
    free: str = "sin",
    range_: tuple[float, float] = (0.0, 5.0),
    policy: StepPolicy | None = None,
    direction: int = 0,
    max_steps: int = 5000,
) -> Branch:
    """Trace the branch through ``start``.

    ``direction`` = +1 / -1 follows increasing / decreasing parameter from the
    start; 0 runs both ways and joins them into one arclength-ordered branch.
    """
    policy = policy or StepPolicy()
    u0 = start.state if isinstance(start, Equilibrium) else np.asarray(start, dtype=float)
    lam0 = p.S_in if free in ("sin", "S_in") else p.D
    u0 = polish(u0, p)
    if np.max(np.abs(rhs(u0, p))) > 1e-10:
        raise ConvergenceError("start point is not an equilibrium")
    v0 = np.concatenate([u0, [lam0]])
    fj = _fj(p, free)
    _, J0 = fj(v0)
    t0 = arclength.tangent(J0)
    if t0[3] < 0:
        t0 = -t0
    dirs = [direction] if direction else [-1, 1]
    halves = {}
    term = None
    for d in dirs:
        pts, evs, why = _trace(fj, v0, d * t0, p, free, range_, policy, max_steps)
        halves[d] = (pts, evs)
        if why and why != "range":
            term = why
    if direction:
        pts, evs = halves[direction]
    else:
        back, bev = halves[-1]
        fwd, fev = halves[1]
        for pt in back:
            pt.arclength = -pt.arclength
            pt.tangent = -pt.tangent
        pts = back[::-1] + fwd[1:]
        evs = bev[::-1] + fev
    return Branch(free, p, pts, evs, term)


def _trace(fj, v0, t0, p, free, range_, policy, max_steps):
    lo, hi = range_
    v, t = v0.copy(), t0.copy()
    s = 0.0
    pts = [_point(v, t, p, free, s)]
    events: list[BifurcationEvent] = []
    ds = policy.ds
    ok_run = 0
    why = None
    for _ in range(max_steps):
        try:
            vn, Jn = arclength.correct(fj, v, t, ds, policy.newton_tol, policy.newton_maxiter)
            if np.linalg.norm(vn - v) > 3 * ds:
                raise ConvergenceError("corrector jumped")
        except ConvergenceError:
            ds *= policy.shrink
            ok_run = 0
            if ds < policy.ds_min:
                why = "corrector stall"
                events.append(BifurcationEvent("terminated", float(v[3]), v[:3].copy(),
                                               {"reason": why}, free))
                break
            continue
        tn = arclength.tangent(Jn, t)
        s += ds
        pt = _point(vn, tn, p, free, s)
        prev = pts[-1]
        for kind in ("LP", "H"):
            a, b = _test(prev, kind), _test(pt, kind)
            if a * b < 0:
                try:
                    events.append(locate_event(fj, v, t, ds, kind, p, free, a, b))
                except ConvergenceError as exc:
                    log.warning("could not locate %s: %s", kind, exc)
        pts.append(pt)
        v, t = vn, tn
        ok_run += 1
        if ok_run >= policy.grow_after:
            ds = min(ds * policy.grow, policy.ds_max)
            ok_run = 0
        if not lo <= v[3] <= hi:
            why = "range"
            break
        if np.any(v[:3] <= 0):
            why = "domain boundary"
            break
    return pts, events, why


def locate_event(fj, v, t, ds, kind, p, free, ta=None, tb=None) -> BifurcationEvent:
    """Secant search along the arclength step [0, ds] from ``v`` for a zero of the test."""
    cache = {}

    def at(h):
        vv, JJ = arclength.correct(fj, v, t, h, 1e-13, 12) if h != 0 else (v, None)
        pt = _point(vv, t, p, free, 0.0)
        cache[h] = (vv, pt)
        return _test(pt, kind)

    fa = at(0.0) if ta is None else ta
    fb = at(ds) if tb is None else tb
    try:
        h, fh = arclength.bracket_root(at, 0.0, fa, ds, fb, EVENT_TOL)
    except ConvergenceError as exc:
        raise LocalizationError(str(exc)) from exc
    if h not in cache:
        at(h)
    vv, pt = cache[h]
    q = _params_at(p, free, vv[3])
    diag: dict = {"c": list(pt.c), "mu": pt.mu, "nu": pt.nu}
    if kind == "LP":
        diag["detJ"] = float(np.linalg.det(jacobian(vv[:3], q)))
        ev = BifurcationEvent("LP", float(vv[3]), vv[:3].copy(), diag, free)
    else:
        c1, c2, c3, c4 = pt.c
        if c2 > 0 and c3 > 0:
            diag["omega"] = math.sqrt(c2)
            try:
                diag["l1"] = lyapunov_l1(vv[:3], q)
            except IllConditionedError:
                diag["l1"] = float("nan")
            ev = BifurcationEvent("H", float(vv[3]), vv[:3].copy(), diag, free)
        else:
            ev = BifurcationEvent("neutral-saddle", float(vv[3]), vv[:3].copy(), diag, free)
    ev.S_in, ev.D = q.S_in, q.D
    return ev


def equilibrium_at(state_guess, p: ModelParams) -> np.ndarray:
    u = polish(state_guess, p, tol=1e-13)
    if np.max(np.abs(rhs(u, p))) > 1e-10:
        raise ConvergenceError("equilibrium Newton failed")
    return u


def complex_pair(state, p: ModelParams) -> complex:
    rh = routh_hurwitz(state, p)
    ev = cubic_roots(rh.c1, rh.c2, rh.c3)
    pair = [z for z in ev if z.imag > 0]
    if not pair:
        raise IllConditionedError("no complex eigenvalue pair")
    return pair[0]


def transversality(event: BifurcationEvent, p: ModelParams, delta: float = 1e-4) -> float:
    """Central-difference slope d mu / d param of the complex pair's real part at a Hopf point."""
    free = event.free
    base = p.with_operating(S_in=event.S_in, D=event.D) if event.S_in is not None else p
    lam = event.param

    def mu_at(x):
        q = base.with_param(free, x)
        u = equilibrium_at(event.state, q)
        return complex_pair(u, q).real

    return (mu_at(lam + delta) - mu_at(lam - delta)) / (2 * delta)


# ----------------------------------------------------------------------------
# first Lyapunov coefficient
# ----------------------------------------------------------------------------


def _derivative_tensors(u: np.ndarray, p: ModelParams, h: float = 1e-4):
    """Second and third derivative tensors of the vector field from the analytic Jacobian."""
    n = 3
    hs = h * np.maximum(1.0, np.abs(u))
    B = np.empty((n, n, n))
    C = np.empty((n, n, n, n))
    E = np.eye(n)
    for k in range(n):
        B[:, :, k] = (jacobian(u + hs[k] * E[k], p) - jacobian(u - hs[k] * E[k], p)) / (2 * hs[k])
    for k in range(n):
        for l in range(n):
            ek, el = hs[k] * E[k], hs[l] * E[l]
            C[:, :, k, l] = (
                jacobian(u + ek + el, p) - jacobian(u + ek - el, p)
                - jacobian(u - ek + el, p) + jacobian(u - ek - el, p)
            ) / (4 * hs[k] * hs[l])
    return B, C


def lyapunov_l1(state, p: ModelParams, h: float = 1e-4, scale: complex = 1.0) -> float:
    """First Lyapunov coefficient at a Hopf equilibrium (Kuznetsov normalisation).

    ``scale`` rescales the initial eigenvector guess; the result does not depend on it.
    """
    u = np.asarray(state, dtype=float)
    A = jacobian(u, p)
    w, V = np.linalg.eig(A)
    k = int(np.argmax(w.imag))
    omega = w[k].imag
    if omega < 1e-6:
        raise IllConditionedError(f"Hopf frequency {omega:.2e} too small")
    q = V[:, k] * scale
    wl, W = np.linalg.eig(A.T)
    kl = int(np.argmin(np.abs(wl - (-1j * omega))))
    pv = W[:, kl]
    q = q / np.linalg.norm(q)
    pv = pv / np.conj(np.vdot(pv, q))  # <p, q> = conj(p) . q = 1
    B3, C4 = _derivative_tensors(u, p, h)
    Bf = lambda x, y: np.einsum("ijk,j,k->i", B3, x, y)
    Cf = lambda x, y, z: np.einsum("ijkl,j,k,l->i", C4, x, y, z)
    qb = np.conj(q)
    a = np.linalg.solve(A, Bf(q, qb))
    b = np.linalg.solve(2j * omega * np.eye(3) - A, Bf(q, q))
    val = np.vdot(pv, Cf(q, q, qb)) - 2 * np.vdot(pv, Bf(q, a)) + np.vdot(pv, Bf(qb, b))
    return float(val.real / (2 * omega))


def branch_events(p: ModelParams, free: str = "sin", range_=(0.0, 5.0),
                  policy: StepPolicy | None = None) -> Branch:
    """Continue the coexistence branch found at the reference parameter values."""
    from .equilibria import find_coexistence

    eqs = find_coexistence(p)
    if not eqs:
        raise ConvergenceError("no coexistence equilibrium at the reference point")
    return continue_equilibria(eqs[0], p, free, range_, policy)
