"""Time integration, attractor classification and basin maps."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .equilibria import find_coexistence
from .errors import DomainError, StiffnessError
from .model import ModelParams, omega_bound, rhs, washout

CHUNK = 50.0
CHUNK_STEPS = 200000
VEL_TOL = 1e-9
EQ_TOL = 1e-5
RETURN_TOL = 1e-5
PERIOD_RTOL = 1e-3
DEFAULT_BUDGET = 5000.0
DEFAULT_TOL = 1e-10


@dataclass
class Trajectory:
    t: np.ndarray
    y: np.ndarray
    steps: int = 0
    rejected: int = 0

    @property
    def final(self) -> np.ndarray:
        return self.y[-1]

    def stats(self) -> dict:
        return {"steps": self.steps, "rejected": self.rejected, "t_end": float(self.t[-1])}


def _run(y0, t_end, pr, rtol, atol, record, clip=True):
    y, status, na, nr, ts, ys = _kernels.dp54(y0, t_end, pr, 0, False, rtol, atol, -1.0, CHUNK_STEPS, record, clip)
    return y, status, na, nr, ts, ys


def integrate(initial, p: ModelParams, t_end: float, tol: float = DEFAULT_TOL,
              t_eval: np.ndarray | None = None) -> Trajectory:
    """Dormand-Prince 5(4) with PI step control (rtol = tol, atol = tol * 1e-2).

    Without ``t_eval`` every accepted step is returned; otherwise the solution
    is reported exactly at the requested times.  Small negative undershoots are
    projected back to zero after each step.
    """
    y0 = np.asarray(initial, dtype=float).copy()
    if y0.shape != (3,):
        raise DomainError("state must have three components")
    if np.any(y0 < 0):
        raise DomainError("initial state must be nonnegative")
    if not tol > 0:
        raise DomainError("tol must be positive")
    if t_end < 0:
        raise DomainError("t_end must be nonnegative")
    pr = p.as_array()
    rtol, atol = tol, tol * 1e-2
    steps = rej = 0
    if t_eval is not None:
        t_eval = np.asarray(t_eval, dtype=float)
        if np.any(np.diff(t_eval) < 0) or (len(t_eval) and t_eval[0] < 0):
            raise DomainError("t_eval must be nondecreasing and nonnegative")
        out = np.empty((len(t_eval), 3))
        y, t = y0, 0.0
        for k, tk in enumerate(t_eval):
            y, na, nr = _advance(y, tk - t, pr, rtol, atol)
            steps += na
            rej += nr
            t = tk
            out[k] = y
        return Trajectory(t_eval.copy(), out, steps, rej)
    ts_all, ys_all = [np.array([0.0])], [y0[None, :]]
    y, t = y0, 0.0
    while t < t_end:
        y, status, na, nr, ts, ys = _run(y, t_end - t, pr, rtol, atol, True)
        if status == 1:
            raise StiffnessError(f"step size underflow at t={t + ts[na]:.6g}")
        ts_all.append(t + ts[1: na + 1])
        ys_all.append(ys[1: na + 1])
        steps += na
        rej += nr
        t = t + ts[na]
        if status == 0:
            break
    return Trajectory(np.concatenate(ts_all), np.vstack(ys_all), steps, rej)


def _advance(y, dt, pr, rtol, atol):
    steps = rej = 0
    t = 0.0
    while dt - t > 0:
        y2, status, na, nr, ts, ys = _run(y, dt - t, pr, rtol, atol, True)
        if status == 1:
            raise StiffnessError("step size underflow")
        steps += na
        rej += nr
        t += ts[na]
        y = y2
        if status == 0:
            break
    return y, steps, rej


# ----------------------------------------------------------------------------
# attractors
# ----------------------------------------------------------------------------


@dataclass
class AttractorLabel:
    kind: str  # equilibrium | cycle | unresolved
    index: int | None = None  # equilibrium index: 0 = washout, k = k-th coexistence state
    period: float | None = None
    state: np.ndarray | None = None
    transient: float = 0.0

    def __post_init__(self):
        if self.kind == "cycle" and not (self.period and self.period > 0):
            raise ValueError("cycle labels need a positive period")

    def key(self, digits: int = 2) -> str:
        if self.kind == "equilibrium":
            return "E0" if self.index == 0 else f"E{self.index}*"
        if self.kind == "cycle":
            return f"C(T={self.period:.{digits}f})"
        return "unresolved"

    def same_attractor(self, other: "AttractorLabel", rtol: float = 1e-2) -> bool:
        if self.kind != other.kind:
            return False
        if self.kind == "equilibrium":
            return self.index == other.index
        if self.kind == "cycle":
            return abs(self.period - other.period) <= rtol * max(self.period, other.period)
        return True


def known_equilibria(p: ModelParams) -> list[np.ndarray]:
    """Washout first, then coexistence equilibria ordered by S*."""
    return [washout(p)] + [e.state for e in find_coexistence(p)]


def _match_equilibrium(y, eqs) -> int | None:
    for k, e in enumerate(eqs):
        if np.max(np.abs(y - e)) < EQ_TOL:
            return k
    return None


def _section_time(y, n, c, pr, rtol, atol, h):
    """Refine the crossing of <n, y - c> = 0 within [0, h] from state y by regula falsi."""
    g0 = n @ (y - c)
    yb, _, _ = _advance(y, h, pr, rtol, atol)
    g1 = n @ (yb - c)
    a, b, ga, gb = 0.0, h, g0, g1
    ya = y
    side = 0
    for _ in range(60):
        s = (a * gb - b * ga) / (gb - ga)
        ys, _, _ = _advance(ya, s - a, pr, rtol, atol)
        gs = n @ (ys - c)
        if abs(gs) < 1e-13 or b - a < 1e-13:
            return s, ys
        if gs * ga > 0:
            a, ga, ya = s, gs, ys
            if side == 1:
                gb *= 0.5
            side = 1
        else:
            b, gb = s, gs
            if side == -1:
                ga *= 0.5
            side = -1
    return s, ys


def classify_attractor(initial, p: ModelParams, budget: float = DEFAULT_BUDGET, tol: float = DEFAULT_TOL,
                       equilibria: list[np.ndarray] | None = None, warmup: float = 200.0) -> AttractorLabel:
    """Integrate until the orbit settles on a known equilibrium or on a periodic orbit.

    Periodicity is tested on a Poincare plane through the running mean of the
    last chunk, with normal equal to the velocity there; two successive
    returns must agree in state and in return time.
    """
    eqs = known_equilibria(p) if equilibria is None else equilibria
    pr = p.as_array()
    rtol, atol = tol, tol * 1e-2
    # at loose tolerances the integrator's own noise floor exceeds VEL_TOL
    vel_tol = max(VEL_TOL, 10.0 * tol)
    y = np.asarray(initial, dtype=float).copy()
    t = 0.0
    section = None
    crossings: list[tuple[float, np.ndarray]] = []
    while t < budget:
        dt = min(CHUNK, budget - t)
        y_end, status, na, nr, ts, ys = _run(y, dt, pr, rtol, atol, True)
        if status == 1:
            return AttractorLabel("unresolved", transient=t)
        t_chunk = ts[: na + 1].copy()
        y_chunk = ys[: na + 1].copy()
        if np.linalg.norm(rhs(y_end, p)) < vel_tol:
            k = _match_equilibrium(y_end, eqs)
            if k is not None:
                return AttractorLabel("equilibrium", index=k, state=eqs[k].copy(), transient=t + ts[na])
        if section is None and t + ts[na] >= warmup:
            w = np.diff(t_chunk)
            c = (0.5 * (y_chunk[1:] + y_chunk[:-1]) * w[:, None]).sum(axis=0) / w.sum()
            v = rhs(y_end, p)
            nv = np.linalg.norm(v)
            if nv > 1e-8 and np.linalg.norm(y_end - c) > 1e-6:
                section = (v / nv, c)
        elif section is not None:
            n, c = section
            g = (y_chunk - c) @ n
            idx = np.nonzero((g[:-1] < 0) & (g[1:] >= 0))[0]
            for i in idx:
                h = t_chunk[i + 1] - t_chunk[i]
                s, yc = _section_time(y_chunk[i], n, c, pr, rtol, atol, h)
                crossings.append((t + t_chunk[i] + s, yc))
            if len(crossings) >= 4:
                (t0, y0), (t1, y1), (t2, y2), (t3, y3) = crossings[-4:]
                T1, T2 = t2 - t1, t3 - t2
                d_prev, d = np.max(np.abs(y2 - y1)), np.max(np.abs(y3 - y2))
                # distance still to go if the returns contract geometrically
                rho = d / d_prev if d_prev > 0 else 0.0
                left = d * rho / (1 - rho) if rho < 1 else np.inf
                if d < RETURN_TOL and left < RETURN_TOL and abs(T2 - T1) < PERIOD_RTOL * T2:
                    return AttractorLabel("cycle", period=float(T2), state=y3.copy(), transient=t2)
        y = y_end
        t = t + ts[na]
    return AttractorLabel("unresolved", transient=t)


@dataclass
class BasinMap:
    x1: np.ndarray
    x2: np.ndarray
    S0: float
    labels: list[list[AttractorLabel]]
    attractors: list[AttractorLabel] = field(default_factory=list)
    codes: np.ndarray | None = None  # (n2, n1) index into attractors

    def distinct(self) -> list[str]:
        return [a.key() for a in self.attractors]


def default_grid(p: ModelParams, n: int = 21) -> tuple[np.ndarray, np.ndarray, float]:
    """n x n grid over (x1, x2) at S = S_in/2, kept inside the absorbing set."""
    S0 = p.S_in / 2
    room = max(omega_bound(p) - S0, 0.0) / 2
    g = np.linspace(0.0, room, n)
    return g, g.copy(), S0


def basin_map(p: ModelParams, x1: np.ndarray | None = None, x2: np.ndarray | None = None,
              S0: float | None = None, budget: float = DEFAULT_BUDGET, tol: float = DEFAULT_TOL,
              n: int = 21, progress=None) -> BasinMap:
    """Attractor label for every (x1, x2) cell of an initial-condition grid."""
    if x1 is None or x2 is None or S0 is None:
        g1, g2, s0 = default_grid(p, n)
        x1 = g1 if x1 is None else np.asarray(x1, dtype=float)
        x2 = g2 if x2 is None else np.asarray(x2, dtype=float)
        S0 = s0 if S0 is None else S0
    eqs = known_equilibria(p)
    labels = []
    attractors: list[AttractorLabel] = []
    codes = np.zeros((len(x2), len(x1)), dtype=int)
    for j, b in enumerate(x2):
        row = []
        for i, a in enumerate(x1):
            lab = classify_attractor((S0, a, b), p, budget, tol, eqs)
            row.append(lab)
            for k, att in enumerate(attractors):
                if att.same_attractor(lab):
                    codes[j, i] = k
                    break
            else:
                attractors.append(lab)
                codes[j, i] = len(attractors) - 1
            if progress is not None:
                progress(j * len(x1) + i + 1, len(x1) * len(x2))
        labels.append(row)
    return BasinMap(np.asarray(x1), np.asarray(x2), float(S0), labels, attractors, codes)
