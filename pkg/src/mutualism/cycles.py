"""Periodic orbits by multiple shooting, Floquet multipliers and cycle families.

Unknowns are the m node states, the period T and the free parameter.  Segment k
starts at node k and runs for T * mesh[k]; the end of the last segment must
return to node 0, and node 0 is pinned by the Poincare anchor condition

    < f(ref), node_0 - ref > = 0.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels, arclength
from .arclength import StepPolicy
from .continuation import BifurcationEvent, complex_pair, equilibrium_at, lyapunov_l1
from .errors import ConvergenceError, SeedError
from .model import ModelParams, _which_index, jacobian, rhs

log = logging.getLogger(__name__)

N_SEGMENTS = 20
SEG_RTOL = 1e-11
SEG_ATOL = 1e-13
CHECK_RTOL = 1e-13
CHECK_ATOL = 1e-15
SHOOT_TOL = 1e-9
MAX_SEG_TIME = 4.0
T_TRIGGER = 100.0
HOM_POINTS = 8
# below this relative change per step the parameter is no longer resolved
PARAM_RESOLUTION = 1e-14


@dataclass
class LimitCycle:
    nodes: np.ndarray  # (m, 3)
    period: float
    param: float
    free: str
    base: ModelParams
    mesh: np.ndarray  # (m,) fractions of T, summing to 1
    segments: np.ndarray | None = None  # (m, 3, 3) segment transition matrices
    seg_div: np.ndarray | None = None  # (m,) integral of div f over each segment
    residual: float = float("nan")
    _fl: tuple | None = field(default=None, repr=False, compare=False)

    @property
    def params(self) -> ModelParams:
        return self.base.with_param(self.free, self.param)

    @property
    def anchor(self) -> np.ndarray:
        return self.nodes[0]

    @property
    def anchor_velocity(self) -> np.ndarray:
        return rhs(self.nodes[0], self.params)

    @property
    def monodromy(self) -> np.ndarray:
        M = np.eye(3)
        for Mk in self.segments:
            M = Mk @ M
        return M

    @property
    def div_integral(self) -> float:
        return float(np.sum(self.seg_div))

    def _floquet_data(self):
        if self._fl is None:
            self._fl = _deflate(self)
        return self._fl

    @property
    def multipliers(self) -> np.ndarray:
        return floquet(self)

    @property
    def nontrivial(self) -> tuple[complex, complex]:
        _, s, pr, _ = self._floquet_data()
        return _quadratic_pair(s, pr)

    @property
    def stability(self) -> str:
        a, b = self.nontrivial
        return "stable" if max(abs(a), abs(b)) < 1.0 else "unstable"

    @property
    def pd_test(self) -> float:
        """(mu_a + 1)(mu_b + 1) over the nontrivial multipliers."""
        _, s, pr, _ = self._floquet_data()
        return 1.0 + s + pr

    @property
    def fold_test(self) -> float:
        """(mu_a - 1)(mu_b - 1) over the nontrivial multipliers."""
        _, s, pr, _ = self._floquet_data()
        return 1.0 - s + pr

    @property
    def multipliers_resolved(self) -> bool:
        """False when rounding in the transition-matrix product swamps the PD/fold tests."""
        err = 1e6 * np.finfo(float).eps * self._floquet_data()[3]
        return abs(self.pd_test) > err and abs(self.fold_test) > err

    def liouville_error(self) -> float:
        """Relative gap between det of the monodromy (segment by segment) and exp(int div f)."""
        logdet = float(np.sum(np.log(np.abs(np.linalg.det(self.segments)))))
        return abs(math.expm1(logdet - self.div_integral))

    def vector(self) -> np.ndarray:
        return np.concatenate([self.nodes.ravel(), [self.period, self.param]])

    def orbit(self, per_segment: int = 40) -> np.ndarray:
        """Samples of the orbit, ``per_segment`` per shooting segment."""
        return _dense(self, per_segment)[1]

    def summary(self) -> dict:
        a, b = self.nontrivial
        return {
            "param": self.param,
            "T": self.period,
            "node0": [float(v) for v in self.nodes[0]],
            "mult1": abs(a),
            "mult2": abs(b),
            "stability": self.stability,
        }


def _flow_basis(f: np.ndarray) -> np.ndarray:
    """Orthonormal basis whose first column is f / |f|."""
    i, j = np.argsort(np.abs(f))[:2]
    eye = np.eye(3)
    Q, R = np.linalg.qr(np.column_stack([f, eye[:, i], eye[:, j]]))
    if R[0, 0] < 0:
        Q[:, 0] = -Q[:, 0]
    return Q


def _deflate(cycle: LimitCycle):
    """Periodic deflation of the trivial multiplier.

    In a basis that follows the flow direction, every segment matrix is block
    upper triangular (M_k f(node_k) = f(node_k+1)).  The trivial multiplier is
    the product of the (0, 0) entries; the nontrivial pair are the eigenvalues
    of the product of the 2x2 blocks, recovered from its trace and the product
    of block determinants so that neither is lost to cancellation.
    Returns (trivial, trace, det, |block product|).
    """
    p = cycle.params
    m = len(cycle.mesh)
    Qs = [_flow_basis(rhs(cycle.nodes[k], p)) for k in range(m)]
    triv = 1.0
    B = np.eye(2)
    logdet = 0.0
    sign = 1.0
    for k in range(m):
        A = Qs[(k + 1) % m].T @ cycle.segments[k] @ Qs[k]
        triv *= A[0, 0]
        Bk = A[1:, 1:]
        B = Bk @ B
        d = np.linalg.det(Bk)
        sign *= np.sign(d)
        logdet += math.log(abs(d))
    return triv, float(np.trace(B)), sign * math.exp(logdet), float(np.linalg.norm(B, 2))


def _quadratic_pair(s: float, pr: float) -> tuple[complex, complex]:
    """Roots of mu^2 - s mu + pr, large root first, small root by Vieta."""
    disc = s * s - 4 * pr
    if disc >= 0:
        r = math.sqrt(disc)
        big = (s + math.copysign(r, s)) / 2 if s != 0 else r / 2
        small = pr / big if big != 0 else 0.0
        return complex(big), complex(small)
    r = math.sqrt(-disc)
    return complex(s / 2, r / 2), complex(s / 2, -r / 2)


def floquet(cycle: LimitCycle) -> np.ndarray:
    """Floquet multipliers, trivial first, then the nontrivial pair by decreasing modulus."""
    if cycle.segments is None:
        _refresh(cycle)
    triv = cycle._floquet_data()[0]
    a, b = cycle.nontrivial
    return np.array([complex(triv), a, b])


# ----------------------------------------------------------------------------
# shooting system
# ----------------------------------------------------------------------------


class ShootingSystem:
    """Residual and Jacobian of the multiple-shooting equations at fixed mesh/anchor."""

    def __init__(self, base: ModelParams, free: str, mesh: np.ndarray, ref: np.ndarray,
                 ref_velocity: np.ndarray, rtol: float = SEG_RTOL, atol: float = SEG_ATOL):
        self.base = base
        self.free = free
        self.which = _which_index(free)
        self.mesh = np.asarray(mesh, dtype=float)
        self.m = len(self.mesh)
        self.ref = ref.copy()
        self.fref = ref_velocity.copy()
        self.rtol = rtol
        self.atol = atol
        self.last = None

    def _pr(self, lam: float) -> np.ndarray:
        pr = self.base.as_array()
        pr[_kernels.SIN if self.which == 0 else _kernels.DIL] = lam
        return pr

    def unpack(self, v):
        m = self.m
        return v[: 3 * m].reshape(m, 3), v[3 * m], v[3 * m + 1]

    def __call__(self, v: np.ndarray):
        m = self.m
        nodes, T, lam = self.unpack(v)
        if not (T > 0 and np.all(np.isfinite(v))):
            raise ConvergenceError("invalid shooting unknowns")
        pr = self._pr(lam)
        ends, status = _kernels.shoot_segments(nodes, T * self.mesh, pr, self.which, self.rtol, self.atol)
        if status != 0:
            raise ConvergenceError("segment integration failed")
        n = 3 * m + 1
        r = np.empty(n)
        J = np.zeros((n, n + 1))
        for k in range(m):
            z = ends[k]
            nxt = (k + 1) % m
            r[3 * k: 3 * k + 3] = z[:3] - nodes[nxt]
            J[3 * k: 3 * k + 3, 3 * k: 3 * k + 3] = z[3:12].reshape(3, 3)
            J[3 * k: 3 * k + 3, 3 * nxt: 3 * nxt + 3] -= np.eye(3)
            J[3 * k: 3 * k + 3, 3 * m] = self.mesh[k] * _kernels.rhs(z[:3], pr)
            J[3 * k: 3 * k + 3, 3 * m + 1] = z[12:15]
        r[3 * m] = self.fref @ (nodes[0] - self.ref)
        J[3 * m, 0:3] = self.fref
        self.last = (v.copy(), ends)
        return r, J

def _uniform_mesh(m: int) -> np.ndarray:
    return np.full(m, 1.0 / m)


def _n_segments(T: float, base: int = N_SEGMENTS) -> int:
    return max(base, int(math.ceil(T / MAX_SEG_TIME)))


def _make_cycle(v, system: ShootingSystem) -> LimitCycle:
    nodes, T, lam = system.unpack(v)
    cyc = LimitCycle(nodes.copy(), float(T), float(lam), system.free, system.base, system.mesh.copy())
    if system.last is None or not np.array_equal(system.last[0], v):
        system(v)
    ends = system.last[1]
    cyc.segments = ends[:, 3:12].reshape(-1, 3, 3).copy()
    cyc.seg_div = ends[:, 15].copy()
    res = [np.max(np.abs(ends[k, :3] - nodes[(k + 1) % system.m])) for k in range(system.m)]
    cyc.residual = float(max(res))
    return cyc


def _refresh(cycle: LimitCycle) -> None:
    sysm = ShootingSystem(cycle.base, cycle.free, cycle.mesh, cycle.nodes[0], cycle.anchor_velocity)
    c2 = _make_cycle(cycle.vector(), sysm)
    cycle.segments, cycle.seg_div, cycle.residual = c2.segments, c2.seg_div, c2.residual
    cycle._fl = None


def flow(y0, t: float, p: ModelParams, rtol: float = SEG_RTOL, atol: float = SEG_ATOL) -> np.ndarray:
    y, st, na, nr, ts, ys = _kernels.dp54(np.asarray(y0, dtype=float).copy(), t, p.as_array(), 0, False,
                                           rtol, atol, -1.0, 5000000, False, False)
    return y


def remesh(cycle: LimitCycle, m: int | None = None, start_at_fastest: bool = True) -> LimitCycle:
    """Resample the cycle on a uniform time mesh of m segments.

    New nodes are produced by flowing from the nearest preceding old node, so
    the error growth is bounded by one old segment.  With ``start_at_fastest``
    node 0 is moved to the fastest point of the orbit, which keeps the anchor
    condition well conditioned.
    """
    m = m or _n_segments(cycle.period)
    p = cycle.params
    T = cycle.period
    old_t = np.concatenate([[0.0], np.cumsum(cycle.mesh)[:-1]]) * T
    shift = 0.0
    if start_at_fastest:
        dense_t, dense_y = _dense(cycle, 16)
        speed = np.linalg.norm(np.array([rhs(y, p) for y in dense_y]), axis=1)
        shift = float(dense_t[int(np.argmax(speed))])
    new_t = (shift + np.arange(m) * T / m) % T
    nodes = np.empty((m, 3))
    for q, tn in enumerate(new_t):
        k = int(np.searchsorted(old_t, tn, side="right") - 1)
        k = max(k, 0)
        nodes[q] = flow(cycle.nodes[k], tn - old_t[k], p)
    out = LimitCycle(nodes, T, cycle.param, cycle.free, cycle.base, _uniform_mesh(m))
    _refresh(out)
    return out


def _dense(cycle: LimitCycle, per_segment: int):
    p = cycle.params
    T = cycle.period
    starts = np.concatenate([[0.0], np.cumsum(cycle.mesh)[:-1]]) * T
    ts, ys = [], []
    for k in range(len(cycle.mesh)):
        dt = cycle.mesh[k] * T
        y = cycle.nodes[k].copy()
        h = dt / per_segment
        for q in range(per_segment):
            ts.append(starts[k] + q * h)
            ys.append(y.copy())
            y = flow(y, h, p)
    return np.array(ts), np.array(ys)


def _solve(system: ShootingSystem, v0: np.ndarray, extra=None, tol: float = SHOOT_TOL, maxiter: int = 15):
    """Newton on the shooting system plus one scalar constraint ``extra(v) -> (value, gradient)``."""
    v = v0.copy()
    last = np.inf
    for it in range(maxiter):
        r, J = system(v)
        g, dg = extra(v)
        R = np.concatenate([r, [g]])
        A = np.vstack([J, dg])
        nr = np.max(np.abs(R))
        if nr < tol:
            return v
        if it > 3 and nr > 0.5 * last:
            break
        last = nr
        v = v + np.linalg.solve(A, -R)
    raise ConvergenceError("shooting Newton did not converge")


# ----------------------------------------------------------------------------
# seeding from a Hopf point
# ----------------------------------------------------------------------------


def cycle_from_hopf(event: BifurcationEvent, p: ModelParams, amplitude: float = 1e-3,
                    m: int = N_SEGMENTS, retries: int = 3) -> LimitCycle:
    free = event.free
    base = p.with_operating(S_in=event.S_in, D=event.D) if event.S_in is not None else p
    lam0 = event.param
    xeq = np.asarray(event.state, dtype=float)
    A = jacobian(xeq, base)
    w, V = np.linalg.eig(A)
    k = int(np.argmax(w.imag))
    omega = float(w[k].imag)
    if omega <= 0:
        raise SeedError("Hopf point has no imaginary pair")
    q = V[:, k]
    # rotate q so Re q and Im q are orthogonal, then normalise Re q
    th = 0.5 * math.atan2(-2 * (q.real @ q.imag), (q.real @ q.real - q.imag @ q.imag))
    q = q * np.exp(1j * th)
    qr, qi = q.real, q.imag
    scale = np.linalg.norm(qr)
    qr, qi = qr / scale, qi / scale
    T0 = 2 * math.pi / omega
    h = amplitude
    last_exc = None
    for _ in range(retries):
        ts = np.arange(m) * T0 / m
        nodes = np.array([xeq + h * (qr * math.cos(omega * t) - qi * math.sin(omega * t)) for t in ts])
        ref = nodes[0].copy()
        fref = A @ (ref - xeq)
        system = ShootingSystem(base, free, _uniform_mesh(m), ref, fref)
        v0 = np.concatenate([nodes.ravel(), [T0, lam0]])
        n = 3 * m + 2

        def amp(v):
            grad = np.zeros(n)
            grad[:3] = qr
            return qr @ (v[:3] - xeq) - h, grad

        try:
            v = _solve(system, v0, amp)
        except ConvergenceError as exc:
            last_exc = exc
            h *= 5
            continue
        cyc = _make_cycle(v, system)
        cyc.base = base
        return cyc
    raise SeedError(f"could not converge a cycle near the Hopf point: {last_exc}")


# ----------------------------------------------------------------------------
# family continuation
# ----------------------------------------------------------------------------


@dataclass
class CycleSample:
    param: float
    period: float
    node0: np.ndarray
    mult: tuple[complex, complex]
    stability: str
    pd_test: float
    dlam: float  # parameter component of the tangent
    amplitude: float
    resolved: bool = True
    lo: np.ndarray | None = None  # componentwise min over the shooting nodes
    hi: np.ndarray | None = None

    def to_row(self) -> list:
        return [self.param, self.period, *self.node0, abs(self.mult[0]), abs(self.mult[1]), self.stability]


@dataclass
class CycleFamily:
    free: str
    base: ModelParams
    samples: list[CycleSample]
    events: list[BifurcationEvent]
    cycles: list[LimitCycle] = field(default_factory=list)
    terminated: str | None = None
    label: str | None = None

    def params(self) -> np.ndarray:
        return np.array([s.param for s in self.samples])

    def periods(self) -> np.ndarray:
        return np.array([s.period for s in self.samples])

    def events_of(self, kind: str) -> list[BifurcationEvent]:
        return [e for e in self.events if e.kind == kind]


def _amplitude(cycle: LimitCycle) -> float:
    return float(np.max(cycle.nodes[:, 1]) - np.min(cycle.nodes[:, 1]))


def _weights(m: int, T: float) -> np.ndarray:
    w = np.full(3 * m + 2, 1.0 / m)
    w[3 * m] = 1.0 / max(T, 1.0) ** 2
    w[3 * m + 1] = 1.0
    return w


def _tangent_for(cycle: LimitCycle, system: ShootingSystem, prev_dir: np.ndarray | None) -> np.ndarray:
    _, J = system(cycle.vector())
    t = arclength.tangent(J)
    if prev_dir is not None and t[-2:] @ prev_dir < 0:
        t = -t
    return t


def continue_cycles(
    cycle: LimitCycle,
    p: ModelParams | None = None,
    free: str | None = None,
    range_: tuple[float, float] = (0.0, 10.0),
    policy: StepPolicy | None = None,
    direction: np.ndarray | None = None,
    T_max: float = 250.0,
    max_steps: int = 4000,
    keep_cycles: bool = False,
    T_trigger: float = T_TRIGGER,
) -> CycleFamily:
    """Follow a family of cycles by pseudo-arclength, detecting LPC and PD events.

    ``direction`` orients the start by its (T, param) components; by default the
    period increases.  Tracing stops when the period exceeds ``T_max``, the
    parameter leaves ``range_``, enough samples past ``T_trigger`` exist for the
    homoclinic fit, the amplitude collapses back onto a Hopf point, or the
    corrector stalls at the minimum step.
    """
    policy = policy or StepPolicy(ds=0.01, ds_min=1e-7, ds_max=0.02, newton_tol=SHOOT_TOL, newton_maxiter=8)
    free = free or cycle.free
    cyc = remesh(cycle)
    system = ShootingSystem(cyc.base, free, cyc.mesh, cyc.nodes[0], cyc.anchor_velocity)
    prev_dir = np.array([1.0, 0.0]) if direction is None else np.asarray(direction, dtype=float)
    t = _tangent_for(cyc, system, prev_dir)
    samples = [_sample(cyc, t)]
    events: list[BifurcationEvent] = []
    kept = [cyc] if keep_cycles else []
    ds = policy.ds
    ok_run = 0
    why = None
    steps_since_mesh = 0
    flat = 0
    past = 0
    for step in range(max_steps):
        v = cyc.vector()
        w = _weights(system.m, cyc.period)
        tw = t / math.sqrt(t @ (w * t))
        try:
            vn, Jn = arclength.correct(system, v, tw, ds, policy.newton_tol, policy.newton_maxiter, weights=w)
            dv = vn - v
            if math.sqrt(dv @ (w * dv)) > 3 * ds:
                raise ConvergenceError("corrector jumped")
        except ConvergenceError:
            ds *= policy.shrink
            ok_run = 0
            if ds < policy.ds_min:
                why = "corrector stall"
                events.append(BifurcationEvent("terminated", cyc.param, cyc.nodes[0].copy(),
                                               {"reason": why, "T": cyc.period}, free))
                break
            continue
        new = _make_cycle(vn, system)
        tn = arclength.tangent(Jn, t)
        smp = _sample(new, tn)
        prev = samples[-1]
        # events between prev and smp
        if prev.dlam * smp.dlam < 0 and prev.resolved and smp.resolved:
            events.append(_locate_cycle_event(system, v, tw, ds, w, "LPC", prev, smp))
        if prev.pd_test * smp.pd_test < 0 and prev.resolved and smp.resolved:
            events.append(_locate_cycle_event(system, v, tw, ds, w, "PD", prev, smp))
        samples.append(smp)
        if keep_cycles:
            kept.append(new)
        cyc, t = new, tn
        ok_run += 1
        steps_since_mesh += 1
        if ok_run >= policy.grow_after:
            ds = min(ds * policy.grow, policy.ds_max)
            ok_run = 0
        if cyc.period > T_max:
            why = "period limit"
            break
        if smp.period > T_trigger:
            past += 1
            if past >= HOM_POINTS + 4:
                why = "period blow-up"
                break
        if abs(smp.param - prev.param) < PARAM_RESOLUTION * max(1.0, abs(smp.param)):
            flat += 1
            if flat >= 3:
                why = "parameter resolution"
                break
        else:
            flat = 0
        if not range_[0] <= cyc.param <= range_[1]:
            why = "range"
            break
        if smp.amplitude < 1e-4 and step > 5:
            why = "hopf"
            break
        # re-anchor every step, re-mesh when the period outgrows the segment count
        need = _n_segments(cyc.period)
        dirTL = tn[-2:] / (np.linalg.norm(tn[-2:]) + 1e-300)
        if need != system.m or steps_since_mesh >= 25:
            cyc = remesh(cyc, need)
            system = ShootingSystem(cyc.base, free, cyc.mesh, cyc.nodes[0], cyc.anchor_velocity)
            t = _tangent_for(cyc, system, dirTL)
            steps_since_mesh = 0
        else:
            system.ref = cyc.nodes[0].copy()
            system.fref = cyc.anchor_velocity.copy()
    fam = CycleFamily(free, cycle.base, samples, events, kept, why)
    return fam


def _sample(cyc: LimitCycle, t: np.ndarray) -> CycleSample:
    return CycleSample(cyc.param, cyc.period, cyc.nodes[0].copy(), cyc.nontrivial, cyc.stability,
                       cyc.pd_test, float(t[-1]), _amplitude(cyc), cyc.multipliers_resolved,
                       cyc.nodes.min(axis=0), cyc.nodes.max(axis=0))


def _locate_cycle_event(system, v, t, ds, w, kind, prev, smp) -> BifurcationEvent:
    """Regula falsi over the arclength step for the LPC or PD test."""
    cache = {}

    def at(h):
        vv, JJ = arclength.correct(system, v, t, h, SHOOT_TOL * 0.1, 10, weights=w)
        cyc = _make_cycle(vv, system)
        if kind == "LPC":
            val = arclength.tangent(JJ, t)[-1]
        else:
            val = cyc.pd_test
        cache[h] = cyc
        return val

    fa = prev.dlam if kind == "LPC" else prev.pd_test
    fb = smp.dlam if kind == "LPC" else smp.pd_test
    tol = 1e-10 if kind == "LPC" else 1e-8
    try:
        h, _ = arclength.bracket_root(at, 0.0, fa, ds, fb, tol, maxiter=40)
        cyc = cache.get(h) or (at(h) and cache[h])
    except ConvergenceError as exc:
        log.warning("%s localisation fell back to interpolation: %s", kind, exc)
        frac = fa / (fa - fb)
        lam = prev.param + frac * (smp.param - prev.param)
        T = prev.period + frac * (smp.period - prev.period)
        return BifurcationEvent(kind, lam, None, {"T": T, "approximate": True}, system.free)
    a, b = cyc.nontrivial
    diag = {"T": cyc.period, "multipliers": [[a.real, a.imag], [b.real, b.imag]],
            "stability_before": prev.stability, "stability_after": smp.stability}
    ev = BifurcationEvent(kind, cyc.param, cyc.nodes[0].copy(), diag, system.free)
    q = cyc.params
    ev.S_in, ev.D = q.S_in, q.D
    return ev


# ----------------------------------------------------------------------------
# homoclinic extrapolation
# ----------------------------------------------------------------------------


def fit_log_period(sig: np.ndarray, T: np.ndarray) -> tuple[float, float, float, float]:
    """Least squares T = a - b ln(+-(sigma - sigma_hom)).

    The side is inferred from the direction in which T grows.  Returns
    (sigma_hom, a, b, R^2).
    """
    sig = np.asarray(sig, dtype=float)
    T = np.asarray(T, dtype=float)
    order = np.argsort(T)
    sig, T = sig[order], T[order]
    side = 1.0 if sig[-1] <= sig[0] else -1.0  # +1: approach from above
    u = side * sig
    umin = np.min(u)
    span = max(np.max(u) - umin, 1e-14)

    def sse(c):
        x = np.log(u - c)
        A = np.column_stack([np.ones_like(x), -x])
        coef, *_ = np.linalg.lstsq(A, T, rcond=None)
        resid = T - A @ coef
        return float(resid @ resid), coef

    lo = umin - 1e3 * span
    hi = umin - max(1e-9 * span, 8 * np.finfo(float).eps * max(1.0, abs(umin)))
    # golden section on log-distance below the closest sample
    a_, b_ = math.log(umin - lo), math.log(umin - hi)
    f = lambda s: sse(umin - math.exp(s))[0]
    g = (math.sqrt(5) - 1) / 2
    c_, d_ = b_ - g * (b_ - a_), a_ + g * (b_ - a_)
    fc, fd = f(c_), f(d_)
    for _ in range(200):
        if fc < fd:
            b_, d_, fd = d_, c_, fc
            c_ = b_ - g * (b_ - a_)
            fc = f(c_)
        else:
            a_, c_, fc = c_, d_, fd
            d_ = a_ + g * (b_ - a_)
            fd = f(d_)
        if abs(b_ - a_) < 1e-10:
            break
    s = 0.5 * (a_ + b_)
    chom = umin - math.exp(s)
    err, coef = sse(chom)
    sst = float(((T - T.mean()) ** 2).sum())
    r2 = 1.0 - err / sst if sst > 0 else 0.0
    return side * chom, float(coef[0]), float(coef[1]), r2


def detect_homoclinic(family: CycleFamily, T_trigger: float = T_TRIGGER, K: int = HOM_POINTS,
                      min_r2: float = 0.99) -> BifurcationEvent:
    """Extrapolate the parameter at which the period diverges along the family tail."""
    smp = family.samples
    tail = []
    for s in reversed(smp):
        if tail and s.period >= tail[-1].period:
            break
        tail.append(s)
    tail = tail[::-1]
    big = [s for s in tail if s.period > T_trigger]
    if len(big) < K:
        return BifurcationEvent("Hom-unresolved", smp[-1].param, None,
                                {"reason": "period did not grow past trigger", "T_max": smp[-1].period},
                                family.free)
    use = _spread(big, K)
    sig = np.array([s.param for s in use])
    T = np.array([s.period for s in use])
    dsig = np.diff(sig)
    if not (np.all(dsig <= 0) or np.all(dsig >= 0)):
        return BifurcationEvent("Hom-unresolved", float(sig[-1]), None,
                                {"reason": "non-monotone tail"}, family.free)
    sh, a, b, r2 = fit_log_period(sig, T)
    kind = "Hom" if (r2 >= min_r2 and b > 0) else "Hom-unresolved"
    ev = BifurcationEvent(kind, sh, None, {"a": a, "b": b, "R2": r2, "T_last": float(T[-1]),
                                          "n_points": len(use)}, family.free)
    q = family.base.with_param(family.free, sh)
    ev.S_in, ev.D = q.S_in, q.D
    return ev


def _spread(samples, K):
    """K samples spread evenly in log-distance from the last one."""
    if len(samples) <= K:
        return samples
    idx = np.unique(np.round(np.linspace(0, len(samples) - 1, K)).astype(int))
    return [samples[i] for i in idx]


# ----------------------------------------------------------------------------
# period curves and checks
# ----------------------------------------------------------------------------


@dataclass
class PeriodCurve:
    label: str
    params: np.ndarray
    periods: np.ndarray
    stability: list[str]
    joined: bool = False  # first sample is shared with the previous piece across a fold

    def __post_init__(self):
        if np.any(self.periods <= 0):
            raise ValueError("periods must be positive")

    def stability_pattern(self) -> str:
        """Compressed stability sequence, e.g. 'S' or 'SU'."""
        out = []
        for s in self.stability[1 if self.joined else 0:]:
            c = "S" if s == "stable" else "U"
            if not out or out[-1] != c:
                out.append(c)
        return "".join(out)


def period_curve(families: CycleFamily | list[CycleFamily]) -> list[PeriodCurve]:
    """Split families at their folds (LPC) and label the pieces C1, C2, ..."""
    if isinstance(families, CycleFamily):
        families = [families]
    curves: list[PeriodCurve] = []
    for fam in families:
        pieces: list[list[CycleSample]] = [[]]
        for s in fam.samples:
            cur = pieces[-1]
            if cur and cur[-1].dlam * s.dlam < 0 and cur[-1].resolved and s.resolved:
                pieces.append([cur[-1]])
            pieces[-1].append(s)
        for n, piece in enumerate(pieces):
            if len(piece) < 2:
                continue
            curves.append(PeriodCurve(
                f"C{len(curves) + 1}",
                np.array([s.param for s in piece]),
                np.array([s.period for s in piece]),
                [s.stability for s in piece],
                joined=n > 0,
            ))
    return curves


def closure_residual(cycle: LimitCycle, rtol: float = CHECK_RTOL, atol: float = CHECK_ATOL) -> float:
    """max |Phi_T(node_0) - node_0| from one uninterrupted integration over the period.

    The check integrates more tightly than the shooting segments so that its own
    error does not dominate the residual.
    """
    y = flow(cycle.nodes[0], cycle.period, cycle.params, rtol, atol)
    return float(np.max(np.abs(y - cycle.nodes[0])))


def hopf_side(cycle: LimitCycle, hopf_param: float) -> int:
    """Sign of (param - hopf_param) on which the seeded cycle lives."""
    return int(np.sign(cycle.param - hopf_param))


def expected_hopf_side(l1: float, dmu_dparam: float) -> int:
    """Side predicted by the normal form: amplitude^2 ~ -(dmu/dparam)(param - param_H)/l1."""
    return int(-np.sign(l1) * np.sign(dmu_dparam))


def families_from_hopf(p: ModelParams, range_=(2.0, 4.0), **kw) -> list[CycleFamily]:
    """Cycle family from every Hopf point found on the S_in branch at the current D."""
    from .continuation import branch_events

    out = []
    br = branch_events(p, "sin", range_)
    for ev in br.events:
        if ev.kind != "H":
            continue
        seed = cycle_from_hopf(ev, p)
        fam = continue_cycles(seed, range_=range_, **kw)
        hom = detect_homoclinic(fam)
        fam.events.append(hom)
        fam.label = f"H@{ev.param:.6f}"
        out.append(fam)
    return out
