"""Equilibria of the mutualism chemostat and their local stability.

Coexistence equilibria are intersections of the two nullcline curves
x1 = F_1(x2) and x2 = F_2(x1) inside the simplex

    M = {(x1, x2) >= 0 : D1/D * x1 + D2/D * x2 <= S_in},

and their stability follows from the Routh-Hurwitz coefficients of the
characteristic cubic.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError, SingularityError, UnsupportedError
from .model import ModelParams, growth, growth_partials, jacobian, rhs

SCAN_POINTS = 2048
REFINE = 8
RESIDUAL_TOL = 1e-12
NEWTON_MAXITER = 50
MERGE_TOL = 1e-7


@dataclass(frozen=True)
class CurveDomain:
    """Interval [x_lo, x_hi] on which F_i is defined, and the simplex edge S_in*D/D_j."""

    x_lo: float
    x_hi: float
    edge: float


@dataclass(frozen=True)
class RouthHurwitz:
    c1: float
    c2: float
    c3: float

    @property
    def c4(self) -> float:
        return self.c1 * self.c2 - self.c3

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.c1, self.c2, self.c3, self.c4)


@dataclass
class Equilibrium:
    state: np.ndarray
    kind: str  # "washout" | "coexistence"
    rh: RouthHurwitz | None = None
    eigenvalues: tuple[complex, complex, complex] | None = None
    stability: str | None = None  # "LES" | "unstable"
    critical: bool = False

    @property
    def mu(self) -> float:
        """Real part of the complex pair (or of the largest real root)."""
        return max(ev.real for ev in self.eigenvalues)

    @property
    def nu(self) -> float:
        return max(abs(ev.imag) for ev in self.eigenvalues)

    def to_dict(self) -> dict:
        out = {
            "state": [float(v) for v in self.state],
            "kind": self.kind,
            "stability": self.stability,
            "critical": self.critical,
        }
        if self.rh is not None:
            c1, c2, c3, c4 = self.rh.as_tuple()
            out.update(c1=c1, c2=c2, c3=c3, c4=c4)
        if self.eigenvalues is not None:
            out["eigenvalues"] = [[float(ev.real), float(ev.imag)] for ev in self.eigenvalues]
        return out


# ----------------------------------------------------------------------------
# phi_i and its roots
# ----------------------------------------------------------------------------


def _theta(p: ModelParams, j: int) -> float:
    return p.removal_rate(j) / p.D


def _other(i: int) -> int:
    return 2 if i == 1 else 1


def phi(i: int, x_j: float, p: ModelParams) -> float:
    """Growth of species i along the simplex edge, as a function of its partner."""
    j = _other(i)
    th = _theta(p, j)
    edge = p.S_in / th
    if x_j < 0 or x_j > edge * (1 + 1e-14):
        raise DomainError(f"x_{j}={x_j} outside [0, {edge}]")
    S = max(p.S_in - th * x_j, 0.0)
    return growth(i, S, x_j, p)


def _phi_vec(i: int, xs: np.ndarray, p: ModelParams) -> np.ndarray:
    m, K, L = p.species(i)
    th = _theta(p, _other(i))
    S = np.maximum(p.S_in - th * xs, 0.0)
    return m * S / (K + S) * xs / (L + xs)


def phi_argmax(i: int, p: ModelParams) -> float:
    """Location of the interior maximum of phi_i from the quadratic numerator of phi_i'."""
    m, K, L = p.species(i)
    th = _theta(p, _other(i))
    Sin = p.S_in
    edge = Sin / th
    a = th * th * L - th * K
    b = -2.0 * th * L * (K + Sin)
    c = Sin * L * (K + Sin)
    if abs(a) < 1e-14 * (abs(b) + abs(c)):
        return -c / b
    disc = th * K * L * (K + Sin) * (th * L + Sin)  # reduced discriminant
    sq = math.sqrt(disc)
    for r in ((-b / 2 - sq) / a, (-b / 2 + sq) / a):
        if 0 < r < edge:
            return r
    raise SingularityError("no interior critical point of phi")  # pragma: no cover


def phi_discriminant(i: int, p: ModelParams) -> float:
    m, K, L = p.species(i)
    th = _theta(p, _other(i))
    return th * K * L * (K + p.S_in) * (th * L + p.S_in)


def phi_roots(i: int, p: ModelParams) -> tuple[float, ...]:
    """Both solutions of phi_i(x_j) = D_i, or an empty tuple when max phi_i < D_i."""
    if p.S_in <= 0:
        return ()
    Di = p.removal_rate(i)
    th = _theta(p, _other(i))
    edge = p.S_in / th
    xm = phi_argmax(i, p)
    top = phi(i, xm, p) - Di
    if top < 0:
        return ()
    if top == 0:
        return (xm, xm)
    g = lambda x: phi(i, x, p) - Di
    lo = brentq(g, 0.0, xm, xtol=1e-15, rtol=1e-15, maxiter=200)
    hi = brentq(g, xm, edge, xtol=1e-15, rtol=1e-15, maxiter=200)
    return (lo, hi)


def curve_domain(i: int, p: ModelParams) -> CurveDomain | None:
    r = phi_roots(i, p)
    if not r:
        return None
    j = _other(i)
    return CurveDomain(r[0], r[1], p.S_in / _theta(p, j))


# ----------------------------------------------------------------------------
# nullcline curves F_i
# ----------------------------------------------------------------------------


def _F_parts(i, x_j, p):
    m, K, L = p.species(i)
    Di = p.removal_rate(i)
    thi = _theta(p, i)
    thj = _theta(p, _other(i))
    den = (Di - m) * x_j + Di * L
    return m, K, L, Di, thi, thj, den


def F_curve(i: int, x_j, p: ModelParams):
    """x_i on the nullcline f_i(S_in - D1 x1/D - D2 x2/D, x_j) = D_i.

    Accepts scalars or arrays.  On the feasible domain the denominator
    (D_i - m_i) x_j + D_i L_i is strictly negative; a nonnegative value means
    species i cannot reach growth rate D_i there.
    """
    m, K, L, Di, thi, thj, den = _F_parts(i, np.asarray(x_j, dtype=float), p)
    if np.any(den >= 0):
        raise SingularityError("F_i denominator (D_i - m_i) x_j + D_i L_i is nonnegative")
    x = np.asarray(x_j, dtype=float)
    num = Di * (K + p.S_in - thj * x) * (L + x) - m * x * (p.S_in - thj * x)
    out = num / (thi * den)
    return float(out) if out.ndim == 0 else out


def F_curve_deriv(i: int, x_j, p: ModelParams):
    """Slope dF_i/dx_j from the rational closed form."""
    m, K, L, Di, thi, thj, den = _F_parts(i, np.asarray(x_j, dtype=float), p)
    if np.any(den >= 0):
        raise SingularityError("F_i denominator (D_i - m_i) x_j + D_i L_i is nonnegative")
    x = np.asarray(x_j, dtype=float)
    num = -thj * (Di - m) ** 2 * x**2 - 2 * thj * Di * L * (Di - m) * x + Di * L * (m * K - Di * thj * L)
    out = num / (thi * den**2)
    return float(out) if out.ndim == 0 else out


def F_curve_deriv_partials(i: int, x_j: float, p: ModelParams) -> float:
    """Slope dF_i/dx_j via the implicit-function formula (-D_j E + D G) / (D_i E)."""
    j = _other(i)
    x_i = F_curve(i, x_j, p)
    S = p.S_in - _theta(p, i) * x_i - _theta(p, j) * x_j
    E, G = growth_partials(i, max(S, 0.0), x_j, p)
    return (-p.removal_rate(j) * E + p.D * G) / (p.removal_rate(i) * E)


def F_deriv_discriminant(i: int, p: ModelParams) -> float:
    m, K, L = p.species(i)
    Di = p.removal_rate(i)
    thj = _theta(p, _other(i))
    return thj * (Di - m) ** 2 * Di * L * K * m


# ----------------------------------------------------------------------------
# coexistence equilibria
# ----------------------------------------------------------------------------


def _g_vec(x2: np.ndarray, p: ModelParams, dom1: CurveDomain) -> np.ndarray:
    """g(x2) = F_2(F_1(x2)) - x2 with NaN where F_1(x2) leaves the domain of F_2."""
    x1 = F_curve(1, x2, p)
    out = np.full_like(x2, np.nan)
    eps = 1e-12 * (dom1.x_hi - dom1.x_lo)
    ok = (x1 >= dom1.x_lo - eps) & (x1 <= dom1.x_hi + eps)
    if np.any(ok):
        out[ok] = F_curve(2, np.clip(x1[ok], dom1.x_lo, dom1.x_hi), p) - x2[ok]
    return out


def _domain_edges(xs: np.ndarray, p: ModelParams, dom1: CurveDomain) -> list[float]:
    """x2 values where F_1(x2) enters or leaves the domain of F_2.

    A root lying between such an edge and the first finite scan sample would
    otherwise be invisible to the sign-change test.
    """
    f1 = F_curve(1, xs, p)
    edges = []
    for bound in (dom1.x_lo, dom1.x_hi):
        h = f1 - bound
        for k in np.nonzero(h[:-1] * h[1:] < 0)[0]:
            edges.append(brentq(lambda x: F_curve(1, x, p) - bound, xs[k], xs[k + 1], xtol=1e-15, rtol=1e-15))
    return edges


def _state_from(x1: float, x2: float, p: ModelParams) -> np.ndarray:
    S = p.S_in - p.D1 / p.D * x1 - p.D2 / p.D * x2
    return np.array([S, x1, x2])


def polish(state, p: ModelParams, tol: float = RESIDUAL_TOL, maxiter: int = NEWTON_MAXITER) -> np.ndarray:
    """Newton on the full equilibrium equations."""
    u = np.array(state, dtype=float)
    for _ in range(maxiter):
        r = rhs(u, p)
        if np.max(np.abs(r)) < tol:
            break
        du = np.linalg.solve(jacobian(u, p), -r)
        u = u + du
        if np.max(np.abs(du)) < 1e-15 * (1 + np.max(np.abs(u))):
            break
    return u


def _scan_roots(p: ModelParams, n: int = SCAN_POINTS, refine: int = REFINE) -> list[tuple[float, bool]]:
    dom2 = curve_domain(1, p)  # domain of F_1 is an x2-interval
    dom1 = curve_domain(2, p)  # domain of F_2 is an x1-interval
    if dom2 is None or dom1 is None:
        return []
    a, b = dom2.x_lo, dom2.x_hi
    if not b > a:
        return []
    xs = np.linspace(a, b, n)
    xs = np.unique(np.concatenate([xs, _domain_edges(xs, p, dom1)]))
    gs = _g_vec(xs, p, dom1)
    roots: list[tuple[float, bool]] = []
    g = lambda x: float(_g_vec(np.array([x]), p, dom1)[0])
    with np.errstate(invalid="ignore"):
        exact = np.nonzero(gs[:-1] == 0.0)[0]
        change = np.nonzero(gs[:-1] * gs[1:] < 0)[0]
        inner = gs[1:-1]
        peaks = np.nonzero((inner >= gs[:-2]) & (inner >= gs[2:]) & (inner < 0))[0] + 1
    roots.extend((xs[k], False) for k in exact)
    for k in change:
        # refined sub-scan keeps neighbouring roots apart
        sub = np.linspace(xs[k], xs[k + 1], refine + 1)
        sg = _g_vec(sub, p, dom1)
        for q in range(refine):
            if sg[q] * sg[q + 1] < 0:
                roots.append((brentq(g, sub[q], sub[q + 1], xtol=1e-15, rtol=1e-15), False))
            elif sg[q] == 0 and q > 0:
                roots.append((sub[q], False))
    # tangency: local maximum of g touching zero without a sign change
    for k in peaks:
        if gs[k] < -1e-4 * (dom2.x_hi - dom2.x_lo):
            continue
        lo, hi = xs[k - 1], xs[k + 1]
        for _ in range(80):
            m1 = lo + (hi - lo) * 0.381966
            m2 = hi - (hi - lo) * 0.381966
            if g(m1) < g(m2):
                lo = m1
            else:
                hi = m2
        xm = 0.5 * (lo + hi)
        if -MERGE_TOL * 1e-2 < g(xm) <= 0:
            roots.append((xm, True))
    roots.sort()
    return roots


def find_coexistence(p: ModelParams) -> list[Equilibrium]:
    """All positive equilibria, sorted by S*."""
    out: list[Equilibrium] = []
    for x2, critical in _scan_roots(p):
        x1 = F_curve(1, x2, p)
        u = polish(_state_from(x1, x2, p), p)
        if np.any(u[1:] <= 0) or u[0] < 0:
            continue
        if any(np.max(np.abs(u - e.state)) < MERGE_TOL for e in out):
            for e in out:
                if np.max(np.abs(u - e.state)) < MERGE_TOL:
                    e.critical = True
            continue
        eq = classify(Equilibrium(u, "coexistence"), p)
        eq.critical = critical
        out.append(eq)
    out.sort(key=lambda e: e.state[0])
    return out


def washout_equilibrium(p: ModelParams) -> Equilibrium:
    return classify(Equilibrium(np.array([p.S_in, 0.0, 0.0]), "washout"), p)


# ----------------------------------------------------------------------------
# stability
# ----------------------------------------------------------------------------


def efgh(state, p: ModelParams) -> tuple[float, float, float, float]:
    S, x1, x2 = state
    E, G = growth_partials(1, max(S, 0.0), x2, p)
    F, H = growth_partials(2, max(S, 0.0), x1, p)
    return E, F, G, H


def routh_hurwitz(state, p: ModelParams) -> RouthHurwitz:
    """Characteristic-cubic coefficients at a coexistence equilibrium."""
    S, x1, x2 = state
    E, F, G, H = efgh(state, p)
    D, D1, D2 = p.D, p.D1, p.D2
    c1 = D + E * x1 + F * x2
    c2 = D1 * E * x1 + D2 * F * x2 + (F * G + E * H - G * H) * x1 * x2
    c3 = (D1 * F * G + D2 * E * H - D * G * H) * x1 * x2
    return RouthHurwitz(c1, c2, c3)


def c4_expanded(state, p: ModelParams) -> float:
    """c1*c2 - c3 written out term by term."""
    S, x1, x2 = state
    E, F, G, H = efgh(state, p)
    D, D1, D2 = p.D, p.D1, p.D2
    return (
        D1 * E**2 * x1**2
        + D2 * F**2 * x2**2
        + D * D1 * E * x1
        + D * D2 * F * x2
        + ((D1 + D2) * E * F + (D - D1) * F * G + (D - D2) * E * H) * x1 * x2
        + (F * G + E * H - G * H) * (E * x1**2 * x2 + F * x1 * x2**2)
    )


def c3_product_form(state, p: ModelParams) -> float:
    """c3 through the slopes of the nullclines at the intersection."""
    S, x1, x2 = state
    E, F, G, H = efgh(state, p)
    F1p = F_curve_deriv(1, x2, p)
    F2p = F_curve_deriv(2, x1, p)
    return -(p.D1 * p.D2 * E * F / p.D) * (F1p * F2p - 1.0) * x1 * x2


def cubic_roots(c1: float, c2: float, c3: float) -> tuple[complex, complex, complex]:
    """Roots of l^3 + c1 l^2 + c2 l + c3, real root first.

    Trigonometric form for three real roots, Cardano otherwise; each root gets
    one Newton polish on the original polynomial.
    """
    a = c1
    q = (3 * c2 - a * a) / 9.0
    r = (9 * a * c2 - 27 * c3 - 2 * a**3) / 54.0
    disc = q**3 + r * r
    shift = -a / 3.0
    if disc <= 0 and q < 0:
        sq = math.sqrt(-q)
        cosarg = max(-1.0, min(1.0, r / sq**3))
        th = math.acos(cosarg)
        roots = [2 * sq * math.cos((th + 2 * math.pi * k) / 3) + shift for k in range(3)]
        roots = [_newton_cubic(c1, c2, c3, complex(z)) for z in roots]
        roots.sort(key=lambda z: -z.real)
        return (roots[0], roots[1], roots[2])
    sd = math.sqrt(max(disc, 0.0))
    s = math.copysign(abs(r + sd) ** (1 / 3), r + sd)
    t = math.copysign(abs(r - sd) ** (1 / 3), r - sd)
    real = s + t + shift
    re = -(s + t) / 2 + shift
    im = math.sqrt(3) / 2 * (s - t)
    real = _newton_cubic(c1, c2, c3, complex(real)).real
    z = _newton_cubic(c1, c2, c3, complex(re, abs(im)))
    z = complex(z.real, abs(z.imag))
    return (complex(real), z, z.conjugate())


def _newton_cubic(c1, c2, c3, z: complex) -> complex:
    for _ in range(2):
        pz = ((z + c1) * z + c2) * z + c3
        dp = (3 * z + 2 * c1) * z + c2
        if dp == 0:
            break
        step = pz / dp
        if not cmath.isfinite(step):
            break
        z = z - step
    return z


def classify(eq: Equilibrium, p: ModelParams) -> Equilibrium:
    if eq.kind == "washout":
        eq.eigenvalues = (complex(-p.D), complex(-p.D1), complex(-p.D2))
        eq.stability = "LES"
        return eq
    rh = routh_hurwitz(eq.state, p)
    eq.rh = rh
    eq.eigenvalues = cubic_roots(rh.c1, rh.c2, rh.c3)
    eq.stability = "LES" if (rh.c3 > 0 and rh.c4 > 0) else "unstable"
    return eq


def all_equilibria(p: ModelParams) -> list[Equilibrium]:
    return [washout_equilibrium(p)] + find_coexistence(p)


# ----------------------------------------------------------------------------
# planar reduction without mortality
# ----------------------------------------------------------------------------


def reduced_rhs(x1: float, x2: float, p: ModelParams) -> tuple[float, float]:
    g1, g2 = _reduced_rates(x1, x2, p)
    return g1 * x1, g2 * x2


def _reduced_rates(x1, x2, p):
    if not p.no_mortality:
        raise UnsupportedError("planar reduction requires a1 = a2 = 0 and alpha1 = alpha2 = 1")
    S = max(p.S_in - x1 - x2, 0.0)
    return growth(1, S, x2, p) - p.D, growth(2, S, x1, p) - p.D


def reduced_region(point, p: ModelParams, tol: float = 1e-12) -> str:
    """Sign region of the planar reduced system: I, II, III, IV or on-curve.

    Signs are taken from the per-capita rates f_i - D so that points close to
    the axes are still classified.
    """
    x1, x2 = point
    g1, g2 = _reduced_rates(x1, x2, p)
    if abs(g1) <= tol or abs(g2) <= tol:
        return "on-curve"
    if g1 < 0 and g2 > 0:
        return "I"
    if g1 < 0 and g2 < 0:
        return "II"
    if g1 > 0 and g2 < 0:
        return "III"
    return "IV"
