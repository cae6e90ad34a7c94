"""Independent reference computations used only by the tests.

Nothing here calls the package's solvers: growth laws, derivatives,
integrators and eigen-solvers are re-derived or taken from numpy/scipy.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import solve_ivp


def growth_ref(m, K, L, S, x):
    return m * S / (K + S) * x / (L + x)


def rhs_ref(y, pr):
    """pr = (m1, K1, L1, m2, K2, L2, alpha1, alpha2, a1, a2, S_in, D)."""
    m1, K1, L1, m2, K2, L2, al1, al2, a1, a2, Sin, D = pr
    S, x1, x2 = y
    f1 = growth_ref(m1, K1, L1, S, x2)
    f2 = growth_ref(m2, K2, L2, S, x1)
    return np.array([D * (Sin - S) - f1 * x1 - f2 * x2,
                     (f1 - (al1 * D + a1)) * x1,
                     (f2 - (al2 * D + a2)) * x2])


def fd_jacobian(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(f(x))
    J = np.empty((len(f0), len(x)))
    for k in range(len(x)):
        s = h * max(1.0, abs(x[k]))
        e = np.zeros_like(x)
        e[k] = s
        J[:, k] = (np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * s)
    return J


def brute_force_equilibria(pr, n=200, tol=1e-8):
    """Coexistence equilibria by vectorised Newton from every cell of an n x n grid over M.

    Works on the reduced planar system f_i(S_in - th1 x1 - th2 x2, x_j) = D_i
    with S eliminated; cells whose iterates leave M are discarded.
    """
    m1, K1, L1, m2, K2, L2, al1, al2, a1, a2, Sin, D = pr
    D1, D2 = al1 * D + a1, al2 * D + a2
    th1, th2 = D1 / D, D2 / D
    u = (np.arange(n) + 0.5) / n
    X1, X2 = np.meshgrid(u * Sin / th1, u * Sin / th2)
    x1, x2 = X1.ravel(), X2.ravel()
    keep = th1 * x1 + th2 * x2 < Sin
    x1, x2 = x1[keep], x2[keep]
    for _ in range(60):
        S = Sin - th1 * x1 - th2 * x2
        g1 = growth_ref(m1, K1, L1, S, x2) - D1
        g2 = growth_ref(m2, K2, L2, S, x1) - D2
        dS1 = m1 * K1 / (K1 + S) ** 2 * x2 / (L1 + x2)
        dx1 = m1 * S / (K1 + S) * L1 / (L1 + x2) ** 2
        dS2 = m2 * K2 / (K2 + S) ** 2 * x1 / (L2 + x1)
        dx2 = m2 * S / (K2 + S) * L2 / (L2 + x1) ** 2
        a, b = -th1 * dS1, -th2 * dS1 + dx1
        c, d = -th1 * dS2 + dx2, -th2 * dS2
        det = a * d - b * c
        ok = np.abs(det) > 1e-14
        det = np.where(ok, det, 1.0)
        s1 = (d * g1 - b * g2) / det
        s2 = (-c * g1 + a * g2) / det
        x1 = x1 - np.where(ok, s1, 0.0)
        x2 = x2 - np.where(ok, s2, 0.0)
        inside = (x1 > 0) & (x2 > 0) & (Sin - th1 * x1 - th2 * x2 > 0)
        x1, x2 = x1[inside], x2[inside]
    S = Sin - th1 * x1 - th2 * x2
    res = np.hypot(growth_ref(m1, K1, L1, S, x2) - D1, growth_ref(m2, K2, L2, S, x1) - D2)
    good = res < 1e-12
    pts = np.column_stack([S[good], x1[good], x2[good]])
    out: list[np.ndarray] = []
    for q in pts:
        if all(np.max(np.abs(q - r)) > tol for r in out):
            out.append(q)
    return sorted(out, key=lambda q: q[0])


def trajectory_ref(y0, pr, t_end, t_eval=None, rtol=1e-11, atol=1e-13):
    sol = solve_ivp(lambda t, y: rhs_ref(y, pr), (0.0, t_end), y0, method="DOP853",
                    rtol=rtol, atol=atol, t_eval=t_eval)
    return sol.t, sol.y.T


def monodromy_ref(y0, T, pr, rtol=1e-11, atol=1e-13):
    """Monodromy of the flow over [0, T] from y0 via the variational equations."""

    def f(t, z):
        y = z[:3]
        M = z[3:].reshape(3, 3)
        J = fd_jacobian(lambda u: rhs_ref(u, pr), y, 1e-7)
        return np.concatenate([rhs_ref(y, pr), (J @ M).ravel()])

    z0 = np.concatenate([y0, np.eye(3).ravel()])
    sol = solve_ivp(f, (0.0, T), z0, method="DOP853", rtol=rtol, atol=atol)
    return sol.y[3:, -1].reshape(3, 3), sol.y[:3, -1]


def hausdorff(a, b):
    from scipy.spatial.distance import cdist

    d = cdist(a, b)
    return max(d.min(axis=1).max(), d.min(axis=0).max())
