"""Compiled inner loops: vector field, Jacobian and a Dormand-Prince 5(4) stepper.

Parameters travel as a flat float64 array (see ``ModelParams.as_array``) so the
kernels stay free of Python objects.  ``which`` selects the free parameter for
sensitivity integration: 0 = S_in, 1 = D.
"""

import numpy as np
from numba import njit

M1, K1, L1, M2, K2, L2, AL1, AL2, A1, A2, SIN, DIL = range(12)
NPAR = 12

# augmented state layout: y(3) | transition matrix row-major (9) | dy/dparam (3) | int div f (1)
NAUG = 16


@njit(cache=True)
def rhs(y, pr):
    S, x1, x2 = y[0], y[1], y[2]
    D = pr[DIL]
    d1 = pr[AL1] * D + pr[A1]
    d2 = pr[AL2] * D + pr[A2]
    f1 = pr[M1] * S / (pr[K1] + S) * x2 / (pr[L1] + x2)
    f2 = pr[M2] * S / (pr[K2] + S) * x1 / (pr[L2] + x1)
    out = np.empty(3)
    out[0] = D * (pr[SIN] - S) - f1 * x1 - f2 * x2
    out[1] = (f1 - d1) * x1
    out[2] = (f2 - d2) * x2
    return out


@njit(cache=True)
def jac(y, pr):
    S, x1, x2 = y[0], y[1], y[2]
    D = pr[DIL]
    d1 = pr[AL1] * D + pr[A1]
    d2 = pr[AL2] * D + pr[A2]
    m1, k1, l1 = pr[M1], pr[K1], pr[L1]
    m2, k2, l2 = pr[M2], pr[K2], pr[L2]
    f1 = m1 * S / (k1 + S) * x2 / (l1 + x2)
    f2 = m2 * S / (k2 + S) * x1 / (l2 + x1)
    E = m1 * k1 / (k1 + S) ** 2 * x2 / (l1 + x2)
    G = m1 * S / (k1 + S) * l1 / (l1 + x2) ** 2
    F = m2 * k2 / (k2 + S) ** 2 * x1 / (l2 + x1)
    H = m2 * S / (k2 + S) * l2 / (l2 + x1) ** 2
    J = np.empty((3, 3))
    J[0, 0] = -D - E * x1 - F * x2
    J[0, 1] = -f1 - H * x2
    J[0, 2] = -f2 - G * x1
    J[1, 0] = E * x1
    J[1, 1] = f1 - d1
    J[1, 2] = G * x1
    J[2, 0] = F * x2
    J[2, 1] = H * x2
    J[2, 2] = f2 - d2
    return J


@njit(cache=True)
def dparam(y, pr, which):
    out = np.zeros(3)
    if which == 0:
        out[0] = pr[DIL]
    else:
        out[0] = pr[SIN] - y[0]
        out[1] = -pr[AL1] * y[1]
        out[2] = -pr[AL2] * y[2]
    return out


@njit(cache=True)
def aug_rhs(z, pr, which):
    y = z[:3]
    f = rhs(y, pr)
    J = jac(y, pr)
    out = np.empty(NAUG)
    out[:3] = f
    for i in range(3):
        for j in range(3):
            acc = 0.0
            for k in range(3):
                acc += J[i, k] * z[3 + 3 * k + j]
            out[3 + 3 * i + j] = acc
    dp = dparam(y, pr, which)
    for i in range(3):
        acc = dp[i]
        for k in range(3):
            acc += J[i, k] * z[12 + k]
        out[12 + i] = acc
    out[15] = J[0, 0] + J[1, 1] + J[2, 2]
    return out


@njit(cache=True)
def _field(z, pr, which, aug):
    if aug:
        return aug_rhs(z, pr, which)
    return rhs(z, pr)


# Dormand-Prince 5(4) tableau
C2, C3, C4, C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0
A21 = 1.0 / 5.0
A31, A32 = 3.0 / 40.0, 9.0 / 40.0
A41, A42, A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
A51, A52, A53, A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
A61, A62, A63, A64, A65 = 9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0
B1, B3, B4, B5, B6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
E1 = 71.0 / 57600.0
E3 = -71.0 / 16695.0
E4 = 71.0 / 1920.0
E5 = -17253.0 / 339200.0
E6 = 22.0 / 525.0
E7 = -1.0 / 40.0


@njit(cache=True)
def dp54(y0, t_end, pr, which, aug, rtol, atol, h0, max_steps, record, clip):
    """Integrate from t=0 to t_end.

    Returns (y_end, status, n_accepted, n_rejected, ts, ys).  status 0 = ok,
    1 = step underflow, 2 = step budget exhausted.  When ``record`` is set, every
    accepted step is stored (ts/ys have n_accepted+1 valid rows).
    """
    n = y0.shape[0]
    y = y0.copy()
    t = 0.0
    cap = max_steps + 1 if record else 1
    ts = np.empty(cap)
    ys = np.empty((cap, n))
    if record:
        ts[0] = 0.0
        ys[0] = y
    if t_end <= 0.0:
        return y, 0, 0, 0, ts, ys
    k1 = _field(y, pr, which, aug)
    h = h0
    if h <= 0.0:
        d0 = 0.0
        d1 = 0.0
        for i in range(n):
            sc = atol + rtol * abs(y[i])
            d0 += (y[i] / sc) ** 2
            d1 += (k1[i] / sc) ** 2
        d0 = np.sqrt(d0 / n)
        d1 = np.sqrt(d1 / n)
        h = 0.01 * d0 / d1 if (d0 > 1e-5 and d1 > 1e-5) else 1e-6
        h = min(h, 0.1 * t_end)
    beta = 0.04
    expo1 = 0.2 - beta * 0.75
    facold = 1e-4
    nacc = 0
    nrej = 0
    hmin = 1e-14 * max(1.0, t_end)
    last = False
    while True:
        if t + h >= t_end:
            h = t_end - t
            last = True
        if h < hmin and not last:
            return y, 1, nacc, nrej, ts, ys
        k2 = _field(y + h * A21 * k1, pr, which, aug)
        k3 = _field(y + h * (A31 * k1 + A32 * k2), pr, which, aug)
        k4 = _field(y + h * (A41 * k1 + A42 * k2 + A43 * k3), pr, which, aug)
        k5 = _field(y + h * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4), pr, which, aug)
        k6 = _field(y + h * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5), pr, which, aug)
        ynew = y + h * (B1 * k1 + B3 * k3 + B4 * k4 + B5 * k5 + B6 * k6)
        k7 = _field(ynew, pr, which, aug)
        err = 0.0
        for i in range(n):
            sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
            e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
            err += (e / sc) ** 2
        err = np.sqrt(err / n)
        if err <= 1.0:
            # PI control (Gustafsson / Hairer)
            fac11 = err ** expo1
            fac = fac11 / facold ** beta
            fac = min(5.0, max(0.2, fac / 0.9))
            hnew = h / fac
            facold = max(err, 1e-4)
            t = t + h
            y = ynew
            if clip:
                for i in range(3):
                    if y[i] < 0.0:
                        y[i] = 0.0
                k7 = _field(y, pr, which, aug)
            k1 = k7
            nacc += 1
            if record:
                if nacc >= cap:
                    return y, 2, nacc, nrej, ts, ys
                ts[nacc] = t
                ys[nacc] = y
            if last:
                return y, 0, nacc, nrej, ts, ys
            if nacc >= max_steps:
                return y, 2, nacc, nrej, ts, ys
            h = hnew
        else:
            fac11 = err ** expo1
            h = h / min(5.0, fac11 / 0.9)
            nrej += 1
            last = False


@njit(cache=True)
def shoot_segments(nodes, durations, pr, which, rtol, atol):
    """Flow every node over its segment duration with variational equations.

    Returns an (m, NAUG) array of end states and a status flag (0 = ok).
    """
    m = nodes.shape[0]
    out = np.empty((m, NAUG))
    status = 0
    for k in range(m):
        z0 = np.zeros(NAUG)
        z0[:3] = nodes[k]
        z0[3] = 1.0
        z0[7] = 1.0
        z0[11] = 1.0
        z, st, na, nr, ts, ys = dp54(z0, durations[k], pr, which, True, rtol, atol, -1.0, 2000000, False, False)
        if st != 0:
            status = st
        out[k] = z
    return out, status
