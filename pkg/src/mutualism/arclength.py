"""Small dense pseudo-arclength predictor-corrector shared by all curve tracers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConvergenceError

ResJac = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]


@dataclass
class StepPolicy:
    ds: float = 0.01
    ds_min: float = 1e-6
    ds_max: float = 0.05
    shrink: float = 0.5
    grow: float = 1.3
    grow_after: int = 3
    newton_tol: float = 1e-10
    newton_maxiter: int = 10


def tangent(jac: np.ndarray, prev: np.ndarray | None = None) -> np.ndarray:
    """Unit null vector of an n x (n+1) Jacobian, oriented along ``prev``."""
    n = jac.shape[0]
    if prev is None:
        _, _, vt = np.linalg.svd(jac)
        t = vt[-1]
    else:
        A = np.vstack([jac, prev])
        b = np.zeros(n + 1)
        b[-1] = 1.0
        try:
            t = np.linalg.solve(A, b)
        except np.linalg.LinAlgError:
            _, _, vt = np.linalg.svd(jac)
            t = vt[-1]
    t = t / np.linalg.norm(t)
    if prev is not None and t @ prev < 0:
        t = -t
    return t


def correct(
    fj: ResJac,
    base: np.ndarray,
    direction: np.ndarray,
    h: float,
    tol: float = 1e-10,
    maxiter: int = 10,
    weights: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Newton on {F(v) = 0, <w*direction, v - base> = h} from the predictor base + h*direction.

    Returns the corrected point and the Jacobian of F there.
    """
    w = direction if weights is None else direction * weights
    scale = w @ direction
    v = base + h * direction
    last = np.inf
    for it in range(maxiter):
        r, J = fj(v)
        if not np.all(np.isfinite(r)):
            raise ConvergenceError("non-finite residual")
        arc = (w @ (v - base) - h * scale)
        nr = max(np.max(np.abs(r)), abs(arc))
        if nr < tol:
            return v, J
        if it > 2 and nr > 0.9 * last:
            raise ConvergenceError(f"corrector stalled at residual {nr:.3e}")
        last = nr
        A = np.vstack([J, w])
        try:
            dv = np.linalg.solve(A, -np.concatenate([r, [arc]]))
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError("singular corrector matrix") from exc
        v = v + dv
    r, J = fj(v)
    arc = (w @ (v - base) - h * scale)
    if max(np.max(np.abs(r)), abs(arc)) < tol:
        return v, J
    raise ConvergenceError("corrector did not converge")


def bracket_root(func: Callable[[float], float], a: float, fa: float, b: float, fb: float,
                 tol: float, maxiter: int = 60) -> tuple[float, float]:
    """Illinois-modified regula falsi on a sign-changing bracket.  Returns (x, f(x))."""
    if fa == 0:
        return a, fa
    if fb == 0:
        return b, fb
    if fa * fb > 0:
        raise ConvergenceError("bracket does not change sign")
    side = 0
    x, fx = b, fb
    for _ in range(maxiter):
        x = (a * fb - b * fa) / (fb - fa)
        fx = func(x)
        if abs(fx) < tol or abs(b - a) < 1e-15 * max(1.0, abs(a)):
            return x, fx
        if fx * fb > 0:
            b, fb = x, fx
            if side == -1:
                fa *= 0.5
            side = -1
        else:
            a, fa = x, fx
            if side == 1:
                fb *= 0.5
            side = 1
    raise ConvergenceError(f"secant localization failed, |test|={abs(fx):.3e}")
