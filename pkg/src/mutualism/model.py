"""Two-species obligate-mutualism chemostat in rescaled biomass units.

State is (S, x1, x2).  Species i grows at

    f_i(S, x_j) = m_i S / (K_i + S) * x_j / (L_i + x_j)

and is removed at D_i = alpha_i * D + a_i.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import DomainError

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib


@dataclass(frozen=True)
class GrowthParams:
    m1: float = 4.0
    K1: float = 0.2
    L1: float = 0.3
    m2: float = 4.0
    K2: float = 0.1
    L2: float = 0.2

    def __post_init__(self):
        for name in ("m1", "K1", "L1", "m2", "K2", "L2"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be strictly positive")


@dataclass(frozen=True)
class RemovalParams:
    alpha1: float = 1.0
    alpha2: float = 1.0
    a1: float = 0.8
    a2: float = 1.5

    def __post_init__(self):
        for name in ("alpha1", "alpha2"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise DomainError(f"{name} must lie in [0, 1]")
        for name in ("a1", "a2"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be nonnegative")


@dataclass(frozen=True)
class OperatingParams:
    S_in: float = 3.0
    D: float = 0.2

    def __post_init__(self):
        if self.S_in < 0:
            raise DomainError("S_in must be nonnegative")
        if not self.D > 0:
            raise DomainError("D must be strictly positive")


@dataclass(frozen=True)
class ModelParams:
    growth: GrowthParams = field(default_factory=GrowthParams)
    removal: RemovalParams = field(default_factory=RemovalParams)
    operating: OperatingParams = field(default_factory=OperatingParams)

    def __post_init__(self):
        if self.D1 <= 0 or self.D2 <= 0:
            raise DomainError("removal rates D_i = alpha_i*D + a_i must be positive")

    @property
    def S_in(self) -> float:
        return self.operating.S_in

    @property
    def D(self) -> float:
        return self.operating.D

    @property
    def D1(self) -> float:
        return self.removal.alpha1 * self.D + self.removal.a1

    @property
    def D2(self) -> float:
        return self.removal.alpha2 * self.D + self.removal.a2

    @property
    def D_min(self) -> float:
        return min(self.D, self.D1, self.D2)

    def removal_rate(self, i: int) -> float:
        return self.D1 if i == 1 else self.D2

    def species(self, i: int) -> tuple[float, float, float]:
        """(m_i, K_i, L_i) for species ``i``."""
        g = self.growth
        return (g.m1, g.K1, g.L1) if i == 1 else (g.m2, g.K2, g.L2)

    def with_operating(self, S_in: float | None = None, D: float | None = None) -> "ModelParams":
        op = OperatingParams(
            S_in=self.S_in if S_in is None else float(S_in),
            D=self.D if D is None else float(D),
        )
        return replace(self, operating=op)

    def with_param(self, which: str, value: float) -> "ModelParams":
        if which in ("sin", "S_in"):
            return self.with_operating(S_in=value)
        if which in ("d", "D"):
            return self.with_operating(D=value)
        raise ValueError(f"unknown operating parameter {which!r}")

    @property
    def no_mortality(self) -> bool:
        r = self.removal
        return r.a1 == 0 and r.a2 == 0 and r.alpha1 == 1 and r.alpha2 == 1

    def as_array(self) -> np.ndarray:
        g, r = self.growth, self.removal
        return np.array(
            [g.m1, g.K1, g.L1, g.m2, g.K2, g.L2, r.alpha1, r.alpha2, r.a1, r.a2, self.S_in, self.D],
            dtype=float,
        )

    def to_dict(self) -> dict:
        g, r = self.growth, self.removal
        return {
            "m1": g.m1, "K1": g.K1, "L1": g.L1, "m2": g.m2, "K2": g.K2, "L2": g.L2,
            "alpha1": r.alpha1, "alpha2": r.alpha2, "a1": r.a1, "a2": r.a2,
            "S_in": self.S_in, "D": self.D,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        base = cls()
        flat = base.to_dict()
        unknown = set(d) - set(flat)
        if unknown:
            raise ValueError(f"unknown parameter keys: {sorted(unknown)}")
        flat.update({k: float(v) for k, v in d.items()})
        return cls(
            GrowthParams(flat["m1"], flat["K1"], flat["L1"], flat["m2"], flat["K2"], flat["L2"]),
            RemovalParams(flat["alpha1"], flat["alpha2"], flat["a1"], flat["a2"]),
            OperatingParams(flat["S_in"], flat["D"]),
        )


def default_params(S_in: float = 3.0, D: float = 0.2, mortality: bool = True) -> ModelParams:
    """Reference biology (m=4,4; K=0.2,0.1; L=0.3,0.2; alpha=1,1).

    ``mortality=False`` sets a1 = a2 = 0.
    """
    removal = RemovalParams() if mortality else RemovalParams(a1=0.0, a2=0.0)
    return ModelParams(GrowthParams(), removal, OperatingParams(S_in, D))


def load_config(path: str | Path | None) -> ModelParams:
    if path is None:
        return ModelParams()
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    if "params" in data and isinstance(data["params"], dict):
        data = data["params"]
    return ModelParams.from_dict(data)


def _check_nonneg(*vals):
    for v in vals:
        if v < 0:
            raise DomainError(f"negative concentration {v!r}")


def growth(i: int, S: float, x_partner: float, p: ModelParams) -> float:
    _check_nonneg(S, x_partner)
    m, K, L = p.species(i)
    return m * S / (K + S) * x_partner / (L + x_partner)


def growth_partials(i: int, S: float, x_partner: float, p: ModelParams) -> tuple[float, float]:
    """(d f_i / dS, d f_i / d x_partner)."""
    _check_nonneg(S, x_partner)
    m, K, L = p.species(i)
    dS = m * K / (K + S) ** 2 * x_partner / (L + x_partner)
    dx = m * S / (K + S) * L / (L + x_partner) ** 2
    return dS, dx


def rhs(state, p: ModelParams) -> np.ndarray:
    return _kernels.rhs(np.asarray(state, dtype=float), p.as_array())


def jacobian(state, p: ModelParams) -> np.ndarray:
    return _kernels.jac(np.asarray(state, dtype=float), p.as_array())


def param_derivative(state, p: ModelParams, which: str) -> np.ndarray:
    """Partial derivative of the vector field with respect to S_in or D."""
    return _kernels.dparam(np.asarray(state, dtype=float), p.as_array(), _which_index(which))


def omega_bound(p: ModelParams) -> float:
    """Upper bound on S + x1 + x2 over the absorbing set."""
    return p.D * p.S_in / p.D_min


def in_omega(state, p: ModelParams, margin: float = 0.0) -> bool:
    s = np.asarray(state, dtype=float)
    return bool(np.all(s >= -margin) and s.sum() <= omega_bound(p) + margin)


def washout(p: ModelParams) -> np.ndarray:
    return np.array([p.S_in, 0.0, 0.0])


def _which_index(which: str) -> int:
    if which in ("sin", "S_in", 0):
        return 0
    if which in ("d", "D", 1):
        return 1
    raise ValueError(f"unknown operating parameter {which!r}")


def divergence(state, p: ModelParams) -> float:
    return float(np.trace(jacobian(state, p)))


def is_finite_state(state) -> bool:
    return all(math.isfinite(v) for v in state)
