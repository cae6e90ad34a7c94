import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mutualism.errors import DomainError
from mutualism.model import (
    GrowthParams,
    ModelParams,
    OperatingParams,
    RemovalParams,
    default_params,
    growth,
    growth_partials,
    in_omega,
    jacobian,
    load_config,
    omega_bound,
    param_derivative,
    rhs,
    washout,
)

from .oracles import fd_jacobian, rhs_ref
from .strategies import model_params, random_params

FAST = settings(max_examples=60, deadline=None, derandomize=True)


def test_growth_values(params):
    assert growth(1, 0.0, 5.0, params) == 0.0
    assert growth(1, 0.2, 0.3, params) == pytest.approx(1.0, rel=1e-14)
    assert growth(2, 3.0, 0.0, params) == 0.0


def test_growth_rejects_negative(params):
    with pytest.raises(DomainError):
        growth(1, -0.1, 1.0, params)
    with pytest.raises(DomainError):
        growth_partials(2, 1.0, -1e-3, params)


def test_growth_partial_hand_value(params):
    dS, dx = growth_partials(1, 0.2, 0.3, params)
    assert dS == pytest.approx(2.5, rel=1e-14)
    assert growth_partials(1, 0.0, 0.7, params)[1] == 0.0


@FAST
@given(model_params(), st.floats(1e-3, 5.0), st.floats(1e-3, 5.0), st.sampled_from([1, 2]))
def test_growth_partials_match_finite_differences(p, S, x, i):
    dS, dx = growth_partials(i, S, x, p)
    h = 1e-6
    fdS = (growth(i, S + h * S, x, p) - growth(i, S - h * S, x, p)) / (2 * h * S)
    fdx = (growth(i, S, x + h * x, p) - growth(i, S, x - h * x, p)) / (2 * h * x)
    assert dS > 0 and dx > 0
    assert dS == pytest.approx(fdS, rel=1e-6)
    assert dx == pytest.approx(fdx, rel=1e-6)


@FAST
@given(model_params(), st.floats(0.0, 5.0))
def test_obligate_mutualism_and_zero_substrate(p, v):
    assert growth(1, 0.0, v, p) == 0.0
    assert growth(2, v, 0.0, p) == 0.0
    assert growth(1, v, v, p) < p.growth.m1


@FAST
@given(model_params())
def test_washout_is_exact_equilibrium(p):
    assert np.all(rhs(washout(p), p) == 0.0)


def test_rhs_boundary_invariance(params):
    assert rhs([1.0, 0.0, 0.4], params)[1] == 0.0
    assert rhs([1.0, 0.4, 0.0], params)[2] == 0.0


def test_rhs_vanishes_at_reference_fold_state():
    p = default_params(S_in=2.8504, D=0.2)
    assert np.linalg.norm(rhs([0.665, 0.191, 0.144], p)) < 1e-2


def test_rhs_matches_reference(rng):
    for _ in range(50):
        p = random_params(rng)
        y = rng.uniform(0, 2, 3)
        np.testing.assert_allclose(rhs(y, p), rhs_ref(y, p.as_array()), rtol=1e-13, atol=1e-15)


def test_washout_jacobian_diagonal(params):
    np.testing.assert_allclose(jacobian(washout(params), params), np.diag([-0.2, -1.0, -1.7]), atol=1e-15)


def test_jacobian_against_finite_differences(rng):
    worst = 0.0
    for _ in range(100):
        p = random_params(rng)
        y = rng.uniform(0.01, 2.0, 3)
        J = jacobian(y, p)
        Jfd = fd_jacobian(lambda u: rhs_ref(u, p.as_array()), y)
        worst = max(worst, np.max(np.abs(J - Jfd)) / max(1.0, np.max(np.abs(J))))
    assert worst < 1e-6


def test_param_derivative_against_finite_differences(rng):
    for _ in range(20):
        p = random_params(rng)
        y = rng.uniform(0.01, 2.0, 3)
        for which, key in (("sin", "S_in"), ("d", "D")):
            v = getattr(p, key)
            h = 1e-6 * v
            fd = (rhs(y, p.with_param(which, v + h)) - rhs(y, p.with_param(which, v - h))) / (2 * h)
            np.testing.assert_allclose(param_derivative(y, p, which), fd, rtol=1e-6, atol=1e-8)


def test_jacobian_zero_diagonal_at_coexistence(params):
    from mutualism.equilibria import find_coexistence

    for e in find_coexistence(params):
        J = jacobian(e.state, params)
        assert abs(J[1, 1]) < 1e-10 and abs(J[2, 2]) < 1e-10


def test_omega_bound_values():
    assert omega_bound(default_params(S_in=3.0, D=0.2)) == pytest.approx(3.0)
    p0 = default_params(S_in=2.5, mortality=False)
    assert omega_bound(p0) == pytest.approx(2.5)
    p = default_params()
    assert (p.D1, p.D2) == pytest.approx((1.0, 1.7))


def test_parameter_invariants():
    with pytest.raises(DomainError):
        GrowthParams(m1=0.0)
    with pytest.raises(DomainError):
        RemovalParams(alpha1=1.2)
    with pytest.raises(DomainError):
        RemovalParams(a2=-0.1)
    with pytest.raises(DomainError):
        OperatingParams(D=0.0)
    with pytest.raises(DomainError):
        ModelParams(removal=RemovalParams(alpha1=0.0, a1=0.0))


def test_in_omega(params):
    assert in_omega(washout(params), params)
    assert not in_omega([params.S_in, 1.0, 0.0], params)


def test_config_roundtrip(tmp_path):
    cfg = tmp_path / "p.toml"
    cfg.write_text("[params]\nS_in = 3.2324\nD = 0.2\na1 = 0.8\n")
    p = load_config(cfg)
    assert p.S_in == 3.2324 and p.D1 == pytest.approx(1.0)
    assert ModelParams.from_dict(p.to_dict()) == p
    bad = tmp_path / "bad.toml"
    bad.write_text("Sin = 1\n")
    with pytest.raises(ValueError):
        load_config(bad)
