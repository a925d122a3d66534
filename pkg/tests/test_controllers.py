import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from servobench import controllers as C


def quad_coeffs(H, q):
    # a = int_0^H t^2 q^t dt, b = int_0^H t q^t dt at 40 digits
    mp.mp.dps = 40
    q = mp.mpf(q)
    a = mp.quad(lambda t: t * t * q**t, [0, H])
    b = mp.quad(lambda t: t * q**t, [0, H])
    return float(a), float(b)


def test_mpc_frozen_values():
    a, b, c = C.mpc_coefficients(5, 0.9, math.exp(-0.1))
    assert a == pytest.approx(28.217871452377, rel=1e-12)
    assert b == pytest.approx(8.86764974349435, rel=1e-12)
    assert c == pytest.approx(6.49942975953907, rel=1e-12)


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 12), st.floats(0.3, 1.0), st.floats(0.01, 1.0))
def test_mpc_coefficients_match_quadrature(H, alpha, rho):
    beta = math.exp(-rho)
    a, b, c = C.mpc_coefficients(H, alpha, beta)
    a_ref, b_ref = quad_coeffs(H, alpha)
    _, c_ref = quad_coeffs(H, alpha * beta)
    assert a == pytest.approx(a_ref, rel=1e-9)
    assert b == pytest.approx(b_ref, rel=1e-9)
    assert c == pytest.approx(c_ref, rel=1e-9)


@pytest.mark.parametrize("H", [1, 3, 5, 10])
def test_mpc_limit_at_unit_forgetting(H):
    a, b, _ = C.mpc_coefficients(H, 1.0 - 1e-13, 1.0)
    assert a == pytest.approx(H**3 / 3, rel=1e-9)
    assert b == pytest.approx(H**2 / 2, rel=1e-9)
    # continuous across the series cutoff; the closed form just above it
    # cancels about three digits
    for q in (math.exp(-0.049 / H), math.exp(-0.051 / H)):
        a_ref, b_ref = quad_coeffs(H, q)
        a, b, _ = C.mpc_coefficients(H, q, 1.0)
        assert a == pytest.approx(a_ref, rel=1e-10)
        assert b == pytest.approx(b_ref, rel=1e-10)


def test_mpc_control_formula():
    rng = np.random.default_rng(4)
    p = C.MpcParams()
    J, r, e = rng.normal(size=(3, 6)), rng.normal(size=6), rng.normal(size=3)
    a, b, c = C.mpc_coefficients(p.H, p.alpha_star, p.beta)
    M = a * J + np.linalg.pinv(J.T) @ p.Q
    assert np.allclose(C.mpc_control(r, J, e, p), r + np.linalg.pinv(M) @ ((b - c) * e), atol=1e-10)
    assert np.array_equal(C.mpc_control(r, J, np.zeros(3), p), r)


def test_mfac_formula():
    rng = np.random.default_rng(5)
    J, r, e = rng.normal(size=(3, 6)), rng.normal(size=6), rng.normal(size=3)
    p = C.MfacParams(lam=0.7)
    ref = r + np.linalg.inv(0.7 * np.eye(6) + J.T @ J) @ J.T @ e
    assert np.allclose(C.mfac_control(r, J, e, p), ref, atol=1e-12)
    # moves the predicted feature toward the goal
    step = C.mfac_control(np.zeros(6), J, e, p)
    assert np.linalg.norm(e - J @ step) < np.linalg.norm(e)


def test_pid_formula():
    J = np.hstack([2.0 * np.eye(3), np.zeros((3, 3))])
    dx = np.array([0.2, -0.4, 0.1])
    out = C.pid_control(J, dx, C.PidParams(k=3.0))
    assert np.allclose(out, np.r_[-1.5 * dx, np.zeros(3)])


@pytest.mark.parametrize(
    "cls,kw",
    [
        (C.PidParams, dict(k=0.0)),
        (C.PidParams, dict(n2=-1.0)),
        (C.MfacParams, dict(lam=0.0)),
        (C.MpcParams, dict(H=0)),
        (C.MpcParams, dict(H=2.5)),
        (C.MpcParams, dict(alpha_star=1.2)),
        (C.MpcParams, dict(rho=0.0)),
        (C.MpcParams, dict(Q=np.eye(3))),
        (C.MpcParams, dict(Q=-np.eye(6))),
    ],
)
def test_param_validation(cls, kw):
    with pytest.raises(ValueError):
        cls(**kw)
