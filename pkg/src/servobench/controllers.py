"""Comparison controllers: RBF+PID, model-free adaptive, closed-form predictive.

Sign convention: ``pid_control`` takes the feature error ``dx = x - x_d``;
``mfac_control`` and ``mpc_control`` take the tracking error ``e = x_d - x``
because they are written as position updates that move along ``+e``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ftsm import pinv


@dataclass(frozen=True)
class PidParams:
    k: float = 3.0
    n2: float = 10.0
    n3: float = 0.0
    pinv_tol: float = 1e-6

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError("PID gain k must be positive")
        if self.n2 < 0 or self.n3 < 0:
            raise ValueError("update gains must be >= 0")


@dataclass(frozen=True)
class MfacParams:
    lam: float = 1.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("MFAC lambda must be positive")


@dataclass(frozen=True)
class MpcParams:
    H: int = 5
    alpha_star: float = 0.9
    rho: float = 0.1
    Q: np.ndarray = field(default_factory=lambda: 0.1 * np.eye(6))
    pinv_tol: float = 1e-6

    def __post_init__(self):
        if int(self.H) != self.H or self.H < 1:
            raise ValueError("horizon H must be a positive integer")
        if not 0 < self.alpha_star <= 1:
            raise ValueError("alpha_star must lie in (0, 1]")
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        Q = np.asarray(self.Q, dtype=float)
        if Q.shape != (6, 6) or not np.allclose(Q, Q.T):
            raise ValueError("Q must be a symmetric 6x6 matrix")
        if np.linalg.eigvalsh(Q).min() <= 0:
            raise ValueError("Q must be positive definite")
        object.__setattr__(self, "Q", Q)

    @property
    def beta(self):
        return math.exp(-self.rho)


def pid_control(J_hat, dx, p: PidParams):
    """``r_dot = -k J_hat^+ dx``."""
    return -p.k * (pinv(J_hat, p.pinv_tol) @ np.asarray(dx, dtype=float))


def mfac_control(r_prev, J_hat, e_prev, p: MfacParams):
    """``r = r_prev + (lam I + J^T J)^-1 J^T e_prev``."""
    J = np.asarray(J_hat, dtype=float)
    A = p.lam * np.eye(J.shape[1]) + J.T @ J
    return np.asarray(r_prev, dtype=float) + np.linalg.solve(A, J.T @ np.asarray(e_prev, dtype=float))


# below this |H ln(q)| the closed forms lose too many digits; use the series
_SERIES_CUTOFF = 0.05
_SERIES_TERMS = 30


def _b_coeff(H, q):
    L = math.log(q)
    if abs(H * L) < _SERIES_CUTOFF:
        # (H L e^{HL} - e^{HL} + 1) / L^2 = sum_{n>=2} H^n (n-1)/n! L^(n-2)
        return sum(H**n * (n - 1) / math.factorial(n) * L ** (n - 2) for n in range(2, _SERIES_TERMS))
    qH = q**H
    return (H * qH * L - qH + 1.0) / (L * L)


def _a_coeff(H, q):
    L = math.log(q)
    if abs(H * L) < _SERIES_CUTOFF:
        # (H^2 q^H - 2 b) / L = sum_{m>=1} H^(m+2) [1/m! - 2(m+1)/(m+2)!] L^(m-1)
        return sum(
            H ** (m + 2) * (1.0 / math.factorial(m) - 2.0 * (m + 1) / math.factorial(m + 2)) * L ** (m - 1)
            for m in range(1, _SERIES_TERMS)
        )
    return (H * H * q**H - 2.0 * _b_coeff(H, q)) / L


def mpc_coefficients(H, alpha_star, beta):
    """Horizon coefficients ``(a, b, c)``; ``c`` is ``b`` evaluated at ``alpha_star * beta``."""
    a = _a_coeff(H, alpha_star)
    b = _b_coeff(H, alpha_star)
    c = _b_coeff(H, alpha_star * beta)
    return a, b, c


def mpc_control(r_prev, J_hat, e_k, p: MpcParams):
    """``r = r_prev + (a J + (J^T)^+ Q)^+ (b - c) e_k``.

    ``(J^T)^+`` is the 3x6 pseudo-inverse of the transposed Jacobian, so the
    bracket is 3x6 and its pseudo-inverse maps the 3-vector error to joints.
    """
    J = np.asarray(J_hat, dtype=float)
    a, b, c = mpc_coefficients(p.H, p.alpha_star, p.beta)
    M = a * J + pinv(J.T, p.pinv_tol) @ p.Q
    return np.asarray(r_prev, dtype=float) + pinv(M, p.pinv_tol) @ ((b - c) * np.asarray(e_k, dtype=float))
