"""Online data-driven Jacobian estimators: linear KF, unscented KF and RLS.

All three see only joint increments ``dr`` and feature increments ``dx``.
The Jacobian is stacked row-major into an 18-vector for the two Kalman
filters; RLS keeps one 6-parameter regression per feature row.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

log = logging.getLogger(__name__)

N = 18
JITTER = 1e-9


def _sym(P):
    return 0.5 * (P + P.T)


def measurement_matrix(dr) -> np.ndarray:
    """``H`` with ``H @ vec(J) = J @ dr`` for row-major ``vec``."""
    return np.kron(np.eye(3), np.asarray(dr, dtype=float)[None, :])


def _init_j(j0):
    if j0 is None:
        return np.zeros(N)
    j0 = np.asarray(j0, dtype=float)
    return j0.reshape(N).copy()


@dataclass
class LinearKfState:
    j_vec: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    flagged: bool = False

    @classmethod
    def create(cls, j0=None, p0=1.0, q=1e-6, r=1e-4):
        return cls(_init_j(j0), p0 * np.eye(N), q * np.eye(N), r * np.eye(3))

    @property
    def J(self):
        return self.j_vec.reshape(3, 6)


@dataclass
class UkfState(LinearKfState):
    alpha: float = 1.0
    beta: float = 2.0
    kappa: float = 0.0

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("UKF alpha must lie in (0, 1]")

    @classmethod
    def create(cls, j0=None, p0=1.0, q=1e-6, r=1e-4, alpha=1.0, beta=2.0, kappa=0.0):
        return cls(_init_j(j0), p0 * np.eye(N), q * np.eye(N), r * np.eye(3), alpha=alpha, beta=beta, kappa=kappa)


@dataclass
class RlsState:
    theta: np.ndarray  # (3, 6), row j regresses dx_j on dr
    P: np.ndarray  # (3, 6, 6)
    mu: float = 0.98

    def __post_init__(self):
        if not 0 < self.mu <= 1:
            raise ValueError("forgetting factor mu must lie in (0, 1]")

    @classmethod
    def create(cls, j0=None, p0=1e4, mu=0.98):
        theta = np.zeros((3, 6)) if j0 is None else np.asarray(j0, dtype=float).reshape(3, 6).copy()
        return cls(theta, np.stack([p0 * np.eye(6)] * 3), mu)

    @property
    def J(self):
        return self.theta


def _solve_innovation(S, rhs):
    """Solve ``S x = rhs``; on failure retry with jitter and report it."""
    try:
        c = np.linalg.cholesky(S)
        return np.linalg.solve(c.T, np.linalg.solve(c, rhs)), False
    except np.linalg.LinAlgError:
        S = S + JITTER * np.eye(len(S))
        return np.linalg.lstsq(S, rhs, rcond=None)[0], True


def lkf_update(state: LinearKfState, dr, dx):
    """Random-walk Kalman step; returns ``(new_state, J_hat)``."""
    dr = np.asarray(dr, dtype=float)
    dx = np.asarray(dx, dtype=float)
    P = state.P + state.Q
    H = measurement_matrix(dr)
    S = _sym(H @ P @ H.T + state.R)
    KT, flagged = _solve_innovation(S, H @ P)  # K^T
    K = KT.T
    j = state.j_vec + K @ (dx - H @ state.j_vec)
    IKH = np.eye(N) - K @ H
    # Joseph form stays PSD under rounding
    P = _sym(IKH @ P @ IKH.T + K @ state.R @ K.T)
    new = replace(state, j_vec=j, P=P, flagged=state.flagged or flagged)
    return new, new.J.copy()


def sigma_points(mean, P, alpha, beta, kappa):
    n = len(mean)
    lam = alpha**2 * (n + kappa) - n
    try:
        L = np.linalg.cholesky((n + lam) * P)
    except np.linalg.LinAlgError:
        L = np.linalg.cholesky((n + lam) * (P + JITTER * np.eye(n)))
    pts = np.empty((2 * n + 1, n))
    pts[0] = mean
    pts[1 : n + 1] = mean + L.T
    pts[n + 1 :] = mean - L.T
    wm = np.full(2 * n + 1, 1.0 / (2 * (n + lam)))
    wc = wm.copy()
    wm[0] = lam / (n + lam)
    wc[0] = wm[0] + (1 - alpha**2 + beta)
    return pts, wm, wc


def ukf_update(state: UkfState, dr, dx):
    """Unscented Kalman step over the stacked Jacobian; returns ``(state, J_hat)``."""
    dr = np.asarray(dr, dtype=float)
    dx = np.asarray(dx, dtype=float)
    P = _sym(state.P + state.Q)
    pts, wm, wc = sigma_points(state.j_vec, P, state.alpha, state.beta, state.kappa)
    Z = pts.reshape(-1, 3, 6) @ dr  # (2n+1, 3)
    z_bar = wm @ Z
    dZ = Z - z_bar
    dX = pts - state.j_vec
    S = _sym((wc[:, None] * dZ).T @ dZ + state.R)
    Pxz = (wc[:, None] * dX).T @ dZ
    KT, flagged = _solve_innovation(S, Pxz.T)
    K = KT.T
    j = state.j_vec + K @ (dx - z_bar)
    P = _sym(P - K @ S @ K.T)
    new = replace(state, j_vec=j, P=P, flagged=state.flagged or flagged)
    return new, new.J.copy()


def rls_update(state: RlsState, dr, dx):
    """Exponentially weighted RLS, one regression per feature row."""
    dr = np.asarray(dr, dtype=float)
    dx = np.asarray(dx, dtype=float)
    theta = state.theta.copy()
    P = state.P.copy()
    for row in range(3):
        Pr = P[row]
        Pd = Pr @ dr
        gain = Pd / (state.mu + dr @ Pd)
        theta[row] += gain * (dx[row] - theta[row] @ dr)
        P[row] = _sym((Pr - np.outer(gain, dr @ Pr)) / state.mu)
    new = replace(state, theta=theta, P=P)
    return new, theta.copy()


# ---------------------------------------------------------------- adapters


@dataclass
class FilterEstimator:
    """Uniform ``jacobian() / observe()`` wrapper used by the harness."""

    kind: str
    state: object
    updates: int = field(default=0)

    _UPDATE = {"lkf": lkf_update, "ukf": ukf_update, "rls": rls_update}

    def jacobian(self, r=None):
        return self.state.J.copy()

    def observe(self, r_prev, dr, dx, **_):
        self.state, J = self._UPDATE[self.kind](self.state, dr, dx)
        self.updates += 1
        return J

    @classmethod
    def create(cls, kind, j0=None, **params):
        if kind == "lkf":
            st = LinearKfState.create(j0, **params)
        elif kind == "ukf":
            st = UkfState.create(j0, **params)
        elif kind == "rls":
            st = RlsState.create(j0, **params)
        else:
            raise ValueError(f"unknown estimator kind {kind!r}")
        return cls(kind, st)
