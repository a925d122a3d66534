"""Estimator residuals (T1, T2) and closed-loop response statistics."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def metric_t1(ds, J_hat, dr) -> float:
    """One-step residual ``||ds - J_hat dr||``."""
    return float(np.linalg.norm(np.asarray(ds, dtype=float) - np.asarray(J_hat, dtype=float) @ np.asarray(dr, dtype=float)))


@dataclass
class MetricSeries:
    s_hat: np.ndarray
    T1: list = field(default_factory=list)
    T2: list = field(default_factory=list)

    @classmethod
    def start(cls, s0):
        """Seed the accumulator with the first measurement, so ``T2(0) = 0``."""
        ms = cls(np.array(s0, dtype=float))
        ms.T2.append(0.0)
        return ms


def metric_t2(state: MetricSeries, s_k, J_hat, dr):
    """Dead-reckon the feature with ``J_hat dr`` and return the drift from ``s_k``."""
    state.s_hat = state.s_hat + np.asarray(J_hat, dtype=float) @ np.asarray(dr, dtype=float)
    t2 = float(np.linalg.norm(np.asarray(s_k, dtype=float) - state.s_hat))
    state.T2.append(t2)
    return state, t2


def axis_first_crossings(err):
    """Per-axis index of the first sign change (``None`` when it never crosses)."""
    err = np.asarray(err, dtype=float)
    out = []
    for j in range(err.shape[1]):
        s = np.sign(err[:, j])
        flips = np.flatnonzero((s[1:] * s[:-1] < 0) | ((s[1:] == 0) & (s[:-1] != 0))) + 1
        out.append(int(flips[0]) if flips.size else None)
    return out


def overshoot(err) -> float:
    """Largest ``|err_j|`` seen after that axis first crosses zero."""
    err = np.asarray(err, dtype=float)
    worst = 0.0
    for j, k in enumerate(axis_first_crossings(err)):
        if k is not None:
            worst = max(worst, float(np.abs(err[k:, j]).max()))
    return worst


def sign_changes(err, deadband=0.0) -> int:
    """Sign changes of each axis after its first crossing, summed over axes.

    With ``deadband > 0`` a change only counts once the signal leaves the
    band ``|e| <= deadband`` on the opposite side (Schmitt-trigger counting),
    so sub-band numerical chatter is ignored.
    """
    err = np.asarray(err, dtype=float)
    total = 0
    for j, k in enumerate(axis_first_crossings(err)):
        if k is None:
            continue
        e = err[k - 1 :, j]
        state = 0
        for v in e:
            side = 1 if v > deadband else (-1 if v < -deadband else 0)
            if side == 0:
                continue
            if state != 0 and side != state:
                total += 1
            state = side
    return total


def time_to_band(err, band, dt):
    """Time at which every axis has first reached ``|err_j| <= band``."""
    err = np.abs(np.asarray(err, dtype=float))
    times = []
    for j in range(err.shape[1]):
        idx = np.flatnonzero(err[:, j] <= band)
        if idx.size == 0:
            return None
        times.append(idx[0])
    return float(max(times) * dt)


def telescoping_gap(ds, J_hats, drs, T2) -> float:
    """Max deviation of ``T2_k`` from ``||sum_{m<=k}(ds_m - J_m dr_m)||``."""
    resid = np.asarray(ds) - np.einsum("kij,kj->ki", np.asarray(J_hats), np.asarray(drs))
    ref = np.linalg.norm(np.cumsum(resid, axis=0), axis=1)
    return float(np.max(np.abs(ref - np.asarray(T2)[1 : len(ref) + 1]))) if len(ref) else 0.0
