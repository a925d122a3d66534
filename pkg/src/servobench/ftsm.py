"""Adaptive-exponent fast terminal sliding mode controller and its certificates."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

EPS_SING = 1e-9


@dataclass(frozen=True)
class FtsmParams:
    """Surface, controller and update-law gains.

    ``exponent`` is ``"adaptive"`` (tanh-switched exponent built from the
    ``lambda*`` and ``Delta`` fields) or ``"fixed"`` (uses ``gamma_fixed``,
    a scalar or a 3-vector).
    """

    alpha1: float = 1.0
    alpha2: float = 3.0
    alpha3: float = 1.0
    k1: float = 1.0
    k2: float = 0.1
    k3: float = 0.01
    k4: float = 0.01
    sigma: float = 0.8
    n1: float = 10.0
    exponent: str = "adaptive"
    gamma_fixed: float | tuple = 0.5
    lambda1: float = 0.3
    lambda2: float = 0.2
    lambda3: float = 300.0
    Delta: float = 1e-2
    varphi: float = 0.5
    pinv_tol: float = 1e-6
    long_range: bool = False

    def __post_init__(self):
        for name in ("alpha1", "alpha2", "alpha3", "k1", "k2", "k3", "k4"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.sigma < 1:
            raise ValueError("sigma must lie in (0, 1)")
        if not 0 < self.varphi < 1:
            raise ValueError("varphi must lie in (0, 1)")
        if self.n1 < 0:
            raise ValueError("n1 must be >= 0")
        if self.exponent not in ("adaptive", "fixed"):
            raise ValueError(f"unknown exponent mode {self.exponent!r}")
        if self.exponent == "adaptive":
            if min(self.lambda1, self.lambda2, self.lambda3, self.Delta) <= 0:
                raise ValueError("lambda1..3 and Delta must be positive")
            if not self.long_range and not (self.lambda1 - self.lambda2 > 0 and self.lambda1 + self.lambda2 < 1):
                raise ValueError("adaptive exponent must stay inside (0, 1): need l1 - l2 > 0 and l1 + l2 < 1")
        else:
            g = np.asarray(self.gamma_fixed, dtype=float)
            if np.any(g <= 0):
                raise ValueError("fixed exponent must be positive")

    def to_dict(self):
        d = dict(self.__dict__)
        if isinstance(d["gamma_fixed"], np.ndarray):
            d["gamma_fixed"] = d["gamma_fixed"].tolist()
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d.pop("kind", None)
        if isinstance(d.get("gamma_fixed"), list):
            d["gamma_fixed"] = tuple(d["gamma_fixed"])
        return cls(**d)


def sgn(x):
    return np.sign(x)


def sig(x, p):
    """``|x|^p * sgn(x)`` elementwise."""
    x = np.asarray(x, dtype=float)
    return np.abs(x) ** p * np.sign(x)


def gamma(dx, p: FtsmParams):
    """Exponent ``l1 - l2 tanh(l3 (dx^2 - Delta))`` (or the fixed exponent)."""
    dx = np.asarray(dx, dtype=float)
    if p.exponent == "fixed":
        return np.broadcast_to(np.asarray(p.gamma_fixed, dtype=float), dx.shape).astype(float)
    return p.lambda1 - p.lambda2 * np.tanh(p.lambda3 * (dx * dx - p.Delta))


def gamma_rate(dx, dx_dot, p: FtsmParams):
    """Time derivative of the exponent along ``dx(t)``."""
    dx = np.asarray(dx, dtype=float)
    if p.exponent == "fixed":
        return np.zeros_like(dx)
    th = np.tanh(p.lambda3 * (dx * dx - p.Delta))
    return -p.lambda2 * p.lambda3 * (1.0 - th * th) * 2.0 * dx * np.asarray(dx_dot, dtype=float)


def sliding_surface(dx, dx_dot, p: FtsmParams):
    dx = np.asarray(dx, dtype=float)
    g = gamma(dx, p)
    return p.alpha1 * np.asarray(dx_dot, dtype=float) + p.alpha2 * dx + p.alpha3 * sig(dx, g)


def sliding_derivative(dx, dx_dot, dx_ddot, p: FtsmParams, eps=EPS_SING):
    """Surface rate via the chain rule through the exponent.

    ``d/dt(|x|^g sgn x) = g |x|^(g-1) x_dot + |x|^g g_dot ln|x| sgn x``. The
    magnitude is floored at ``eps`` inside the singular factors.
    """
    dx = np.asarray(dx, dtype=float)
    dx_dot = np.asarray(dx_dot, dtype=float)
    g = gamma(dx, p)
    g_dot = gamma_rate(dx, dx_dot, p)
    a = np.maximum(np.abs(dx), eps)
    terminal = g * a ** (g - 1.0) * dx_dot + np.abs(dx) ** g * g_dot * np.log(a) * sgn(dx)
    return p.alpha1 * np.asarray(dx_ddot, dtype=float) + p.alpha2 * dx_dot + p.alpha3 * terminal


def pinv(J, tol=1e-6):
    """SVD pseudo-inverse; singular values below ``tol * s_max`` are dropped."""
    J = np.asarray(J, dtype=float)
    if not np.all(np.isfinite(J)):
        raise ValueError("pinv of a non-finite matrix")
    U, s, Vt = np.linalg.svd(J, full_matrices=False)
    # subnormal spectra have no representable inverse; treat them as zero
    if s.size == 0 or s[0] < np.finfo(float).tiny:
        return np.zeros(J.T.shape)
    keep = s > tol * s[0]
    inv = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)
    return (Vt.T * inv) @ U.T


def control_law(J_hat, s, s_dot, dx_dot, p: FtsmParams):
    """Joint-velocity command of the sliding-mode law (unclamped)."""
    s = np.asarray(s, dtype=float)
    v = -p.k1 * s - p.k2 * sig(s, 2 * p.sigma - 1) - p.k4 * np.asarray(s_dot, dtype=float) + p.alpha2 * np.asarray(dx_dot, dtype=float)
    return pinv(J_hat, p.pinv_tol) @ v / p.alpha2


def clamp_command(r_dot, bound):
    """Scale ``r_dot`` so that ``max|r_dot| <= bound``; returns ``(cmd, clamped)``."""
    r_dot = np.asarray(r_dot, dtype=float)
    if not np.all(np.isfinite(r_dot)):
        raise FloatingPointError("non-finite joint command")
    m = np.max(np.abs(r_dot)) if r_dot.size else 0.0
    if bound is not None and m > bound:
        return r_dot * (bound / m), True
    return r_dot, False


# ---------------------------------------------------------------- certificates


@dataclass(frozen=True)
class LyapunovSample:
    V: float
    V_s_part: float
    V_w_part: float
    t: float = 0.0


def lyapunov(s, W_ref, W_hat, k4, t=0.0) -> LyapunovSample:
    """``V = k4/2 s.s + 1/2 sum_ij |W_ref_ij - W_hat_ij|^2``."""
    s = np.asarray(s, dtype=float)
    if len(W_ref) != len(W_hat):
        raise ValueError("weight sets have different numbers of nets")
    vw = 0.0
    for a, b in zip(W_ref, W_hat):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if a.shape != b.shape:
            raise ValueError(f"weight shape mismatch {a.shape} vs {b.shape}")
        vw += float(np.sum((a - b) ** 2))
    vs = 0.5 * k4 * float(s @ s)
    return LyapunovSample(V=vs + 0.5 * vw, V_s_part=vs, V_w_part=0.5 * vw, t=t)


def certificate_k(p: FtsmParams):
    """Decay constant ``min{k2 / k4^sigma, k3 / 2}``."""
    return min(p.k2 / p.k4**p.sigma, p.k3 / 2.0)


def certificate_iota(sigma):
    return sigma ** (sigma / (1.0 - sigma))


def certificate_delta(W_ref, p: FtsmParams):
    """Residual ``k3/2 * sum_ij [(1 - sigma) iota + W_ij W_ij^T]`` over all weight rows."""
    rows = sum(np.asarray(w).shape[0] for w in W_ref)
    energy = sum(float(np.sum(np.asarray(w) ** 2)) for w in W_ref)
    return 0.5 * p.k3 * (rows * (1.0 - p.sigma) * certificate_iota(p.sigma) + energy)


def sgpfs_check(series, k, sigma, delta, tol_margin=0.0):
    """Fraction of steps where the sampled rate of V exceeds ``-k V^sigma + delta``.

    ``series`` holds :class:`LyapunovSample` items (or bare floats) on a
    uniform time grid; the rate is the forward difference.
    """
    V = np.array([x.V if isinstance(x, LyapunovSample) else float(x) for x in series])
    if len(V) < 3:
        raise ValueError("need at least three Lyapunov samples")
    ts = [x.t for x in series] if isinstance(series[0], LyapunovSample) else None
    if ts is not None and ts[1] != ts[0]:
        dt = ts[1] - ts[0]
    else:
        dt = 1.0
    rate = np.diff(V) / dt
    decay = k * np.maximum(V[:-1], 0.0) ** sigma
    bound = -decay + delta + tol_margin
    # rounding slack so that the equality boundary is not a violation
    slack = 1e-12 * (decay + abs(delta) + 1.0)
    return float(np.mean(rate > bound + slack))


def reach_floor(k, sigma, delta, varphi):
    """Level ``(delta / ((1 - varphi) k))^(1/sigma)`` that V enters in finite time."""
    return (delta / ((1.0 - varphi) * k)) ** (1.0 / sigma)


def predict_reach_time(V0, k, sigma, delta, varphi):
    """Upper bound on the time for V to fall below :func:`reach_floor`."""
    if not k > 0 or not 0 < sigma < 1 or not 0 < varphi < 1:
        raise ValueError("need k > 0 and sigma, varphi in (0, 1)")
    floor_term = (delta / ((1.0 - varphi) * k)) ** ((1.0 - sigma) / sigma)
    t = (V0 ** (1.0 - sigma) - floor_term) / ((1.0 - sigma) * varphi * k)
    return max(t, 0.0)


def _slide_time(x0, g, p: FtsmParams):
    """Time on the surface from |x0| to zero under exponent ``g``.

    Evaluated exactly as ``a1 ln(A / (A + a2/a3)) / ((g - 1)(a2 - a3))`` with
    ``A = |x0|^(g-1)``; NaN when the expression is not a positive finite time.
    """
    ax = abs(float(x0))
    if ax == 0.0:
        return 0.0
    A = ax ** (g - 1.0)
    arg = A / (A + p.alpha2 / p.alpha3)
    den = (g - 1.0) * (p.alpha2 - p.alpha3)
    if not arg > 0 or den == 0:
        return math.nan
    t = p.alpha1 * math.log(arg) / den
    return t if t >= 0 and math.isfinite(t) else math.nan


def far_exponent(p: FtsmParams):
    return p.lambda1 - p.lambda2


def near_exponent(p: FtsmParams):
    return p.lambda1 - p.lambda2 * math.tanh(p.lambda3 * (-p.Delta))


def predict_slide_time(dx_at_ts, p: FtsmParams):
    """Per-axis sliding-phase times ``(t_r1, t_r2)``.

    Far from the target (|dx| > sqrt(Delta)) the exponent is taken as its far
    limit while |dx| shrinks to sqrt(Delta), then the near limit down to zero. In fixed
    mode there is a single phase. NaN marks an axis where the closed form
    does not give a valid time.
    """
    dx = np.asarray(dx_at_ts, dtype=float).reshape(-1)
    t1 = np.zeros(dx.shape)
    t2 = np.zeros(dx.shape)
    if p.exponent == "fixed":
        g = np.broadcast_to(np.asarray(p.gamma_fixed, dtype=float), dx.shape)
        for j, x in enumerate(dx):
            t2[j] = _slide_time(x, float(g[j]), p)
        return t1, t2
    root = math.sqrt(p.Delta)
    gf, gn = far_exponent(p), near_exponent(p)
    for j, x in enumerate(dx):
        if abs(x) > root:
            # the surface ODE is autonomous, so the far leg is a difference
            t1[j] = _slide_time(x, gf, p) - _slide_time(root, gf, p)
            t2[j] = _slide_time(root, gn, p)
        else:
            t1[j] = 0.0
            t2[j] = _slide_time(x, gn, p)
    return t1, t2


@dataclass(frozen=True)
class ConvergencePrediction:
    t_s: float
    t_r1: np.ndarray
    t_r2: np.ndarray
    total: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "total", float(self.t_s + np.max(self.t_r1 + self.t_r2)))


def predict_convergence(V0, dx_at_ts, p: FtsmParams, delta, k=None):
    k = certificate_k(p) if k is None else k
    ts = predict_reach_time(V0, k, p.sigma, delta, p.varphi)
    t1, t2 = predict_slide_time(dx_at_ts, p)
    return ConvergencePrediction(ts, t1, t2)
