"""Hot numeric kernels.

Every kernel exists twice: a loop form compiled with numba and a vectorised
numpy form. The public names bind to one or the other depending on
``servobench._accel.USE_NUMBA``; both are importable under their private
names so tests and ``benchmarks/bench_kernels.py`` can compare them.

DH tables are ``(n, 4)`` float arrays with columns ``a, d, alpha, theta_offset``
(standard convention: ``Rz(theta) Tz(d) Tx(a) Rx(alpha)``).
"""
import numpy as np

from ._accel import njit, select


# ---------------------------------------------------------------- kinematics


def _dh_position_np(dh, r):
    T = np.eye(4)
    for i in range(dh.shape[0]):
        a, d, alpha, off = dh[i]
        th = r[i] + off
        ct, st = np.cos(th), np.sin(th)
        ca, sa = np.cos(alpha), np.sin(alpha)
        A = np.array(
            [
                [ct, -st * ca, st * sa, a * ct],
                [st, ct * ca, -ct * sa, a * st],
                [0.0, sa, ca, d],
                [0.0, 0.0, 0.0, 1.0],
            ]
        )
        T = T @ A
    return T[:3, 3].copy()


@njit
def _dh_position_nb(dh, r):
    # running rotation R and translation p of the chain
    R = np.eye(3)
    p = np.zeros(3)
    for i in range(dh.shape[0]):
        a = dh[i, 0]
        d = dh[i, 1]
        alpha = dh[i, 2]
        th = r[i] + dh[i, 3]
        ct = np.cos(th)
        st = np.sin(th)
        ca = np.cos(alpha)
        sa = np.sin(alpha)
        # local translation in parent frame
        lx = a * ct
        ly = a * st
        lz = d
        p0 = p[0] + R[0, 0] * lx + R[0, 1] * ly + R[0, 2] * lz
        p1 = p[1] + R[1, 0] * lx + R[1, 1] * ly + R[1, 2] * lz
        p2 = p[2] + R[2, 0] * lx + R[2, 1] * ly + R[2, 2] * lz
        p[0] = p0
        p[1] = p1
        p[2] = p2
        # local rotation columns
        c00 = ct
        c01 = -st * ca
        c02 = st * sa
        c10 = st
        c11 = ct * ca
        c12 = -ct * sa
        c21 = sa
        c22 = ca
        Rn = np.empty((3, 3))
        for k in range(3):
            Rn[k, 0] = R[k, 0] * c00 + R[k, 1] * c10
            Rn[k, 1] = R[k, 0] * c01 + R[k, 1] * c11 + R[k, 2] * c21
            Rn[k, 2] = R[k, 0] * c02 + R[k, 1] * c12 + R[k, 2] * c22
        R = Rn
    return p


def _dh_position_batch_np(dh, rs):
    out = np.empty((rs.shape[0], 3))
    for k in range(rs.shape[0]):
        out[k] = _dh_position_np(dh, rs[k])
    return out


@njit
def _dh_position_batch_nb(dh, rs):
    out = np.empty((rs.shape[0], 3))
    for k in range(rs.shape[0]):
        out[k] = _dh_position_nb(dh, rs[k])
    return out


def _observed_jacobian_np(dh, rot, r, h):
    J = np.empty((3, r.shape[0]))
    for i in range(r.shape[0]):
        rp = r.copy()
        rm = r.copy()
        rp[i] += h
        rm[i] -= h
        dp = _dh_position_np(dh, rp) - _dh_position_np(dh, rm)
        J[:, i] = rot.T @ dp / (2.0 * h)
    return J


@njit
def _observed_jacobian_nb(dh, rot, r, h):
    n = r.shape[0]
    J = np.empty((3, n))
    rp = r.copy()
    for i in range(n):
        rp[i] = r[i] + h
        pp = _dh_position_nb(dh, rp)
        rp[i] = r[i] - h
        pm = _dh_position_nb(dh, rp)
        rp[i] = r[i]
        for j in range(3):
            acc = 0.0
            for k in range(3):
                acc += rot[k, j] * (pp[k] - pm[k])
            J[j, i] = acc / (2.0 * h)
    return J


# ---------------------------------------------------------------- rbf


def _rbf_activations_np(r, centers, widths):
    d2 = np.sum((r[None, :] - centers) ** 2, axis=1)
    return np.exp(-d2 / widths**2)


@njit
def _rbf_activations_nb(r, centers, widths):
    l, m = centers.shape
    out = np.empty(l)
    for t in range(l):
        acc = 0.0
        for j in range(m):
            z = r[j] - centers[t, j]
            acc += z * z
        out[t] = np.exp(-acc / (widths[t] * widths[t]))
    return out


def _rbf_activations_batch_np(rs, centers, widths):
    # |r|^2 - 2 r.u + |u|^2 form keeps memory at (n, l)
    d2 = (
        np.sum(rs**2, axis=1)[:, None]
        - 2.0 * rs @ centers.T
        + np.sum(centers**2, axis=1)[None, :]
    )
    np.maximum(d2, 0.0, out=d2)
    return np.exp(-d2 / widths[None, :] ** 2)


@njit
def _rbf_activations_batch_nb(rs, centers, widths):
    n = rs.shape[0]
    out = np.empty((n, centers.shape[0]))
    for k in range(n):
        out[k] = _rbf_activations_nb(rs[k], centers, widths)
    return out


dh_position = select(_dh_position_nb, _dh_position_np)
dh_position_batch = select(_dh_position_batch_nb, _dh_position_batch_np)
observed_jacobian = select(_observed_jacobian_nb, _observed_jacobian_np)
rbf_activations = select(_rbf_activations_nb, _rbf_activations_np)
rbf_activations_batch = select(_rbf_activations_batch_nb, _rbf_activations_batch_np)
