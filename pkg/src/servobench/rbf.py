"""Column-split RBF Jacobian estimator.

Column ``i`` of the 3x6 Jacobian is produced by its own Gaussian RBF network,
``J_i(r) = W_i @ theta_i(r)`` with ``theta_it = exp(-(|r - u_it| / delta_it)^2)``.
Offline training fits the weights on random-motion data; two online update
laws adapt them during servoing.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.spatial import cKDTree

from . import kernels

log = logging.getLogger(__name__)

N_COLUMNS = 6
WEIGHT_NORM_CAP = 1e3


@dataclass
class RbfColumnNet:
    centers: np.ndarray  # (l, 6)
    widths: np.ndarray  # (l,)
    weights: np.ndarray  # (3, l)

    def __post_init__(self):
        self.centers = np.ascontiguousarray(self.centers, dtype=float)
        self.widths = np.ascontiguousarray(self.widths, dtype=float).reshape(-1)
        self.weights = np.ascontiguousarray(self.weights, dtype=float)
        l = self.centers.shape[0]
        if l < 1 or self.centers.ndim != 2:
            raise ValueError("a column net needs at least one neuron")
        if self.widths.shape != (l,):
            raise ValueError("one width per neuron required")
        if self.weights.shape != (3, l):
            raise ValueError(f"weights must be 3x{l}, got {self.weights.shape}")
        if not np.all(self.widths > 0):
            raise ValueError("RBF widths must be strictly positive")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("RBF weights must be finite")

    @property
    def size(self):
        return self.centers.shape[0]

    def copy(self):
        return RbfColumnNet(self.centers.copy(), self.widths.copy(), self.weights.copy())


@dataclass
class RbfJacobianEstimator:
    nets: list
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.nets) != N_COLUMNS:
            raise ValueError(f"expected {N_COLUMNS} column nets, got {len(self.nets)}")

    def jacobian(self, r):
        return estimate_jacobian(self, r)

    def copy(self):
        return RbfJacobianEstimator([n.copy() for n in self.nets], dict(self.metadata))

    def weight_set(self):
        """Weights of all nets as a list of 3 x l arrays (shared, not copied)."""
        return [n.weights for n in self.nets]

    def with_weights(self, weights):
        nets = [RbfColumnNet(n.centers, n.widths, w) for n, w in zip(self.nets, weights)]
        return RbfJacobianEstimator(nets, dict(self.metadata))

    def to_dict(self):
        return {
            "nets": [
                {
                    "centers": n.centers.tolist(),
                    "widths": n.widths.tolist(),
                    "weights": n.weights.tolist(),
                }
                for n in self.nets
            ],
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d):
        nets = [RbfColumnNet(np.asarray(n["centers"]), np.asarray(n["widths"]), np.asarray(n["weights"])) for n in d["nets"]]
        return cls(nets, dict(d.get("metadata", {})))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def activations(net: RbfColumnNet, r) -> np.ndarray:
    return kernels.rbf_activations(np.asarray(r, dtype=float), net.centers, net.widths)


def estimate_jacobian(est: RbfJacobianEstimator, r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    J = np.empty((3, N_COLUMNS))
    for i, net in enumerate(est.nets):
        J[:, i] = net.weights @ activations(net, r)
    return J


def feature_velocity_error(x_dot, J_hat, r_dot) -> np.ndarray:
    """Feature-speed estimation error ``x_dot - J_hat r_dot``."""
    return np.asarray(x_dot, dtype=float) - np.asarray(J_hat) @ np.asarray(r_dot, dtype=float)


# ---------------------------------------------------------------- training


@dataclass
class TrainConfig:
    neurons_per_net: tuple = (64,) * N_COLUMNS
    learning_rates: tuple | None = None  # None: 1 / (largest curvature of each block)
    epochs: int = 2000
    batch_size: int = 256
    holdout_fraction: float = 0.1
    seed: int = 0
    width_scale: float = 3.0
    momentum: float = 0.9
    solver: str = "gd"  # "gd" or "lstsq"
    ridge: float = 1e-8

    def __post_init__(self):
        if len(self.neurons_per_net) != N_COLUMNS or min(self.neurons_per_net) < 1:
            raise ValueError("neurons_per_net needs six positive integers")
        if self.learning_rates is not None:
            if len(self.learning_rates) != N_COLUMNS or min(self.learning_rates) <= 0:
                raise ValueError("learning_rates needs six positive values")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if not 0 < self.holdout_fraction < 1:
            raise ValueError("holdout_fraction must lie in (0, 1)")
        if self.solver not in ("gd", "lstsq"):
            raise ValueError(f"unknown solver {self.solver!r}")


def place_centers(r_samples, n_neurons, seed, width_scale=3.0):
    """k-means centers and a shared width per net.

    The width is ``width_scale`` times the median distance from each center
    to its nearest neighbouring center.
    """
    r_samples = np.asarray(r_samples, dtype=float)
    uniq = np.unique(r_samples, axis=0)
    if len(uniq) <= n_neurons:
        centers = uniq.copy()
    else:
        centers, _ = kmeans2(r_samples, n_neurons, seed=seed, minit="++")
    if len(centers) > 1:
        d, _ = cKDTree(centers).query(centers, k=2)
        w = float(np.median(d[:, 1]))
    else:
        w = 0.0
    if not w > 0:
        w = max(float(np.ptp(r_samples, axis=0).max()), 1.0)
    return centers, np.full(len(centers), w * width_scale)


def design_matrix(nets, r, r_dot):
    """Stacked regressors ``[theta_1(r) r_dot_1, ..., theta_6(r) r_dot_6]``."""
    blocks = [kernels.rbf_activations_batch(r, n.centers, n.widths) * r_dot[:, i : i + 1] for i, n in enumerate(nets)]
    return np.concatenate(blocks, axis=1)


def _split_weights(flat, sizes):
    out, k = [], 0
    for l in sizes:
        out.append(flat[:, k : k + l])
        k += l
    return out


def fit_weights_lstsq(Phi, Y, ridge=1e-8):
    """Ridge-regularised least squares for the stacked weight matrix (3 x L)."""
    A = Phi.T @ Phi
    A[np.diag_indices_from(A)] += ridge * max(np.trace(A) / len(A), 1e-300)
    return np.linalg.solve(A, Phi.T @ Y).T


def _fit_weights_gd(Phi, Y, sizes, cfg: TrainConfig, rng):
    n, L = Phi.shape
    if cfg.learning_rates is None:
        lrs, k = [], 0
        for l in sizes:
            B = Phi[:, k : k + l]
            lam = np.linalg.eigvalsh(B.T @ B / n)[-1]
            lrs.append(0.5 / lam if lam > 0 else 1.0)
            k += l
    else:
        lrs = list(cfg.learning_rates)
    lr = np.repeat(np.asarray(lrs, dtype=float), sizes)
    W = np.zeros((3, L))
    vel = np.zeros_like(W)
    bs = min(cfg.batch_size, n)
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for b in range(0, n, bs):
            idx = perm[b : b + bs]
            P = Phi[idx]
            grad = (P @ W.T - Y[idx]).T @ P / len(idx)
            vel = cfg.momentum * vel - lr * grad
            W += vel
    return W, lrs


def offline_train(dataset, cfg: TrainConfig | None = None, dt: float | None = None) -> RbfJacobianEstimator:
    """Fit an estimator on ``(r, dr, dx)`` triples.

    ``dataset`` is either a sequence of triples or a tuple of three arrays
    ``(r, dr, dx)`` with shapes ``(n, 6), (n, 6), (n, 3)``. Increments are
    divided by ``dt`` (when given) so the loss is in feature-velocity units;
    the minimiser is the same either way.
    """
    cfg = cfg or TrainConfig()
    r, dr, dx = _as_arrays(dataset)
    if not np.any(np.abs(dr) > 0):
        raise ValueError("degenerate dataset: every joint increment is zero")
    scale = 1.0 / dt if dt else 1.0
    rng = np.random.default_rng(cfg.seed)

    n = len(r)
    n_hold = int(round(n * cfg.holdout_fraction)) if n > 1 else 0
    n_hold = min(n_hold, n - 1)
    # contiguous tail holdout: trajectory data is serially correlated
    tr = slice(0, n - n_hold)
    ho = slice(n - n_hold, n)

    nets = []
    for i, l in enumerate(cfg.neurons_per_net):
        c, w = place_centers(r[tr], l, seed=cfg.seed + i, width_scale=cfg.width_scale)
        nets.append(RbfColumnNet(c, w, np.zeros((3, len(c)))))
    sizes = [net.size for net in nets]

    Phi = design_matrix(nets, r[tr], dr[tr] * scale)
    Y = dx[tr] * scale
    if cfg.solver == "lstsq":
        W, lrs = fit_weights_lstsq(Phi, Y, cfg.ridge), None
    else:
        W, lrs = _fit_weights_gd(Phi, Y, sizes, cfg, rng)
    est = RbfJacobianEstimator([RbfColumnNet(n_.centers, n_.widths, w) for n_, w in zip(nets, _split_weights(W, sizes))])
    clip_weights(est)

    train_loss = float(np.mean(np.sum((Phi @ W.T - Y) ** 2, axis=1)))
    if n_hold:
        Ph = design_matrix(nets, r[ho], dr[ho] * scale)
        hold_loss = float(np.mean(np.sum((Ph @ W.T - dx[ho] * scale) ** 2, axis=1)))
    else:
        hold_loss = float("nan")
    est.metadata.update(
        train_loss=train_loss,
        holdout_loss=hold_loss,
        n_train=n - n_hold,
        n_holdout=n_hold,
        solver=cfg.solver,
        learning_rates=None if lrs is None else [float(x) for x in lrs],
        neurons=sizes,
    )
    log.info("offline_train: train %.3e holdout %.3e", train_loss, hold_loss)
    return est


def reference_weights(est: RbfJacobianEstimator, dataset, dt=None, ridge=1e-8):
    """Converged weights on ``est``'s basis, used as the ideal-weight proxy."""
    r, dr, dx = _as_arrays(dataset)
    scale = 1.0 / dt if dt else 1.0
    Phi = design_matrix(est.nets, r, dr * scale)
    W = fit_weights_lstsq(Phi, dx * scale, ridge)
    return _split_weights(W, [n.size for n in est.nets])


def _as_arrays(dataset):
    if isinstance(dataset, tuple) and len(dataset) == 3 and np.ndim(dataset[0]) == 2:
        r, dr, dx = (np.asarray(a, dtype=float) for a in dataset)
    else:
        if len(dataset) == 0:
            raise ValueError("empty dataset")
        r = np.array([d[0] for d in dataset], dtype=float)
        dr = np.array([d[1] for d in dataset], dtype=float)
        dx = np.array([d[2] for d in dataset], dtype=float)
    if len(r) == 0:
        raise ValueError("empty dataset")
    if r.shape[1] != 6 or dr.shape != r.shape or dx.shape != (len(r), 3):
        raise ValueError("dataset arrays have inconsistent shapes")
    return r, dr, dx


# ---------------------------------------------------------------- online laws


def clip_weights(est: RbfJacobianEstimator, cap: float = WEIGHT_NORM_CAP) -> bool:
    """Rescale any net whose Frobenius weight norm exceeds ``cap``."""
    hit = False
    for net in est.nets:
        nrm = np.linalg.norm(net.weights)
        if nrm > cap:
            net.weights *= cap / nrm
            hit = True
    return hit


def online_update_proposed(est, r, r_dot, e, s, n1, alpha2, k3, dt):
    """One Euler step of the sliding-surface weight law, in place.

    Row j of W_i moves by ``dt * (r_dot_i theta_i (n1 e_j - alpha2 s_j) - k3 W_ij)``.
    """
    r_dot = np.asarray(r_dot, dtype=float)
    drive = n1 * np.asarray(e, dtype=float) - alpha2 * np.asarray(s, dtype=float)
    for i, net in enumerate(est.nets):
        th = activations(net, r)
        net.weights += dt * (r_dot[i] * np.outer(drive, th) - k3 * net.weights)
    clip_weights(est)
    return est


def online_update_pid(est, r, r_dot, e, s, n2, n3, dt):
    """One Euler step of the RBF+PID weight law (no decay term), in place."""
    r_dot = np.asarray(r_dot, dtype=float)
    drive = n2 * np.asarray(e, dtype=float) + n3 * np.asarray(s, dtype=float)
    for i, net in enumerate(est.nets):
        if r_dot[i] == 0.0:
            continue
        th = activations(net, r)
        net.weights += dt * r_dot[i] * np.outer(drive, th)
    clip_weights(est)
    return est
