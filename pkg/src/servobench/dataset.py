"""Random-motion datasets for offline training.

A dataset is a stack of episodes. Each episode is a smooth joint trajectory
(PCHIP spline through random waypoints inside the joint limits) sampled at
the servo period. On disk it is a CSV with columns ``t, r1..r6, x1..x3``;
``t`` restarts at zero on each new episode.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator

from . import kernels
from .world import World

MIN_SAMPLES = 100
CSV_HEADER = ["t"] + [f"r{i}" for i in range(1, 7)] + ["x1", "x2", "x3"]


@dataclass
class Dataset:
    t: np.ndarray
    r: np.ndarray
    x: np.ndarray

    def __len__(self):
        return len(self.t)

    def episode_starts(self):
        starts = np.flatnonzero(np.diff(self.t) <= 0) + 1
        return np.concatenate([[0], starts])

    def triples(self):
        """``(r, dr, dx)`` arrays over consecutive samples of the same episode."""
        valid = np.ones(len(self.t) - 1, dtype=bool)
        valid[self.episode_starts()[1:] - 1] = False
        r = self.r[:-1][valid]
        dr = np.diff(self.r, axis=0)[valid]
        dx = np.diff(self.x, axis=0)[valid]
        return r, dr, dx

    def split_episodes(self, holdout_fraction):
        """Split into (train, holdout) along episode boundaries."""
        starts = list(self.episode_starts()) + [len(self.t)]
        n_ep = len(starts) - 1
        n_hold = max(1, int(round(n_ep * holdout_fraction))) if n_ep > 1 else 0
        cut = starts[n_ep - n_hold]
        return self.subset(slice(0, cut)), self.subset(slice(cut, len(self.t)))

    def subset(self, sl):
        return Dataset(self.t[sl].copy(), self.r[sl].copy(), self.x[sl].copy())

    def to_csv(self, path):
        path = Path(path)
        try:
            with path.open("w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(CSV_HEADER)
                for k in range(len(self.t)):
                    w.writerow([repr(float(v)) for v in (self.t[k], *self.r[k], *self.x[k])])
        except OSError as exc:
            raise OSError(f"cannot write dataset to {path}: {exc}") from exc

    @classmethod
    def from_csv(cls, path):
        arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if arr.shape[1] != len(CSV_HEADER):
            raise ValueError(f"{path}: expected {len(CSV_HEADER)} columns, found {arr.shape[1]}")
        return cls(arr[:, 0].copy(), arr[:, 1:7].copy(), arr[:, 7:10].copy())


def sense_batch(world: World, rs):
    """Noise-free feature positions for a batch of joint vectors."""
    p = kernels.dh_position_batch(world.model.dh, np.ascontiguousarray(rs, dtype=float))
    return (p - world.camera.translation) @ world.camera.rotation / world.feature_scale


def random_episode(world: World, n, rng, dt, waypoint_every=1.0, speed_fraction=0.3):
    """Smooth random joint path of ``n`` samples that respects limits and speed."""
    m = world.model
    lo, hi = m.lower, m.upper
    span = n * dt
    k = max(2, int(np.ceil(span / waypoint_every)) + 1)
    ts = np.linspace(0.0, (k - 1) * waypoint_every, k)
    # secant speed <= speed_fraction * vmax keeps the PCHIP slope (<= 3x secant) below vmax
    step = speed_fraction * m.max_joint_speed * waypoint_every
    pts = np.empty((k, 6))
    pts[0] = rng.uniform(lo, hi)
    for i in range(1, k):
        pts[i] = np.clip(pts[i - 1] + rng.uniform(-step, step, 6), lo, hi)
    t = np.arange(n) * dt
    r = PchipInterpolator(ts, pts, axis=0)(t)
    return t, np.clip(r, lo, hi)


def generate_dataset(world: World, n_samples: int, seed: int, episode_len: int = 200) -> Dataset:
    """Sample ``n_samples`` rows of random smooth joint motion and its features."""
    if n_samples < MIN_SAMPLES:
        raise ValueError(f"n_samples must be >= {MIN_SAMPLES}, got {n_samples}")
    rng = np.random.default_rng(seed)
    dt = world.sensor.dt
    ts, rs = [], []
    left = n_samples
    while left > 0:
        n = min(episode_len, left)
        if n < 2 and ts:
            # fold a trailing singleton into the previous episode
            t_prev, r_prev = ts[-1], rs[-1]
            t2, r2 = random_episode(world, len(t_prev) + n, rng, dt)
            ts[-1], rs[-1] = t2, r2
            break
        t, r = random_episode(world, n, rng, dt)
        ts.append(t)
        rs.append(r)
        left -= n
    t = np.concatenate(ts)
    r = np.concatenate(rs)
    return Dataset(t, r, sense_batch(world, r))
