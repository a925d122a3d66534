"""Synthetic eye-to-hand world: DH arm, fixed depth camera, joint stepping."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import kernels

DEFAULT_CONFIG = "ur5.json"


@dataclass(frozen=True)
class RobotModel:
    """Six-joint serial arm described by a standard DH table.

    ``dh`` rows are ``(a, d, alpha, theta_offset)``; ``joint_limits`` rows are
    ``(lo, hi)`` in radians.
    """

    dh: np.ndarray
    joint_limits: np.ndarray
    max_joint_speed: float

    def __post_init__(self):
        dh = np.asarray(self.dh, dtype=float)
        lim = np.asarray(self.joint_limits, dtype=float)
        if dh.shape != (6, 4):
            raise ValueError(f"DH table must be 6x4, got {dh.shape}")
        if lim.shape != (6, 2):
            raise ValueError(f"joint limits must be 6x2, got {lim.shape}")
        if not np.all(lim[:, 0] < lim[:, 1]):
            raise ValueError("joint limits must satisfy lo < hi")
        if not self.max_joint_speed > 0:
            raise ValueError("max_joint_speed must be positive")
        object.__setattr__(self, "dh", dh)
        object.__setattr__(self, "joint_limits", lim)
        object.__setattr__(self, "max_joint_speed", float(self.max_joint_speed))

    @property
    def lower(self):
        return self.joint_limits[:, 0]

    @property
    def upper(self):
        return self.joint_limits[:, 1]


@dataclass(frozen=True)
class CameraPose:
    """Camera extrinsics. Columns of ``rotation`` are the camera axes in world."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation, dtype=float).reshape(-1)
        if R.shape != (3, 3) or t.shape != (3,):
            raise ValueError("camera rotation must be 3x3 and translation a 3-vector")
        if np.max(np.abs(R.T @ R - np.eye(3))) > 1e-10:
            raise ValueError("camera rotation is not orthonormal")
        if np.linalg.det(R) < 0:
            raise ValueError("camera rotation must have det +1")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)


@dataclass
class JointState:
    r: np.ndarray
    r_dot: np.ndarray = field(default_factory=lambda: np.zeros(6))
    t: float = 0.0

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=float).copy()
        self.r_dot = np.asarray(self.r_dot, dtype=float).copy()


@dataclass(frozen=True)
class SensorConfig:
    noise_std: float = 0.0
    seed: int = 0
    dt: float = 0.02

    def __post_init__(self):
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if not self.dt > 0:
            raise ValueError("dt must be positive")


@dataclass(frozen=True)
class World:
    """Everything loaded from one world config file."""

    model: RobotModel
    camera: CameraPose
    home: np.ndarray
    sensor: SensorConfig = SensorConfig()
    feature_scale: float = 1.0
    name: str = "world"

    def metadata(self):
        return {
            "name": self.name,
            "dh": self.model.dh.tolist(),
            "limits": self.model.joint_limits.tolist(),
            "max_joint_speed": self.model.max_joint_speed,
            "camera": {
                "rotation": self.camera.rotation.tolist(),
                "translation": self.camera.translation.tolist(),
            },
            "home": self.home.tolist(),
            "feature_scale": self.feature_scale,
            "dt": self.sensor.dt,
            "noise_std": self.sensor.noise_std,
        }


def _check_finite(r, what="joint vector"):
    r = np.asarray(r, dtype=float)
    if r.shape != (6,):
        raise ValueError(f"{what} must have 6 entries, got shape {r.shape}")
    if not np.all(np.isfinite(r)):
        raise ValueError(f"{what} contains non-finite values")
    return r


def forward_kinematics(model: RobotModel, r) -> np.ndarray:
    """World-frame flange position for joint angles ``r``."""
    r = _check_finite(r)
    return kernels.dh_position(model.dh, r)


def camera_observe(pose: CameraPose, p_world, cfg: SensorConfig | None = None, rng=None):
    """Express ``p_world`` in the camera frame and add sensor noise.

    Without an explicit ``rng`` a fresh generator seeded from ``cfg.seed`` is
    used, so repeated calls with the same config return the same sample.
    Closed-loop runs pass their own per-run generator instead.
    """
    x = pose.rotation.T @ (np.asarray(p_world, dtype=float) - pose.translation)
    if cfg is not None and cfg.noise_std > 0:
        if rng is None:
            rng = np.random.default_rng(cfg.seed)
        x = x + rng.normal(0.0, cfg.noise_std, size=3)
    return x


def analytic_jacobian(model: RobotModel, pose: CameraPose, r, h: float = 1e-6) -> np.ndarray:
    """Central-difference 3x6 Jacobian of the noiseless camera observation."""
    r = _check_finite(r)
    return kernels.observed_jacobian(model.dh, pose.rotation, r, float(h))


def step(state: JointState, r_dot_cmd, model: RobotModel, dt: float) -> JointState:
    """Euler step with per-joint speed and position clamping."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    v = np.clip(np.asarray(r_dot_cmd, dtype=float), -model.max_joint_speed, model.max_joint_speed)
    r = np.clip(state.r + v * dt, model.lower, model.upper)
    return JointState(r=r, r_dot=v, t=state.t + dt)


def at_limit(r, model: RobotModel, tol: float = 1e-12) -> np.ndarray:
    """Boolean mask of joints sitting on a position limit."""
    r = np.asarray(r, dtype=float)
    return (r <= model.lower + tol) | (r >= model.upper - tol)


def load_world(path: str | Path | None = None) -> World:
    """Load a world JSON file; ``None`` loads the bundled UR5 setup."""
    if path is None:
        text = resources.files("servobench.data").joinpath(DEFAULT_CONFIG).read_text()
    else:
        text = Path(path).read_text()
    return world_from_dict(json.loads(text))


def world_from_dict(cfg: dict) -> World:
    model = RobotModel(
        dh=np.asarray(cfg["dh"], dtype=float),
        joint_limits=np.asarray(cfg["limits"], dtype=float),
        max_joint_speed=cfg.get("max_joint_speed", 1.0),
    )
    cam = cfg["camera"]
    camera = CameraPose(rotation=np.asarray(cam["rotation"]), translation=np.asarray(cam["translation"]))
    home = np.asarray(cfg.get("home", model.joint_limits.mean(axis=1)), dtype=float)
    sensor = SensorConfig(
        noise_std=cfg.get("noise_std", 0.0), seed=cfg.get("seed", 0), dt=cfg.get("dt", 0.02)
    )
    return World(
        model=model,
        camera=camera,
        home=home,
        sensor=sensor,
        feature_scale=float(cfg.get("feature_scale", 1.0)),
        name=cfg.get("name", "world"),
    )


def with_sensor(world: World, **changes) -> World:
    return replace(world, sensor=replace(world.sensor, **changes))
