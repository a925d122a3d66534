"""Uncalibrated eye-to-hand visual servoing benchmark.

Simulated UR5 with a fixed camera, an RBF network Jacobian estimator, an
adaptive-exponent terminal sliding mode controller and the baselines it is
compared against.
"""
from .world import World, load_world
from .rbf import RbfJacobianEstimator, TrainConfig, offline_train
from .ftsm import FtsmParams
from .harness import ExperimentSpec, RunRecord, canned_specs, compare, run_estimator_bench, run_servo

__version__ = "0.1.0"

__all__ = [
    "World",
    "load_world",
    "RbfJacobianEstimator",
    "TrainConfig",
    "offline_train",
    "FtsmParams",
    "ExperimentSpec",
    "RunRecord",
    "canned_specs",
    "compare",
    "run_estimator_bench",
    "run_servo",
]
