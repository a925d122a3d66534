import numpy as np
import pytest

from servobench import rbf
from servobench.dataset import generate_dataset
from servobench.world import CameraPose, RobotModel, load_world

UR5_DH = np.array(
    [
        [0.0, 0.089159, np.pi / 2, 0.0],
        [-0.425, 0.0, 0.0, 0.0],
        [-0.39225, 0.0, 0.0, 0.0],
        [0.0, 0.10915, np.pi / 2, 0.0],
        [0.0, 0.09465, -np.pi / 2, 0.0],
        [0.0, 0.0823, 0.0, 0.0],
    ]
)


@pytest.fixture(scope="session")
def world():
    return load_world()


@pytest.fixture(scope="session")
def wide_model():
    lim = np.tile([-np.pi, np.pi], (6, 1))
    return RobotModel(dh=UR5_DH.copy(), joint_limits=lim, max_joint_speed=1.0)


@pytest.fixture(scope="session")
def identity_pose():
    return CameraPose(rotation=np.eye(3), translation=np.zeros(3))


@pytest.fixture(scope="session")
def small_model(world):
    """Quick RBF model for closed-loop unit tests (not accuracy tests)."""
    ds = generate_dataset(world, 4000, seed=3)
    trip = ds.triples()
    cfg = rbf.TrainConfig(neurons_per_net=(32,) * 6, epochs=150, seed=0)
    est = rbf.offline_train(trip, cfg, dt=world.sensor.dt)
    est.metadata["reference_weights"] = [w.tolist() for w in rbf.reference_weights(est, trip, dt=world.sensor.dt)]
    return est


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
