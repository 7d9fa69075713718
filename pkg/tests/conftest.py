import numpy as np
import pytest

from dmpcollab.dmp import train_lwr
from dmpcollab.trajectories import synthetic_demo


@pytest.fixture(scope="session")
def demo():
    return synthetic_demo()


@pytest.fixture(scope="session")
def models(demo):
    return train_lwr(demo)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def rodrigues(rotvec):
    """Rotation matrix of a rotation vector, written out independently of
    the quaternion code."""
    angle = float(np.linalg.norm(rotvec))
    if angle < 1e-15:
        return np.eye(3)
    k = np.asarray(rotvec) / angle
    K = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * K @ K


def quat_to_matrix(Q):
    w, x, y, z = Q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])
