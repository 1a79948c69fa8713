import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from planecast.geometry import Camera, Intrinsics, RigidTransform


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    return Rotation.random(random_state=np.random.RandomState(rng.integers(2**31))).as_matrix()


def random_camera(rng: np.random.Generator, width=48, height=40,
                  depth_range=(5.0, 40.0)) -> Camera:
    intr = Intrinsics(
        fx=float(rng.uniform(40, 120)),
        fy=float(rng.uniform(40, 120)),
        cx=float(rng.uniform(width * 0.4, width * 0.6)),
        cy=float(rng.uniform(height * 0.4, height * 0.6)),
        width=width,
        height=height,
    )
    pose = RigidTransform(random_rotation(rng), rng.uniform(-2, 2, size=3))
    return Camera(intr, pose, depth_range)


def simple_intrinsics(fx=100.0, fy=100.0, cx=32.0, cy=32.0, width=64, height=64):
    return Intrinsics(fx=fx, fy=fy, cx=cx, cy=cy, width=width, height=height)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
