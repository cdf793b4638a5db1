import numpy as np
import pytest

from silrefine.geom import CameraIntrinsics, UnitQuaternion
from silrefine.harness.corpus import box_mesh, default_vehicles, planar_square


@pytest.fixture
def K64():
    return CameraIntrinsics(80.0, 80.0, 32.0, 32.0, 64, 64)


@pytest.fixture
def K256():
    return CameraIntrinsics(320.0, 320.0, 128.0, 128.0, 256, 256)


@pytest.fixture(scope="session")
def vehicles():
    return [m for m, _ in default_vehicles()]


@pytest.fixture
def cube():
    return box_mesh(1.0, 1.0, 1.0, name="cube")


@pytest.fixture
def square():
    return planar_square(1.0)


def random_quaternion(rng):
    v = rng.normal(size=4)
    v /= np.linalg.norm(v)
    return UnitQuaternion(*v)


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE

    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
