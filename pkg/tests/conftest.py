import math

import pytest

from uavabs.geometry import MountOrientation, UavPose, downtilt_for_standoff
from uavabs.multibeam import BfmMount, GroundUe, RadioConfig, Scene

UAV_OFFSETS = {"A": (0.12, 0.12, -0.05), "B": (0.12, -0.12, -0.05)}


def upright(offset=(0.0, 0.0, 0.0)):
    """Ground module lying flat, boresight to the sky."""
    return MountOrientation(180.0, -90.0, offset)


def uav_mounts(ids=("A", "B")):
    return tuple(BfmMount(i, MountOrientation(0.0, None, UAV_OFFSETS[i])) for i in ids)


def su_scene(h=35.0, d0=22.0, **radio):
    uav = UavPose((0.0, 0.0, h), 0.0, downtilt_for_standoff(h, d0))
    ue = GroundUe("ue1", (d0, 0.0), (BfmMount("u1", upright((0.0, 0.03, 0.0))),
                                     BfmMount("u2", upright((0.0, -0.03, 0.0)))))
    return Scene(uav, uav_mounts(), (ue,), radio=RadioConfig(**radio))


def mu_scene(ue2_xy, h=35.0, d0=22.0):
    uav = UavPose((0.0, 0.0, h), 0.0, downtilt_for_standoff(h, d0))
    ues = (GroundUe("ue1", (d0, -3.0), (BfmMount("u1", upright()),)),
           GroundUe("ue2", tuple(ue2_xy), (BfmMount("u1", upright()),)))
    return Scene(uav, uav_mounts(), ues)


@pytest.fixture
def su():
    return su_scene()


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
