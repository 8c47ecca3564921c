"""Coverage and pointing geometry for a hovering UAV over a flat ground plane.

World frame: x, y on the ground (z = 0), z up. Headings and mount yaws are
measured counter-clockwise from +x. A mount's boresight points along its yaw
and is tilted below the horizon by its downtilt.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .array_engine import SteeringCommand

Vec3 = Tuple[float, float, float]


class GeometryError(ValueError):
    pass


class UnboundedFootprint(GeometryError):
    """A beam edge is parallel to or above the ground."""


class NotServable(GeometryError):
    """Target lies behind the array plane."""


@dataclass(frozen=True)
class UavPose:
    position: Vec3
    heading_deg: float = 0.0
    downtilt_deg: float = 45.0

    def __post_init__(self):
        if not self.position[2] > 0:
            raise GeometryError("UAV height must be > 0")
        if not 0 < self.downtilt_deg <= 90:
            raise GeometryError("downtilt must be in (0, 90] deg")

    @property
    def height_m(self) -> float:
        return self.position[2]

    def moved(self, dx=0.0, dy=0.0, dz=0.0) -> "UavPose":
        x, y, z = self.position
        return UavPose((x + dx, y + dy, z + dz), self.heading_deg, self.downtilt_deg)


@dataclass(frozen=True)
class MountOrientation:
    """Orientation of a module relative to the body it is fixed to.

    ``downtilt_deg=None`` inherits the platform downtilt; negative values tilt
    the boresight above the horizon (ground terminals looking up).
    """

    yaw_deg: float = 0.0
    downtilt_deg: Optional[float] = None
    offset_m: Vec3 = (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class CoverageFootprint:
    near_m: float
    boresight_m: float
    far_m: float

    @property
    def span_m(self) -> float:
        return self.far_m - self.near_m


@dataclass(frozen=True)
class MUGeometry:
    d0_m: float
    d1_m: float = 0.0
    d2_m: float = 0.0
    beta_deg: float = field(default=0.0)


def _edge_angles(alpha_deg, hpbw_e_deg):
    if not 0 < alpha_deg <= 90:
        raise GeometryError(f"downtilt {alpha_deg} outside (0, 90]")
    if not hpbw_e_deg > 0:
        raise GeometryError("HPBW_E must be > 0")
    far = 90.0 - alpha_deg + hpbw_e_deg / 2
    near = 90.0 - alpha_deg - hpbw_e_deg / 2
    if far >= 90.0:
        raise UnboundedFootprint(
            f"far beam edge at {far:.3f} deg from nadir never meets the ground")
    if near <= -90.0:
        raise UnboundedFootprint("near beam edge points above the horizon")
    return near, far


def coverage_span(h_m: float, alpha_deg: float, hpbw_e_deg: float) -> float:
    """Horizontal coverage distance L3 - L1 of a downtilted beam."""
    near, far = _edge_angles(alpha_deg, hpbw_e_deg)
    return h_m * math.tan(math.radians(far)) - h_m * math.tan(math.radians(near))


def footprint(pose: UavPose, hpbw_e_deg: float) -> CoverageFootprint:
    """Ground distances L1, L2, L3 measured from the UAV nadir along the boresight azimuth.

    L1 is clamped to 0 once the near beam edge passes behind nadir; only then
    does ``far_m - near_m`` fall short of :func:`coverage_span`.
    """
    h = pose.height_m
    near, far = _edge_angles(pose.downtilt_deg, hpbw_e_deg)
    l1 = max(0.0, h * math.tan(math.radians(near)))
    l2 = h * math.tan(math.radians(90.0 - pose.downtilt_deg))
    l3 = h * math.tan(math.radians(far))
    return CoverageFootprint(l1, l2, l3)


def slant_distance(pose_or_pos, ue_ground_xy: Sequence[float]) -> float:
    x, y, z = pose_or_pos.position if isinstance(pose_or_pos, UavPose) else pose_or_pos
    return math.sqrt((x - ue_ground_xy[0]) ** 2 + (y - ue_ground_xy[1]) ** 2 + z ** 2)


def mount_basis(heading_deg: float, mount: MountOrientation, default_downtilt_deg: float = 0.0):
    """Rows are the array-local x (boresight), y (azimuth axis), z axes in world coordinates."""
    tilt = default_downtilt_deg if mount.downtilt_deg is None else mount.downtilt_deg
    psi = math.radians(heading_deg + mount.yaw_deg)
    a = math.radians(tilt)
    ex = (math.cos(a) * math.cos(psi), math.cos(a) * math.sin(psi), -math.sin(a))
    ey = (-math.sin(psi), math.cos(psi), 0.0)
    ez = (math.sin(a) * math.cos(psi), math.sin(a) * math.sin(psi), math.cos(a))
    return np.array([ex, ey, ez])


def mount_position(body_position: Vec3, heading_deg: float, mount: MountOrientation) -> np.ndarray:
    c, s = math.cos(math.radians(heading_deg)), math.sin(math.radians(heading_deg))
    ox, oy, oz = mount.offset_m
    return np.array(body_position, dtype=float) + np.array([c * ox - s * oy, s * ox + c * oy, oz])


def local_angles(basis: np.ndarray, origin, target) -> Tuple[float, float, np.ndarray]:
    """Azimuth/elevation (deg) of ``target`` seen from ``origin`` in the array frame."""
    v = basis @ (np.asarray(target, float) - np.asarray(origin, float))
    r = float(np.linalg.norm(v))
    if r == 0:
        raise GeometryError("target coincides with the array")
    az = math.degrees(math.atan2(v[1], v[0]))
    el = math.degrees(math.asin(max(-1.0, min(1.0, v[2] / r))))
    return az, el, v


def steering_for(basis: np.ndarray, origin, target) -> SteeringCommand:
    az, el, v = local_angles(basis, origin, target)
    if v[0] <= 0:
        raise NotServable("target is behind the array plane")
    return SteeringCommand(az, el)


def required_steering(pose: UavPose, module_mount: MountOrientation,
                      ue_ground_xy: Sequence[float]) -> SteeringCommand:
    """Steering that points the mount's beam at a ground UE."""
    basis = mount_basis(pose.heading_deg, module_mount, pose.downtilt_deg)
    origin = mount_position(pose.position, pose.heading_deg, module_mount)
    return steering_for(basis, origin, (ue_ground_xy[0], ue_ground_xy[1], 0.0))


def steered_ray(pose: UavPose, module_mount: MountOrientation, steer: SteeringCommand):
    """(origin, unit direction) of the steered beam in world coordinates."""
    basis = mount_basis(pose.heading_deg, module_mount, pose.downtilt_deg)
    az, el = math.radians(steer.azimuth_deg), math.radians(steer.elevation_deg)
    local = np.array([math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)])
    return mount_position(pose.position, pose.heading_deg, module_mount), basis.T @ local


def ground_hit(origin, direction) -> Optional[np.ndarray]:
    """Intersection of a ray with z = 0, or None if it never reaches the ground."""
    if direction[2] >= 0:
        return None
    t = -origin[2] / direction[2]
    return np.asarray(origin) + t * np.asarray(direction)


def intersection_angle_beta(uav, ue_a: Sequence[float], ue_b: Sequence[float]) -> float:
    """Angle (deg) between the ground projections of the beams toward two UEs."""
    x, y = (uav.position if isinstance(uav, UavPose) else uav)[:2]
    va = np.array([ue_a[0] - x, ue_a[1] - y])
    vb = np.array([ue_b[0] - x, ue_b[1] - y])
    na, nb = np.linalg.norm(va), np.linalg.norm(vb)
    if na < 1e-9 or nb < 1e-9:
        raise GeometryError("UE at UAV nadir: beam projection direction undefined")
    c = float(np.dot(va, vb) / (na * nb))
    return math.degrees(math.acos(max(-1.0, min(1.0, c))))


def downtilt_for_standoff(h_m: float, d0_m: float) -> float:
    """Downtilt that puts the boresight on the ground at horizontal distance d0."""
    return math.degrees(math.atan2(h_m, d0_m))
