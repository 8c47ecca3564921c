"""Time-stepped dispatch mission for one UAV aerial base station.

The UAV leaves standby on an outage report, flies to the reported area,
searches for ground users, approaches a detected user to a stand-off hover
point, serves it, re-aligns beams when CSI degrades, and returns to base when
the battery can only just cover the trip home.

``step`` is a pure function: the random source travels inside ``UavStatus`` as
a bit-generator state, so ``(scenario, seed)`` replays exactly.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import bisect

from . import channel as ch
from .geometry import GeometryError, UavPose, downtilt_for_standoff
from .multibeam import Assignment, Scene, make_link, sinr_matrix


class DispatchState(str, enum.Enum):
    STANDBY = "Standby"
    EN_ROUTE = "EnRoute"
    SEARCHING = "Searching"
    APPROACHING = "Approaching"
    SERVING = "Serving"
    ADJUSTING = "Adjusting"
    RETURNING = "Returning"
    LANDED = "Landed"


S = DispatchState
TRANSITIONS = {
    S.STANDBY: {S.EN_ROUTE},
    S.EN_ROUTE: {S.SEARCHING, S.RETURNING},
    S.SEARCHING: {S.APPROACHING, S.RETURNING},
    S.APPROACHING: {S.SERVING, S.RETURNING},
    S.SERVING: {S.ADJUSTING, S.RETURNING},
    S.ADJUSTING: {S.SERVING, S.RETURNING},
    S.RETURNING: {S.LANDED},
    S.LANDED: set(),
}
AIRBORNE = {S.EN_ROUTE, S.SEARCHING, S.APPROACHING, S.SERVING, S.ADJUSTING, S.RETURNING}


class EventKind(str, enum.Enum):
    OUTAGE_REPORT = "OutageReport"
    GU_DETECTED = "GuDetected"
    CSI_DEGRADED = "CsiDegraded"
    BATTERY_LOW = "BatteryLow"
    SERVICE_RESTORED = "ServiceRestored"
    WIND_GUST = "WindGust"


@dataclass(frozen=True)
class MissionEvent:
    t: float
    kind: EventKind
    area_center: Optional[Tuple[float, float]] = None
    area_radius_m: Optional[float] = None
    ue_id: Optional[str] = None
    position: Optional[Tuple[float, float]] = None
    link_id: Optional[str] = None
    db: Optional[float] = None
    speed_mps: Optional[float] = None

    def label(self) -> str:
        k = self.kind.value
        if self.kind is EventKind.OUTAGE_REPORT:
            x, y = self.area_center
            return f"{k}({x:.1f} {y:.1f} r={self.area_radius_m:.1f})"
        if self.kind is EventKind.GU_DETECTED:
            return f"{k}({self.ue_id})"
        if self.kind is EventKind.CSI_DEGRADED:
            return f"{k}({self.link_id or '-'} {self.db or 0.0:.1f}dB)"
        if self.kind is EventKind.WIND_GUST:
            return f"{k}({self.speed_mps:.1f}m/s)"
        return k


@dataclass(frozen=True)
class AcousticModel:
    level_at_1m_db: float = 88.0
    spreading_db_per_decade: float = 20.0
    excess_db_per_m: float = 2.0 / 9.0

    def __post_init__(self):
        if self.spreading_db_per_decade < 0 or self.excess_db_per_m < 0:
            raise ValueError("acoustic attenuation terms must be >= 0")
        if self.spreading_db_per_decade == 0 and self.excess_db_per_m == 0:
            raise ValueError("level must decrease with distance")

    @classmethod
    def fit(cls, near: Tuple[float, float], far: Tuple[float, float],
            spreading_db_per_decade: float = 20.0) -> "AcousticModel":
        """Two-point fit with fixed spreading; ``near``/``far`` are (distance m, level dB)."""
        (d1, l1), (d2, l2) = near, far
        excess = ((l1 - l2) - spreading_db_per_decade * math.log10(d2 / d1)) / (d2 - d1)
        level_1m = l1 + spreading_db_per_decade * math.log10(d1) + excess * (d1 - 1.0)
        return cls(level_1m, spreading_db_per_decade, excess)


def acoustic_level(model: AcousticModel, d_m: float) -> float:
    if not d_m >= 1.0:
        raise ValueError("acoustic model is referenced at 1 m; d must be >= 1 m")
    return (model.level_at_1m_db - model.spreading_db_per_decade * math.log10(d_m)
            - model.excess_db_per_m * (d_m - 1.0))


def min_standoff(model: AcousticModel, threshold_db: float, tol_m: float = 1e-4) -> float:
    """Smallest distance (m) at which the hover noise is at or below ``threshold_db``."""
    if threshold_db >= model.level_at_1m_db:
        return 1.0
    hi = 2.0
    while acoustic_level(model, hi) > threshold_db:
        hi *= 2.0
    root = bisect(lambda d: acoustic_level(model, d) - threshold_db, 1.0, hi, xtol=tol_m)
    # keep the returned distance on the compliant side of the threshold
    while acoustic_level(model, root) > threshold_db:
        root += tol_m
    return root


@dataclass(frozen=True)
class MissionConfig:
    dt_s: float = 0.1
    base: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    cruise_speed_mps: float = 10.0
    serve_height_m: float = 35.0
    standoff_m: float = 22.0
    sensing_radius_m: float = 100.0
    # 20 minute endurance at cruise, 25 minutes hovering
    cruise_drain_per_s: float = 1.0 / 1200.0
    hover_drain_per_s: float = 1.0 / 1500.0
    initial_battery: float = 1.0
    low_battery_fraction: float = 0.15
    return_margin: float = 1.2
    realign_latency_s: float = 0.01
    drift_sigma_mps: float = 0.5
    altitude_sigma_mps: float = 0.1
    drift_box_m: float = 2.0
    altitude_box_m: float = 0.5
    wind_doubling_mps: float = 6.5
    acoustic: AcousticModel = AcousticModel()
    acoustic_threshold_db: float = 85.0
    standoff_shrink: float = 0.8


@dataclass(frozen=True)
class UavStatus:
    t: float
    position: Tuple[float, float, float]
    state: DispatchState = S.STANDBY
    battery_fraction: float = 1.0
    velocity_mps: float = 0.0
    heading_deg: float = 0.0
    downtilt_deg: float = 45.0
    rng_state: Optional[dict] = None
    area_center: Optional[Tuple[float, float]] = None
    area_radius_m: float = 0.0
    target_ue: Optional[str] = None
    setpoint: Optional[Tuple[float, float, float]] = None
    standoff_m: Optional[float] = None
    wind_mps: float = 0.0
    realign_until: Optional[float] = None

    @property
    def pose(self) -> UavPose:
        return UavPose(self.position, self.heading_deg, self.downtilt_deg)


@dataclass
class StepResult:
    status: UavStatus
    events: List[MissionEvent] = field(default_factory=list)
    rejected: List[Tuple[MissionEvent, str]] = field(default_factory=list)
    transitions: List[Tuple[DispatchState, DispatchState]] = field(default_factory=list)

    def _hop(self, before: DispatchState, after: DispatchState):
        if before is after:
            return
        if after not in TRANSITIONS[before]:
            raise RuntimeError(f"illegal transition {before.value} -> {after.value}")
        self.transitions.append((before, after))


def initial_status(config: MissionConfig, seed: int) -> UavStatus:
    rng = np.random.Generator(np.random.PCG64(seed))
    return UavStatus(t=0.0, position=tuple(config.base), battery_fraction=config.initial_battery,
                     rng_state=rng.bit_generator.state)


def _rng(status: UavStatus) -> np.random.Generator:
    bg = np.random.PCG64(0)  # placeholder seed, state restored below
    bg.state = status.rng_state
    return np.random.Generator(bg)


def _dist(a, b) -> float:
    return math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)))


def _hdist(a, b) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def _move_toward(pos, target, speed, dt):
    d = _dist(pos, target)
    step = speed * dt
    if d <= step:
        return tuple(float(v) for v in target), d
    f = step / d
    return tuple(p + f * (q - p) for p, q in zip(pos, target)), step


def return_reserve(status: UavStatus, config: MissionConfig) -> float:
    """Battery fraction needed to fly home, with margin."""
    t_home = _dist(status.position, config.base) / config.cruise_speed_mps
    return config.return_margin * (t_home + config.dt_s) * config.cruise_drain_per_s


def drift_sigma(config: MissionConfig, wind_mps: float) -> float:
    return config.drift_sigma_mps * (1.0 + wind_mps / config.wind_doubling_mps)


def _reflect(x, lo, hi):
    width = hi - lo
    if width <= 0:
        return lo
    y = (x - lo) % (2 * width)
    return lo + (y if y <= width else 2 * width - y)


def hover_drift(status: UavStatus, dt: float, rng: np.random.Generator,
                config: MissionConfig = MissionConfig()) -> Tuple[float, float, float]:
    """Random-walk displacement around the hover set-point, reflected at the box."""
    sp = status.setpoint or status.position
    sig_h = drift_sigma(config, status.wind_mps) * math.sqrt(dt)
    sig_v = config.altitude_sigma_mps * math.sqrt(dt)
    dx, dy, dz = rng.standard_normal(3)
    x, y, z = status.position
    b, bz = config.drift_box_m, config.altitude_box_m
    return (_reflect(x + sig_h * dx, sp[0] - b, sp[0] + b),
            _reflect(y + sig_h * dy, sp[1] - b, sp[1] + b),
            _reflect(z + sig_v * dz, sp[2] - bz, sp[2] + bz))


def _serving_pose(pos, ue_xy, config: MissionConfig) -> Tuple[float, float]:
    """Heading toward the user and downtilt that centres the beam on it."""
    heading = math.degrees(math.atan2(ue_xy[1] - pos[1], ue_xy[0] - pos[0]))
    tilt = downtilt_for_standoff(pos[2], max(_hdist(pos, ue_xy), 1e-6))
    return heading, tilt


def _setpoint(status: UavStatus, ue_xy, standoff, config: MissionConfig):
    x, y = status.position[:2]
    vx, vy = x - ue_xy[0], y - ue_xy[1]
    n = math.hypot(vx, vy)
    if n < 1e-9:
        vx, vy, n = -1.0, 0.0, 1.0
    h = config.serve_height_m
    return (ue_xy[0] + standoff * vx / n, ue_xy[1] + standoff * vy / n, h)


def _min_horizontal_standoff(config: MissionConfig) -> float:
    """Set-point distance that keeps the whole hover-drift box outside the
    acoustic stand-off sphere around the user."""
    s = min_standoff(config.acoustic, config.acoustic_threshold_db)
    h_low = max(0.0, config.serve_height_m - config.altitude_box_m)
    if s <= h_low:
        return 0.0
    return math.sqrt(s * s - h_low * h_low) + config.drift_box_m * math.sqrt(2.0)


def link_snr_db(scene: Scene, pose: UavPose, ue_id: str) -> float:
    """Best isolated SNR from any UAV module to any module of the user."""
    sc = replace(scene, uav=pose)
    ue = sc.ue(ue_id)
    best = -math.inf
    for um in sc.uav_mounts:
        for em in ue.mounts:
            try:
                link = make_link(sc, um.id, ue_id, em.id, sc.radio.channels[0])
            except GeometryError:
                continue
            best = max(best, sinr_matrix(sc, Assignment([link])).links[0].snr_db)
    return best


def can_serve(status: UavStatus, scene: Scene, config: MissionConfig) -> bool:
    ue = scene.ue(status.target_ue)
    slant = _dist(status.position, ue.position)
    if slant < min_standoff(config.acoustic, config.acoustic_threshold_db):
        return False
    if status.position[2] <= 0:
        return False
    return link_snr_db(scene, status.pose, ue.id) >= ch.MIN_SNR_DB


def _accept(status: UavStatus, ev: MissionEvent, scene: Scene, config: MissionConfig):
    """Apply one input event. Returns (status, reason-if-rejected)."""
    st = status.state
    if ev.kind is EventKind.OUTAGE_REPORT:
        if st is not S.STANDBY:
            return status, f"outage report while {st.value}"
        if ev.area_center is None:
            return status, "outage report without area"
        cx, cy = ev.area_center
        return replace(status, state=S.EN_ROUTE, area_center=(cx, cy),
                       area_radius_m=ev.area_radius_m or 0.0), None
    if ev.kind is EventKind.GU_DETECTED:
        if st in (S.APPROACHING, S.SERVING, S.ADJUSTING):
            return status, None
        if st is not S.SEARCHING:
            return status, f"ground user reported while {st.value}"
        try:
            ue = scene.ue(ev.ue_id)
        except KeyError:
            return status, f"unknown ground user {ev.ue_id}"
        return _start_approach(status, ue.id, ue.position_xy, config), None
    if ev.kind is EventKind.CSI_DEGRADED:
        if st not in (S.SERVING, S.ADJUSTING):
            return status, f"CSI report while {st.value}"
        return replace(status, state=S.ADJUSTING,
                       realign_until=status.t + config.realign_latency_s), None
    if ev.kind is EventKind.BATTERY_LOW:
        if st not in AIRBORNE:
            return status, f"battery low while {st.value}"
        if st is S.RETURNING:
            return status, None
        return replace(status, state=S.RETURNING), None
    if ev.kind is EventKind.WIND_GUST:
        if ev.speed_mps is None or ev.speed_mps < 0:
            return status, "wind gust without a valid speed"
        return replace(status, wind_mps=ev.speed_mps), None
    return status, f"{ev.kind.value} is an output-only event"


def _start_approach(status, ue_id, ue_xy, config):
    standoff = max(config.standoff_m, _min_horizontal_standoff(config))
    sp = _setpoint(status, ue_xy, standoff, config)
    return replace(status, state=S.APPROACHING, target_ue=ue_id, setpoint=sp, standoff_m=standoff)


def step(status: UavStatus, events: Sequence[MissionEvent], dt: float, scene: Scene,
         config: MissionConfig = MissionConfig()) -> StepResult:
    """Advance the mission by ``dt`` seconds after applying ``events``."""
    if not 0 < dt <= 1.0:
        raise ValueError("dt must be in (0, 1] s")
    out = StepResult(status)
    for ev in events:
        new, reason = _accept(out.status, ev, scene, config)
        if reason is not None:
            out.rejected.append((ev, reason))
        else:
            out._hop(out.status.state, new.state)
            out.status = new
    s = out.status
    rng = _rng(s)
    t = s.t + dt
    pos = s.position
    moved = 0.0
    emitted = out.events

    if s.state is S.EN_ROUTE:
        cx, cy = s.area_center
        pos, moved = _move_toward(pos, (cx, cy, config.serve_height_m), config.cruise_speed_mps, dt)
        if _hdist(pos, (cx, cy)) <= max(s.area_radius_m, 1e-6):
            s = replace(s, state=S.SEARCHING)
    elif s.state is S.SEARCHING:
        cx, cy = s.area_center
        pos, moved = _move_toward(pos, (cx, cy, config.serve_height_m), config.cruise_speed_mps, dt)
        for ue in scene.ues:
            d = _hdist(pos, ue.position_xy)
            if d > config.sensing_radius_m:
                continue
            p = min(1.0, max(0.0, 1.0 - d / config.sensing_radius_m))
            if rng.random() < p:
                ev = MissionEvent(t, EventKind.GU_DETECTED, ue_id=ue.id, position=ue.position_xy)
                emitted.append(ev)
                s = _start_approach(replace(s, position=pos), ue.id, ue.position_xy, config)
                break
    elif s.state is S.APPROACHING:
        pos, moved = _move_toward(pos, s.setpoint, config.cruise_speed_mps, dt)
        if pos == tuple(s.setpoint):
            ue_xy = scene.ue(s.target_ue).position_xy
            heading, tilt = _serving_pose(pos, ue_xy, config)
            s = replace(s, position=pos, heading_deg=heading, downtilt_deg=tilt)
            if can_serve(s, scene, config):
                s = replace(s, state=S.SERVING)
                emitted.append(MissionEvent(t, EventKind.SERVICE_RESTORED, ue_id=s.target_ue))
            else:
                # link budget not closed: creep closer, never inside the acoustic limit
                shorter = max(s.standoff_m * config.standoff_shrink, _min_horizontal_standoff(config))
                if shorter < s.standoff_m:
                    s = replace(s, standoff_m=shorter, setpoint=_setpoint(s, ue_xy, shorter, config))
    elif s.state in (S.SERVING, S.ADJUSTING):
        pos = hover_drift(replace(s, position=pos), dt, rng, config)
        if s.state is S.ADJUSTING and t >= s.realign_until:
            s = replace(s, state=S.SERVING, realign_until=None)
            emitted.append(MissionEvent(t, EventKind.SERVICE_RESTORED, ue_id=s.target_ue))
    elif s.state is S.RETURNING:
        pos, moved = _move_toward(pos, config.base, config.cruise_speed_mps, dt)
        if pos == tuple(config.base):
            s = replace(s, state=S.LANDED)

    out._hop(out.status.state, s.state)
    battery = s.battery_fraction
    if status.state in AIRBORNE or s.state in AIRBORNE:
        rate = config.cruise_drain_per_s if moved > 0 else config.hover_drain_per_s
        battery = max(0.0, battery - rate * dt)
    s = replace(s, t=t, position=pos, battery_fraction=battery,
                velocity_mps=moved / dt, rng_state=rng.bit_generator.state)

    if s.state in AIRBORNE and s.state is not S.RETURNING:
        if s.battery_fraction - return_reserve(s, config) <= config.low_battery_fraction:
            emitted.append(MissionEvent(t, EventKind.BATTERY_LOW))
            out._hop(s.state, S.RETURNING)
            s = replace(s, state=S.RETURNING)
    out.status = s
    return out


@dataclass(frozen=True)
class LogRecord:
    t: float
    state: str
    x: float
    y: float
    z: float
    battery: float
    event: str

    def line(self) -> str:
        return (f"{self.t:.3f},{self.state},{self.x:.4f},{self.y:.4f},{self.z:.4f},"
                f"{self.battery:.6f},{self.event}")


LOG_HEADER = "t,state,x,y,z,battery,event"


@dataclass
class MissionResult:
    records: List[LogRecord]
    final: UavStatus
    states: List[DispatchState]

    def lines(self) -> List[str]:
        return [LOG_HEADER] + [r.line() for r in self.records]


def run_mission(scene: Scene, script: Sequence[MissionEvent], seed: int,
                config: MissionConfig = MissionConfig(), max_time_s: float = 1800.0,
                on_step=None) -> MissionResult:
    """Run scripted events until landing or ``max_time_s``.

    Script events are delivered on the first step whose start time is at or
    after their timestamp.
    """
    status = initial_status(config, seed)
    pending = sorted(script, key=lambda e: e.t)
    records: List[LogRecord] = []
    states = [status.state]
    i = 0
    n_steps = int(round(max_time_s / config.dt_s))
    for _ in range(n_steps):
        batch = []
        while i < len(pending) and pending[i].t <= status.t + 1e-9:
            batch.append(pending[i])
            i += 1
        res = step(status, batch, config.dt_s, scene, config)
        labels = [e.label() for e in batch if all(e is not r[0] for r in res.rejected)]
        labels += [f"rejected:{e.label()}" for e, _ in res.rejected]
        labels += [e.label() for e in res.events]
        status = res.status
        states.append(status.state)
        x, y, z = status.position
        records.append(LogRecord(status.t, status.state.value, x, y, z,
                                 status.battery_fraction, ";".join(labels)))
        if on_step is not None:
            on_step(res)
        if status.state is S.LANDED:
            break
    return MissionResult(records, status, states)
