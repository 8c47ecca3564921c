"""Multi-beam, multi-stream scene evaluation for distributed beamforming modules.

A scene is one hovering UAV carrying several beamforming modules (BFMs) and a
set of ground UEs, each with one or more BFMs. A link is a downlink stream from
one UAV BFM to one UE BFM on one WiGig channel, with both ends steered at each
other. Interference is summed as noise-like power.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import channel as ch
from .array_engine import ArrayGeometry, ElementModel, SteeringCommand, gain_toward
from .geometry import (
    GeometryError,
    MountOrientation,
    NotServable,
    UavPose,
    local_angles,
    mount_basis,
    mount_position,
    steering_for,
)

UAV_SEPARATION_WAVELENGTHS = 2.0
UAV_SEPARATION_WARN_WAVELENGTHS = 4.0
UE_SEPARATION_WAVELENGTHS = 1.5
PAYLOAD_BUDGET_G = 544.0  # about 1.2 lb
DEFAULT_ACI_REJECTION_DB = 30.0
EXHAUSTIVE_LIMIT = 6


@dataclass(frozen=True)
class BfmMount:
    id: str
    orientation: MountOrientation = MountOrientation()
    geom: ArrayGeometry = ArrayGeometry()
    model: ElementModel = ElementModel()
    weight_g: float = 1.0
    dims_mm: Tuple[float, float, float] = (25.0, 9.0, 2.0)


@dataclass(frozen=True)
class GroundUe:
    id: str
    position_xy: Tuple[float, float]
    mounts: Tuple[BfmMount, ...]
    heading_deg: float = 0.0

    @property
    def position(self) -> Tuple[float, float, float]:
        return (self.position_xy[0], self.position_xy[1], 0.0)


@dataclass(frozen=True)
class RadioConfig:
    tx_power_dbm: float = ch.DEFAULT_TX_POWER_DBM
    noise_figure_db: float = ch.DEFAULT_NOISE_FIGURE_DB
    bandwidth_hz: float = ch.DEFAULT_BANDWIDTH_HZ
    aci_rejection_db: float = DEFAULT_ACI_REJECTION_DB
    mac_efficiency: float = ch.DEFAULT_MAC_EFFICIENCY
    channels: Tuple[int, ...] = (1, 2, 3)


@dataclass(frozen=True)
class Scene:
    uav: UavPose
    uav_mounts: Tuple[BfmMount, ...]
    ues: Tuple[GroundUe, ...]
    channel_params: ch.ChannelParams = ch.ChannelParams()
    radio: RadioConfig = RadioConfig()
    payload_budget_g: float = PAYLOAD_BUDGET_G
    other_payload_g: float = 0.0

    def uav_mount(self, mount_id: str) -> BfmMount:
        for m in self.uav_mounts:
            if m.id == mount_id:
                return m
        raise KeyError(mount_id)

    def ue(self, ue_id: str) -> GroundUe:
        for u in self.ues:
            if u.id == ue_id:
                return u
        raise KeyError(ue_id)


@dataclass(frozen=True)
class Link:
    uav_bfm: str
    ue_id: str
    ue_bfm: str
    channel: int
    uav_steer: SteeringCommand
    ue_steer: SteeringCommand

    @property
    def link_id(self) -> str:
        return f"{self.uav_bfm}->{self.ue_id}/{self.ue_bfm}"


@dataclass
class Assignment:
    links: List[Link] = field(default_factory=list)
    diagnostic: str = ""


@dataclass
class LinkReport:
    link_id: str
    channel: int
    signal_dbm: float
    interference_dbm: float
    noise_dbm: float
    snr_db: float
    sinr_db: float
    phy_rate_bps: float
    mac_throughput_bps: float
    outage: bool = False


@dataclass
class SinrReport:
    links: List[LinkReport]

    @property
    def aggregate_bps(self) -> float:
        return sum(r.mac_throughput_bps for r in self.links)


@dataclass(frozen=True)
class Violation:
    rule: str
    entities: Tuple[str, ...]
    detail: str
    severity: str = "error"


# -- placement ----------------------------------------------------------------

def _edge_to_edge_m(pos_a, mount_a: BfmMount, pos_b, mount_b: BfmMount) -> float:
    # bounding half-length of each module along its longest side
    half = (max(mount_a.dims_mm) + max(mount_b.dims_mm)) / 2 / 1000.0
    return max(0.0, float(np.linalg.norm(np.asarray(pos_a) - np.asarray(pos_b))) - half)


def _separation_violations(owner, mounts, body_pos, heading, factor, warn_factor=None):
    out = []
    for a, b in itertools.combinations(mounts, 2):
        lam = max(a.geom.wavelength_m, b.geom.wavelength_m)
        gap = _edge_to_edge_m(mount_position(body_pos, heading, a.orientation), a,
                              mount_position(body_pos, heading, b.orientation), b)
        if gap < factor * lam:
            out.append(Violation(
                "separation", (owner, a.id, b.id),
                f"edge-to-edge {gap * 1000:.2f} mm < {factor}*lambda0 = {factor * lam * 1000:.2f} mm"))
        elif warn_factor is not None and gap < warn_factor * lam:
            out.append(Violation(
                "separation", (owner, a.id, b.id),
                f"edge-to-edge {gap * 1000:.2f} mm < {warn_factor}*lambda0", severity="warning"))
    return out


def validate_scene(scene: Scene, include_warnings: bool = False) -> List[Violation]:
    """Placement, separation and payload checks; empty list when the scene is valid."""
    v: List[Violation] = []
    if not scene.uav_mounts:
        v.append(Violation("mount_count", ("uav",), "UAV needs at least one BFM"))
    ids = [m.id for m in scene.uav_mounts]
    if len(set(ids)) != len(ids):
        v.append(Violation("unique_ids", ("uav",), "duplicate UAV BFM ids"))
    v += _separation_violations("uav", scene.uav_mounts, scene.uav.position,
                                scene.uav.heading_deg, UAV_SEPARATION_WAVELENGTHS,
                                UAV_SEPARATION_WARN_WAVELENGTHS)
    for ue in scene.ues:
        if not ue.mounts:
            v.append(Violation("mount_count", (ue.id,), "UE needs at least one BFM"))
        v += _separation_violations(ue.id, ue.mounts, ue.position, ue.heading_deg,
                                    UE_SEPARATION_WAVELENGTHS)
    ue_ids = [u.id for u in scene.ues]
    if len(set(ue_ids)) != len(ue_ids):
        v.append(Violation("unique_ids", ("ues",), "duplicate UE ids"))
    mass = sum(m.weight_g for m in scene.uav_mounts) + scene.other_payload_g
    if mass > scene.payload_budget_g:
        v.append(Violation("payload", ("uav",),
                           f"extra payload {mass:.1f} g exceeds budget {scene.payload_budget_g:.1f} g"))
    if not include_warnings:
        v = [x for x in v if x.severity == "error"]
    return v


# -- link evaluation ------------------------------------------------------------

def _uav_frame(scene: Scene, mount: BfmMount, uav: Optional[UavPose] = None):
    uav = uav or scene.uav
    basis = mount_basis(uav.heading_deg, mount.orientation, uav.downtilt_deg)
    return basis, mount_position(uav.position, uav.heading_deg, mount.orientation)


def _ue_frame(ue: GroundUe, mount: BfmMount):
    basis = mount_basis(ue.heading_deg, mount.orientation, 0.0)
    return basis, mount_position(ue.position, ue.heading_deg, mount.orientation)


def _ue_mount(ue: GroundUe, mount_id: str) -> BfmMount:
    for m in ue.mounts:
        if m.id == mount_id:
            return m
    raise KeyError(f"{ue.id}/{mount_id}")


def make_link(scene: Scene, uav_bfm: str, ue_id: str, ue_bfm: str, channel: int) -> Link:
    """Link with both ends steered at each other; raises NotServable."""
    um = scene.uav_mount(uav_bfm)
    ue = scene.ue(ue_id)
    em = _ue_mount(ue, ue_bfm)
    ub, uo = _uav_frame(scene, um)
    eb, eo = _ue_frame(ue, em)
    return Link(uav_bfm, ue_id, ue_bfm, channel,
                steering_for(ub, uo, eo), steering_for(eb, eo, uo))


def _gain(basis, origin, mount: BfmMount, steer, target) -> float:
    v = basis @ (np.asarray(target, float) - np.asarray(origin, float))
    return gain_toward(mount.geom, mount.model, steer, v)


@dataclass(frozen=True)
class _Ends:
    tx_basis: np.ndarray
    tx_origin: np.ndarray
    tx_mount: BfmMount
    rx_basis: np.ndarray
    rx_origin: np.ndarray
    rx_mount: BfmMount


def _ends(scene: Scene, link: Link, uav: Optional[UavPose] = None) -> _Ends:
    um = scene.uav_mount(link.uav_bfm)
    ue = scene.ue(link.ue_id)
    em = _ue_mount(ue, link.ue_bfm)
    tb, to = _uav_frame(scene, um, uav)
    rb, ro = _ue_frame(ue, em)
    return _Ends(tb, to, um, rb, ro, em)


def _received_dbm(scene: Scene, tx: _Ends, tx_link: Link, rx: _Ends, rx_link: Link, rng=None) -> float:
    """Power from tx_link's transmitter into rx_link's receiver (steered as assigned)."""
    g_tx = _gain(tx.tx_basis, tx.tx_origin, tx.tx_mount, tx_link.uav_steer, rx.rx_origin)
    g_rx = _gain(rx.rx_basis, rx.rx_origin, rx.rx_mount, rx_link.ue_steer, tx.tx_origin)
    d = float(np.linalg.norm(rx.rx_origin - tx.tx_origin))
    pl = ch.path_loss(scene.channel_params, max(d, 1.0),
                      ch.WIGIG_CENTERS_HZ[tx_link.channel], rng)
    p = scene.radio.tx_power_dbm + g_tx + g_rx - pl
    if tx_link.channel != rx_link.channel:
        p -= scene.radio.aci_rejection_db
    return p


def _dbm_sum(values) -> float:
    lin = sum(10.0 ** (x / 10.0) for x in values)
    return 10 * math.log10(lin) if lin > 0 else -math.inf


def _rate(scene: Scene, sinr_db: float) -> Tuple[float, float]:
    phy = ch.mcs_rate(sinr_db)
    return phy, ch.mac_throughput(phy, scene.radio.mac_efficiency)


def sinr_matrix(scene: Scene, assignment: Assignment, rng=None) -> SinrReport:
    """Per-link signal, interference, SINR and throughput for an assignment."""
    noise = ch.noise_dbm(scene.radio.bandwidth_hz, scene.radio.noise_figure_db)
    links = sorted(assignment.links, key=lambda l: l.link_id)
    ends = {}
    for l in links:
        try:
            ends[l.link_id] = _ends(scene, l)
        except (KeyError, GeometryError):
            ends[l.link_id] = None
    reports = []
    for victim in links:
        rx = ends[victim.link_id]
        if rx is None or victim.uav_steer is None or victim.ue_steer is None:
            reports.append(LinkReport(victim.link_id, victim.channel, -math.inf, -math.inf,
                                      noise, -math.inf, -math.inf, 0.0, 0.0, outage=True))
            continue
        sig = _received_dbm(scene, rx, victim, rx, victim, rng)
        interf = [_received_dbm(scene, ends[o.link_id], o, rx, victim, rng)
                  for o in links if o is not victim and ends[o.link_id] is not None]
        i_dbm = _dbm_sum(interf)
        snr_db = sig - noise
        sinr_db = sig - _dbm_sum([noise, i_dbm]) if interf else snr_db
        phy, mac = _rate(scene, sinr_db)
        reports.append(LinkReport(victim.link_id, victim.channel, sig, i_dbm, noise,
                                  snr_db, sinr_db, phy, mac, outage=phy == 0.0))
    return SinrReport(reports)


# -- assignment ---------------------------------------------------------------

@dataclass(frozen=True)
class Objective:
    """Lexicographic score of an assignment (larger is better)."""

    ues_served: int
    min_link_bps: float
    aggregate_bps: float

    def key(self):
        return (self.ues_served, self.min_link_bps, self.aggregate_bps)


def objective(report: SinrReport, links: Sequence[Link]) -> Objective:
    if not links:
        return Objective(0, 0.0, 0.0)
    by_id = {r.link_id: r for r in report.links}
    served = {l.ue_id for l in links if by_id[l.link_id].mac_throughput_bps > 0}
    return Objective(len(served),
                     min(r.mac_throughput_bps for r in report.links),
                     report.aggregate_bps)


def _tie_key(links: Sequence[Link]):
    # smaller is preferred: lowest UAV BFM ids first, then the rest of the labels
    return tuple(sorted((l.uav_bfm, l.ue_id, l.ue_bfm, l.channel) for l in links))


def candidate_links(scene: Scene) -> List[Link]:
    """Every servable (UAV BFM, UE BFM, channel) triple with a nonzero isolated rate."""
    out = []
    for um in scene.uav_mounts:
        for ue in scene.ues:
            for em in ue.mounts:
                for c in scene.radio.channels:
                    try:
                        link = make_link(scene, um.id, ue.id, em.id, c)
                    except NotServable:
                        continue
                    rep = sinr_matrix(scene, Assignment([link]))
                    if rep.links[0].mac_throughput_bps > 0:
                        out.append(link)
    return out


class _PairTable:
    """Precomputed received powers so that a matching is scored without geometry."""

    def __init__(self, scene: Scene, cands: List[Link]):
        self.scene = scene
        self.cands = cands
        self.noise_mw = 10.0 ** (ch.noise_dbm(scene.radio.bandwidth_hz,
                                              scene.radio.noise_figure_db) / 10.0)
        ends = [_ends(scene, l) for l in cands]
        n = len(cands)
        self.p_mw = np.zeros((n, n))
        for i, tx in enumerate(cands):
            for j, rx in enumerate(cands):
                self.p_mw[i, j] = 10.0 ** (_received_dbm(scene, ends[i], tx, ends[j], rx) / 10.0)
        self.iso_mac = np.array([_rate(scene, 10 * math.log10(self.p_mw[i, i] / self.noise_mw))[1]
                                 for i in range(n)])

    def score(self, idx: Sequence[int]) -> Objective:
        if not idx:
            return Objective(0, 0.0, 0.0)
        macs = []
        served = set()
        for j in idx:
            interf = sum(self.p_mw[i, j] for i in idx if i != j)
            sinr = 10 * math.log10(self.p_mw[j, j] / (self.noise_mw + interf))
            mac = _rate(self.scene, sinr)[1]
            macs.append(mac)
            if mac > 0:
                served.add(self.cands[j].ue_id)
        return Objective(len(served), min(macs), sum(macs))


def _better(score, links, best_score, best_links) -> bool:
    if best_score is None or score.key() > best_score.key():
        return True
    return score.key() == best_score.key() and _tie_key(links) < _tie_key(best_links)


def _exhaustive(table: _PairTable):
    cands = table.cands
    uav_ids = sorted({l.uav_bfm for l in cands})
    by_uav = {u: [i for i, l in enumerate(cands) if l.uav_bfm == u] for u in uav_ids}
    n_ues = len({l.ue_id for l in cands})
    best = [None, []]

    def dfs(k, chosen, used_rx, served, min_iso):
        remaining = len(uav_ids) - k
        ub_served = len(served) + min(remaining, n_ues - len(served))
        if best[0] is not None and chosen:
            if ub_served < best[0].ues_served:
                return
            if ub_served == best[0].ues_served and min_iso < best[0].min_link_bps:
                return
        if k == len(uav_ids):
            links = [cands[i] for i in chosen]
            s = table.score(chosen)
            if _better(s, links, best[0], best[1]):
                best[0], best[1] = s, links
            return
        dfs(k + 1, chosen, used_rx, served, min_iso)
        for i in by_uav[uav_ids[k]]:
            rx = (cands[i].ue_id, cands[i].ue_bfm)
            if rx in used_rx:
                continue
            dfs(k + 1, chosen + [i], used_rx | {rx}, served | {cands[i].ue_id},
                min(min_iso, table.iso_mac[i]))

    dfs(0, [], frozenset(), frozenset(), math.inf)
    return best[1], best[0]


def _greedy(table: _PairTable):
    chosen: List[int] = []
    best_score = table.score(chosen)
    while True:
        used_tx = {table.cands[i].uav_bfm for i in chosen}
        used_rx = {(table.cands[i].ue_id, table.cands[i].ue_bfm) for i in chosen}
        step = None
        for i, l in enumerate(table.cands):
            if l.uav_bfm in used_tx or (l.ue_id, l.ue_bfm) in used_rx:
                continue
            s = table.score(chosen + [i])
            links = [table.cands[j] for j in chosen + [i]]
            if s.key() > best_score.key() and (step is None or _better(s, links, step[0], step[1])):
                step = (s, links, i)
        if step is None:
            return [table.cands[i] for i in chosen], best_score
        chosen.append(step[2])
        best_score = step[0]


def assign_beams(scene: Scene) -> Assignment:
    """Max-min stream assignment over UAV BFM x UE BFM x channel.

    Objective, lexicographic: number of UEs served, minimum per-link MAC
    throughput, aggregate throughput; remaining ties go to the lowest UAV BFM
    ids. Exhaustive up to ``EXHAUSTIVE_LIMIT`` BFMs per side, greedy above.
    """
    if not scene.uav_mounts or not any(u.mounts for u in scene.ues):
        return Assignment([], "no BFMs on one side of the link")
    cands = candidate_links(scene)
    if not cands:
        return Assignment([], "no feasible link: every candidate is in outage or unservable")
    table = _PairTable(scene, cands)
    n_ue_bfms = sum(len(u.mounts) for u in scene.ues)
    if len(scene.uav_mounts) <= EXHAUSTIVE_LIMIT and n_ue_bfms <= EXHAUSTIVE_LIMIT:
        links, _ = _exhaustive(table)
    else:
        links, _ = _greedy(table)
    return Assignment(sorted(links, key=lambda l: l.link_id))


# -- drift ----------------------------------------------------------------------

def tx_gain_dbi(scene: Scene, link: Link, uav: Optional[UavPose] = None) -> float:
    e = _ends(scene, link, uav)
    return _gain(e.tx_basis, e.tx_origin, e.tx_mount, link.uav_steer, e.rx_origin)


def drift_tolerance(scene: Scene, assignment: Assignment, drift_m: float,
                    n_directions: int = 72) -> Dict[str, float]:
    """Worst-case tx gain loss (dB) per link after a horizontal UAV shift of
    ``drift_m`` without re-steering."""
    if drift_m < 0:
        raise ValueError("drift must be >= 0")
    out = {}
    for link in assignment.links:
        g0 = tx_gain_dbi(scene, link)
        worst = 0.0
        if drift_m > 0:
            for k in range(n_directions):
                phi = 2 * math.pi * k / n_directions
                moved = scene.uav.moved(drift_m * math.cos(phi), drift_m * math.sin(phi))
                worst = max(worst, g0 - tx_gain_dbi(scene, link, moved))
        out[link.link_id] = worst
    return out


def with_radio(scene: Scene, **kw) -> Scene:
    return replace(scene, radio=replace(scene.radio, **kw))
