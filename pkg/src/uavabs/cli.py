"""Command-line front end.

    uavabs pattern [SCENARIO] [--out DIR] [--seed N] [--print-config] [--quiet]
    uavabs coverage | link | evaluate | mission | acoustics [SCENARIO] ...
    uavabs reproduce [NAME ...]

SCENARIO is a YAML file or the name of a bundled scenario. Every output file
starts with ``#`` comment lines holding the resolved configuration, followed
by a CSV header row. Exit codes: 0 success, 2 invalid input, 3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np

from . import channel as ch
from . import config as cfgmod
from .array_engine import (
    compute_pattern,
    pattern_stats,
    peak_gain,
    principal_cuts,
)
from .config import ScenarioError
from .dispatch import LOG_HEADER, acoustic_level, min_standoff, run_mission
from .geometry import (
    GeometryError,
    UavPose,
    coverage_span,
    footprint,
    intersection_angle_beta,
    slant_distance,
)
from .multibeam import assign_beams, drift_tolerance, sinr_matrix, validate_scene

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3

DEFAULT_SCENARIO = {
    "pattern": "fig3_array",
    "coverage": "eq1_coverage",
    "link": "su_field_trial",
    "evaluate": "su_field_trial",
    "mission": "dispatch_demo",
    "acoustics": "acoustics",
}
DRIFT_STEPS_M = (0.5, 1.0, 2.0)


class InvalidInput(Exception):
    """Scenario is well-formed but cannot be evaluated (exit 2)."""


def _fmt(x, nd=6) -> str:
    if x is None:
        return "nan"
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    s = f"{x:.{nd}f}"
    return "0." + "0" * nd if s == "-0." + "0" * nd else s


class Emitter:
    """Writes output files with an embedded config header; collects summary lines."""

    def __init__(self, out_dir: Path, cfg: Dict, command: str, quiet: bool):
        self.out_dir = out_dir
        self.cfg = cfg
        self.command = command
        self.quiet = quiet
        self.written: List[Path] = []

    def header(self) -> List[str]:
        return [f"# uavabs {self.command} scenario={self.cfg['name']}",
                "# config=" + cfgmod.dump_json(self.cfg)]

    def write(self, name: str, columns: Sequence[str], rows, nd=6) -> Path:
        lines = [",".join(columns)] + [",".join(_fmt(v, nd) for v in r) for r in rows]
        return self.write_lines(name, lines)

    def write_lines(self, name: str, lines: Sequence[str], with_header=True) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / name
        body = (self.header() if with_header else []) + list(lines)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write("\n".join(body) + "\n")
        self.written.append(path)
        return path

    def say(self, msg: str):
        if not self.quiet:
            print(msg)


# -- subcommands ----------------------------------------------------------------

def cmd_pattern(cfg, em: Emitter):
    geom, model, steer = cfgmod.array_geometry(cfg), cfgmod.element_model(cfg), cfgmod.steering(cfg)
    a = cfg["array"]
    p = compute_pattern(geom, model, steer, a["az_step_deg"], a["el_step_deg"], a["phase_bits"])
    st = pattern_stats(p, a["cut_step_deg"])
    _, (az, g_az), (el, g_el) = principal_cuts(p, a["cut_step_deg"])
    em.write("pattern_azimuth.csv", ["angle_deg", "gain_dbi"], zip(az, g_az))
    em.write("pattern_elevation.csv", ["angle_deg", "gain_dbi"], zip(el, g_el))
    az_g, el_g = np.meshgrid(p.az_deg, p.el_deg, indexing="ij")
    em.write("pattern_grid.csv", ["az_deg", "el_deg", "gain_dbi"],
             zip(az_g.ravel(), el_g.ravel(), p.grid.ravel()), nd=4)
    em.write("pattern_stats.csv", ["peak_dbi", "hpbw_a_deg", "hpbw_e_deg", "sll_db"],
             [(st.peak_gain_dbi, st.hpbw_azimuth_deg, st.hpbw_elevation_deg, st.sll_db)])
    em.say(f"peak_dbi={_fmt(st.peak_gain_dbi, 2)} hpbw_a_deg={_fmt(st.hpbw_azimuth_deg, 2)} "
           f"hpbw_e_deg={_fmt(st.hpbw_elevation_deg, 2)} sll_db={_fmt(st.sll_db, 2)}")


def cmd_coverage(cfg, em: Emitter):
    c = cfg["uav"]["coverage"]
    rows = []
    for h in c["heights_m"]:
        for alpha in c["downtilts_deg"]:
            try:
                fp = footprint(UavPose((0.0, 0.0, h), 0.0, alpha), c["hpbw_e_deg"])
                span = coverage_span(h, alpha, c["hpbw_e_deg"])
                rows.append((h, alpha, c["hpbw_e_deg"], fp.near_m, fp.boresight_m, fp.far_m, span))
            except GeometryError as e:
                raise InvalidInput(f"uav.coverage: h={h} alpha={alpha}: {e}") from e
    em.write("coverage.csv", ["h_m", "alpha_deg", "hpbw_e_deg", "L1_m", "L2_m", "L3_m", "span_m"], rows)
    for r in rows:
        em.say(f"h={_fmt(r[0], 1)} m alpha={_fmt(r[1], 1)} deg span={_fmt(r[6], 2)} m")


def _peak_or(value, cfg):
    if value is not None:
        return value
    return peak_gain(cfgmod.array_geometry(cfg), cfgmod.element_model(cfg),
                     cfgmod.steering(cfg), cfg["array"]["phase_bits"])


def cmd_link(cfg, em: Emitter):
    c = cfg["channel"]
    sw = c["sweep"]
    params = cfgmod.channel_params(cfg)
    radio = cfgmod.radio_config(cfg)
    gt, gr = _peak_or(sw["tx_gain_dbi"], cfg), _peak_or(sw["rx_gain_dbi"], cfg)
    rng = np.random.default_rng(cfg["mission"]["seed"])
    rows = []
    for d in sw["distances_m"]:
        budget = ch.LinkBudget(d, ch.WigigChannel(sw["channel"], radio.bandwidth_hz),
                               radio.tx_power_dbm, gt, gr, radio.noise_figure_db)
        pl = ch.path_loss(params, d, budget.channel.center_hz, rng if params.shadow_sigma_db > 0 else None)
        prx = budget.tx_power_dbm + gt + gr - pl
        snr_db = prx - ch.noise_dbm(radio.bandwidth_hz, radio.noise_figure_db)
        phy = ch.mcs_rate(snr_db)
        rows.append((d, pl, snr_db, phy / 1e6, ch.mac_throughput(phy, radio.mac_efficiency) / 1e6))
    em.write("link.csv", ["distance_m", "path_loss_db", "snr_db", "phy_mbps", "mac_mbps"], rows)
    em.say(f"tx_gain_dbi={_fmt(gt, 2)} rx_gain_dbi={_fmt(gr, 2)}")
    for r in rows:
        em.say(f"d={_fmt(r[0], 2)} m snr={_fmt(r[2], 2)} dB mac={_fmt(r[4], 1)} Mbps")


def _checked_scene(cfg):
    if not cfg["ues"]:
        raise InvalidInput("no users: the scenario's ues list is empty")
    scene = cfgmod.scene(cfg)
    problems = validate_scene(scene)
    if problems:
        raise InvalidInput("; ".join(f"{v.rule} {'/'.join(v.entities)}: {v.detail}" for v in problems))
    return scene


def cmd_evaluate(cfg, em: Emitter):
    scene = _checked_scene(cfg)
    for w in validate_scene(scene, include_warnings=True):
        if w.severity == "warning":
            print(f"warning: {w.rule} {'/'.join(w.entities)}: {w.detail}", file=sys.stderr)
    assignment = assign_beams(scene)
    rng = np.random.default_rng(cfg["mission"]["seed"])
    report = sinr_matrix(scene, assignment, rng if scene.channel_params.shadow_sigma_db > 0 else None)
    rows = [(r.link_id, r.channel, r.sinr_db, r.phy_rate_bps / 1e6, r.mac_throughput_bps / 1e6)
            for r in report.links]
    rows.append(("aggregate", "", "",
                 sum(r.phy_rate_bps for r in report.links) / 1e6, report.aggregate_bps / 1e6))
    em.write("links.csv", ["link_id", "channel", "sinr_db", "phy_mbps", "mac_mbps"], rows)

    uav = scene.uav
    first = scene.ues[0].position_xy
    geo = []
    for ue in scene.ues:
        beta = 0.0 if ue is scene.ues[0] else intersection_angle_beta(uav, first, ue.position_xy)
        geo.append((ue.id, ue.position_xy[0], ue.position_xy[1],
                    math.hypot(ue.position_xy[0] - uav.position[0], ue.position_xy[1] - uav.position[1]),
                    slant_distance(uav, ue.position_xy), beta))
    em.write("geometry.csv", ["ue_id", "x_m", "y_m", "ground_m", "slant_m", "beta_deg"], geo)

    drift = []
    for d in DRIFT_STEPS_M:
        for link_id, loss in sorted(drift_tolerance(scene, assignment, d).items()):
            drift.append((link_id, d, loss))
    em.write("drift.csv", ["link_id", "drift_m", "tx_gain_loss_db"], drift)

    if assignment.diagnostic:
        em.say(f"diagnostic: {assignment.diagnostic}")
    for r in report.links:
        em.say(f"{r.link_id} ch{r.channel} sinr={_fmt(r.sinr_db, 2)} dB mac={_fmt(r.mac_throughput_bps / 1e6, 1)} Mbps")
    em.say(f"aggregate_mac_mbps={_fmt(report.aggregate_bps / 1e6, 1)}")


def cmd_mission(cfg, em: Emitter):
    scene = cfgmod.scene(cfg)
    mcfg = cfgmod.mission_config(cfg)
    res = run_mission(scene, cfgmod.mission_events(cfg), cfg["mission"]["seed"], mcfg,
                      cfg["mission"]["max_time_s"])
    em.write_lines("mission.log", res.lines())
    f = res.final
    em.say(f"final_state={f.state.value} t={_fmt(f.t, 1)} s battery={_fmt(f.battery_fraction, 4)}")
    visited = []
    for s in res.states:
        if not visited or visited[-1] != s.value:
            visited.append(s.value)
    em.say("states=" + ">".join(visited))


def cmd_acoustics(cfg, em: Emitter):
    m = cfgmod.mission_config(cfg).acoustic
    sw = cfg["mission"]["acoustic_sweep"]
    em.write("acoustics.csv", ["distance_m", "level_db"],
             [(d, acoustic_level(m, d)) for d in sw["distances_m"]])
    rows = [(t, min_standoff(m, t)) for t in sw["thresholds_db"]]
    em.write("standoff.csv", ["threshold_db", "min_standoff_m"], rows)
    for t, d in rows:
        em.say(f"threshold={_fmt(t, 1)} dB min_standoff={_fmt(d, 3)} m")


COMMAND_FUNCS = {
    "pattern": cmd_pattern,
    "coverage": cmd_coverage,
    "link": cmd_link,
    "evaluate": cmd_evaluate,
    "mission": cmd_mission,
    "acoustics": cmd_acoustics,
}


# -- plumbing ---------------------------------------------------------------------

def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_seed, default=None,
                        help="override mission.seed (also seeds channel shadowing)")
    common.add_argument("--out", type=Path, default=None,
                        help="output directory (default: outputs.dir, else ./out)")
    common.add_argument("--print-config", action="store_true",
                        help="print the resolved configuration and exit")
    common.add_argument("--quiet", action="store_true", help="no summary on stdout")

    ap = argparse.ArgumentParser(prog="uavabs", description=__doc__.splitlines()[0] if __doc__ else None)
    sub = ap.add_subparsers(dest="command", required=True)
    for name, default in DEFAULT_SCENARIO.items():
        p = sub.add_parser(name, parents=[common], help=f"{name} (default scenario: {default})")
        p.add_argument("scenario", nargs="?", default=default,
                       help="scenario file or bundled scenario name")
    p = sub.add_parser("reproduce", parents=[common], help="run the bundled scenarios")
    p.add_argument("names", nargs="*", default=list(cfgmod.BUNDLED),
                   help=f"bundled scenarios (default: all of {', '.join(cfgmod.BUNDLED)})")
    return ap


def _load(name_or_path, seed):
    cfg = cfgmod.load(name_or_path)
    if seed is not None:
        cfg["mission"]["seed"] = seed
    return cfg


def _run_one(command, cfg, out_dir: Path, quiet: bool) -> Emitter:
    em = Emitter(out_dir, cfg, command, quiet)
    COMMAND_FUNCS[command](cfg, em)
    return em


def _out_dir(args, cfg) -> Path:
    if args.out is not None:
        return args.out
    return Path(cfg["outputs"]["dir"] or "out")


def _print_config(cfg):
    print(json.dumps(cfg, sort_keys=True, indent=2))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "reproduce":
            jobs = []
            for name in args.names:
                if name not in cfgmod.BUNDLED and name != "dispatch_demo":
                    raise InvalidInput(f"unknown bundled scenario '{name}'")
                jobs.append((name, _load(name, args.seed)))
        else:
            jobs = [(args.scenario, _load(args.scenario, args.seed))]
    except ScenarioError as e:
        for p in e.problems:
            print(f"error: {p}", file=sys.stderr)
        return EXIT_INVALID
    except (InvalidInput, FileNotFoundError, IsADirectoryError, UnicodeDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID

    if args.print_config:
        for _, cfg in jobs:
            _print_config(cfg)
        return EXIT_OK

    try:
        for name, cfg in jobs:
            if args.command == "reproduce":
                command = cfg["outputs"]["command"]
                if command is None:
                    raise InvalidInput(f"{name}: outputs.command is not set")
                out = (args.out or Path("out")) / cfg["name"]
                if not args.quiet:
                    print(f"== {cfg['name']} ({command})")
            else:
                command, out = args.command, _out_dir(args, cfg)
            _run_one(command, cfg, out, args.quiet)
    except (InvalidInput, ScenarioError, GeometryError, ch.ChannelError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as e:  # noqa: BLE001 - reported as a runtime failure
        print(f"runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
