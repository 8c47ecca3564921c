import csv
import io
import json
import time

import pytest

from uavabs import cli
from uavabs import config as cfgmod


def run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def read_csv(path):
    text = path.read_bytes().decode()
    body = [ln for ln in text.split("\n") if ln and not ln.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(body))))


def write(tmp_path, text, name="s.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


# -- scenario parsing --------------------------------------------------------------

@pytest.mark.parametrize("name", cfgmod.BUNDLED + ("dispatch_demo",))
def test_bundled_scenarios_resolve(name):
    cfg = cfgmod.load(name)
    assert cfg["name"] == name
    assert cfg["outputs"]["command"] in cfgmod.COMMANDS


def test_defaults_fill_everything():
    cfg = cfgmod.resolve({})
    assert cfg["array"]["n_azim"] == 8 and cfg["channel"]["tx_power_dbm"] == 10.0
    assert cfg["uav"]["downtilt_deg"] == pytest.approx(57.8477, abs=1e-4)


def test_unknown_key_rejected_with_path():
    with pytest.raises(cfgmod.ScenarioError) as e:
        cfgmod.resolve({"uav": {"mounts": [{"id": "A", "tilt": 3}]}})
    assert "uav.mounts.0" in e.value.problems[0] and "tilt" in e.value.problems[0]


def test_wrong_type_rejected():
    with pytest.raises(cfgmod.ScenarioError) as e:
        cfgmod.resolve({"array": {"n_azim": 8.5}})
    assert e.value.problems[0].startswith("array.n_azim")


def test_exponent_without_sign_is_a_number(tmp_path):
    cfg = cfgmod.load(write(tmp_path, "array: {carrier_hz: 60e9}\n"))
    assert cfg["array"]["carrier_hz"] == 60e9


def test_backhaul_channel_removed_from_access_pool():
    cfg = cfgmod.resolve({"channel": {"backhaul_channel": 3}})
    assert cfgmod.radio_config(cfg).channels == (1, 2)
    with pytest.raises(cfgmod.ScenarioError):
        cfgmod.radio_config(cfgmod.resolve({"channel": {"channels": [2], "backhaul_channel": 2}}))


# -- exit codes ----------------------------------------------------------------------

def test_empty_user_list_is_validation_failure(tmp_path, capsys):
    path = write(tmp_path, "uav:\n  mounts: [{id: A}]\nues: []\n")
    code, _, err = run(["evaluate", path, "--out", str(tmp_path / "o")], capsys)
    assert code == 2 and "no users" in err


def test_malformed_yaml_reports_line(tmp_path, capsys):
    code, _, err = run(["pattern", write(tmp_path, "array:\n  n_azim: [8\n")], capsys)
    assert code == 2 and "line" in err


def test_unknown_field_exit_code(tmp_path, capsys):
    code, _, err = run(["pattern", write(tmp_path, "array: {n_azm: 8}\n")], capsys)
    assert code == 2 and "n_azm" in err


def test_missing_file_exit_code(tmp_path, capsys):
    code, _, _ = run(["pattern", str(tmp_path / "nope.yaml")], capsys)
    assert code == 2


def test_placement_violation_exit_code(tmp_path, capsys):
    text = ("uav:\n  mounts:\n    - {id: A, offset_m: [0.1, 0.0, 0.0]}\n"
            "    - {id: B, offset_m: [0.1, 0.01, 0.0]}\n"
            "ues:\n  - {id: ue1, position: [22.0, 0.0], mounts: [{id: u1, yaw_deg: 180, downtilt_deg: -90}]}\n")
    code, _, err = run(["evaluate", write(tmp_path, text), "--out", str(tmp_path)], capsys)
    assert code == 2 and "separation" in err


def test_runtime_error_exit_code(tmp_path, capsys, monkeypatch):
    def boom(cfg, em):
        raise RuntimeError("kaput")
    monkeypatch.setitem(cli.COMMAND_FUNCS, "coverage", boom)
    code, _, err = run(["coverage", "--out", str(tmp_path)], capsys)
    assert code == 3 and "kaput" in err


def test_bad_seed_rejected(capsys):
    with pytest.raises(SystemExit) as e:
        cli.main(["mission", "--seed", "-1"])
    assert e.value.code == 2


# -- outputs ---------------------------------------------------------------------------

def test_print_config_is_resolved_json(capsys):
    code, out, _ = run(["evaluate", "su_field_trial", "--print-config", "--seed", "5"], capsys)
    assert code == 0
    cfg = json.loads(out)
    assert cfg["mission"]["seed"] == 5
    assert cfg["uav"]["mounts"][0]["weight_g"] == 1.0


def test_coverage_csv(tmp_path, capsys):
    code, out, _ = run(["reproduce", "eq1_coverage", "--out", str(tmp_path)], capsys)
    assert code == 0 and "span=25.71" in out
    path = tmp_path / "eq1_coverage" / "coverage.csv"
    rows = read_csv(path)
    assert float(rows[0]["span_m"]) == pytest.approx(25.7115, abs=1e-4)
    raw = path.read_bytes()
    assert b"\r" not in raw
    lines = raw.decode().split("\n")
    assert lines[0].startswith("# ") and lines[1].startswith("# config=")
    assert lines[2] == "h_m,alpha_deg,hpbw_e_deg,L1_m,L2_m,L3_m,span_m"
    embedded = json.loads(lines[1][len("# config="):])
    assert embedded == cfgmod.load("eq1_coverage")


def test_evaluate_csv_and_aggregate(tmp_path, capsys):
    code, _, _ = run(["evaluate", "su_field_trial", "--out", str(tmp_path), "--quiet"], capsys)
    assert code == 0
    rows = read_csv(tmp_path / "links.csv")
    assert [r["link_id"] for r in rows] == ["A->ue1/u1", "B->ue1/u2", "aggregate"]
    assert float(rows[-1]["mac_mbps"]) == pytest.approx(2240.0)


def test_link_sweep(tmp_path, capsys):
    code, _, _ = run(["link", "--out", str(tmp_path), "--quiet"], capsys)
    assert code == 0
    rows = read_csv(tmp_path / "link.csv")
    snr = [float(r["snr_db"]) for r in rows]
    assert snr == sorted(snr, reverse=True)
    row = next(r for r in rows if r["distance_m"] == "41.340000")
    assert float(row["path_loss_db"]) == pytest.approx(68.0800 + 20.5 * 1.616406 + 0.015 * 41.34, abs=1e-3)


def test_quiet_suppresses_stdout(tmp_path, capsys):
    code, out, _ = run(["acoustics", "--out", str(tmp_path), "--quiet"], capsys)
    assert code == 0 and out == ""
    rows = read_csv(tmp_path / "standoff.csv")
    assert float(rows[1]["min_standoff_m"]) == pytest.approx(10.0, abs=1e-3)


@pytest.mark.parametrize("command", ["pattern", "coverage", "link", "evaluate", "mission", "acoustics"])
def test_byte_identical_reruns(tmp_path, capsys, command):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main([command, "--out", str(a), "--seed", "4", "--quiet"]) == 0
    assert cli.main([command, "--out", str(b), "--seed", "4", "--quiet"]) == 0
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir()) and names
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes(), n


def test_mission_seed_changes_log(tmp_path, capsys):
    cli.main(["mission", "--out", str(tmp_path / "a"), "--seed", "1", "--quiet"])
    cli.main(["mission", "--out", str(tmp_path / "b"), "--seed", "2", "--quiet"])
    assert (tmp_path / "a" / "mission.log").read_bytes() != (tmp_path / "b" / "mission.log").read_bytes()


def test_reproduce_all_under_a_minute(tmp_path, capsys):
    t0 = time.perf_counter()
    code, out, _ = run(["reproduce", "--out", str(tmp_path)], capsys)
    assert code == 0
    assert time.perf_counter() - t0 < 60.0
    assert sorted(p.name for p in tmp_path.iterdir()) == sorted(cfgmod.BUNDLED)
    assert "aggregate_mac_mbps=2240.0" in out
