import json
import subprocess
import sys

import numpy as np
import pytest

from rf_fusion.cli import main, subsets
from rf_fusion.config import ConfigError
from rf_fusion.traces import read_jsonl

SCENARIO = {
    "name": "unit",
    "room_bounds": [0.0, 0.0, 2.0, 3.0],
    "rss_nodes": [[-0.3, y] for y in (0.5, 1.0, 1.5, 2.0, 2.5)] + [[2.3, y] for y in (0.5, 1.0, 1.5, 2.0, 2.5)],
    "uwb_tx": [-0.5, 1.0],
    "uwb_rx": [-0.5, 2.0],
    "waypoints": [[0.5, 0.5], [1.5, 0.5], [1.5, 2.5], [0.5, 2.5]],
    "calibration_s": 8.0,
    "duration": 24.0,
}


@pytest.fixture
def scenario_file(tmp_path):
    p = tmp_path / "scenario.json"
    p.write_text(json.dumps(SCENARIO))
    return p


def simulate(tmp_path, scenario_file, name="sim", *extra):
    out = tmp_path / name
    assert main(["simulate", "--scenario", str(scenario_file), "--seed", "4", "--out", str(out), *extra]) == 0
    return out


def test_simulate_writes_expected_files(tmp_path, scenario_file):
    out = simulate(tmp_path, scenario_file)
    names = sorted(p.name for p in out.iterdir())
    assert names == ["cir.jsonl", "resolved-config.json", "rss.jsonl", "scenario.json", "truth.csv"]
    n_links = 45
    assert len((out / "rss.jsonl").read_text().splitlines()) == 60 * 4 * n_links
    assert len((out / "cir.jsonl").read_text().splitlines()) == 240
    assert len((out / "truth.csv").read_text().splitlines()) == 241
    cfg = json.loads((out / "resolved-config.json").read_text())
    assert cfg["calibration_s"] == 8.0 and cfg["seed"] == 4 and cfg["los_bin"] == 6


def test_simulate_is_deterministic(tmp_path, scenario_file):
    a = simulate(tmp_path, scenario_file, "a")
    b = simulate(tmp_path, scenario_file, "b")
    for name in ("rss.jsonl", "cir.jsonl", "truth.csv", "resolved-config.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_track_and_evaluate(tmp_path, scenario_file, capsys):
    sim = simulate(tmp_path, scenario_file)
    cfg = str(sim / "resolved-config.json")
    assert main(["track", "--config", cfg, "--uwb", "none", str(sim), "--out", str(tmp_path / "rti")]) == 0
    assert main(["track", "--config", cfg, str(sim), "--out", str(tmp_path / "fused"), "--csv"]) == 0
    recs = read_jsonl(tmp_path / "fused" / "estimates.jsonl")
    assert recs[0]["method"] == "ab-rti+hmm-uwb/product"
    assert (tmp_path / "fused" / "estimates.csv").exists()
    events = read_jsonl(tmp_path / "fused" / "tracks.jsonl")
    assert any(e["event"] == "confirmed" for e in events)
    capsys.readouterr()
    report = tmp_path / "report.json"
    assert main(["evaluate", "--config", cfg, "--estimates", str(tmp_path / "fused" / "estimates.jsonl"),
                 "--baseline", str(tmp_path / "rti" / "estimates.jsonl"), "--truth", str(sim / "truth.csv"),
                 "--out", str(report)]) == 0
    assert "AoU reduction vs ab-rti" in capsys.readouterr().out
    r = json.loads(report.read_text())
    assert set(r) == {"method", "metrics", "baseline", "aou_reduction_pct"}
    assert r["metrics"]["rms_l2"] >= 0


def test_exit_codes(tmp_path, scenario_file):
    sim = simulate(tmp_path, scenario_file, "sim", "--calibration-s", "0")
    cfg = str(sim / "resolved-config.json")
    # AB-RTI has no calibration prefix to work from
    assert main(["track", "--config", cfg, str(sim), "--out", str(tmp_path / "x")]) == 3
    assert main(["track", "--config", cfg, "--rti", "vb", "--uwb", "vb", str(sim), "--out", str(tmp_path / "y")]) == 0
    bad = tmp_path / "bad.json"
    bad.write_text('{"voxel_widht": 0.2}')
    assert main(["track", "--config", str(bad), str(sim), "--out", str(tmp_path / "z")]) == 2
    assert main(["simulate", "--scenario", str(tmp_path / "nope.json"), "--out", str(tmp_path / "w")]) == 2
    broken = tmp_path / "broken.jsonl"
    broken.write_text("not json\n")
    assert main(["track", "--config", cfg, "--rti", "vb", str(broken), "--out", str(tmp_path / "v")]) == 3
    assert main(["evaluate", "--config", cfg, "--estimates", str(broken), "--truth", str(sim / "truth.csv")]) == 3


def test_empty_room_has_no_target(tmp_path, scenario_file):
    sim = simulate(tmp_path, scenario_file, "empty", "--empty")
    lines = (sim / "truth.csv").read_text().splitlines()[1:]
    assert all(l.endswith(",,,0") for l in lines)


def test_sweep(tmp_path, scenario_file, capsys):
    sim = simulate(tmp_path, scenario_file)
    cfg = str(sim / "resolved-config.json")
    out = tmp_path / "sweep.json"
    assert main(["sweep", "--config", cfg, str(sim), "--truth", str(sim / "truth.csv"), "--sizes", "3,5",
                 "--n-sims", "2", "--methods", "ab:none,ab:hmm", "--out", str(out)]) == 0
    r = json.loads(out.read_text())
    assert r["sizes"]["3"]["n_sims"] == 2 and r["sizes"]["5"]["n_sims"] == 1
    assert "aou_reduction_pct" in r["sizes"]["5"]["ab-rti+hmm-uwb/product"]
    assert "S=5 (1 subsets)" in capsys.readouterr().out
    assert main(["sweep", "--config", cfg, str(sim), "--truth", str(sim / "truth.csv"), "--sizes", "6"]) == 2


def test_subsets():
    sides = np.array([0, 0, 0, 1, 1, 1])
    rng = np.random.default_rng(0)
    all_ = subsets(sides, 2, 50, rng)
    assert len(all_) == 9 and len({tuple(s) for s in all_}) == 9
    assert subsets(sides, 3, 50, rng) == [[0, 1, 2, 3, 4, 5]]
    drawn = subsets(sides, 1, 4, rng)
    assert len(drawn) == 4 and all(len(s) == 2 and s[0] < 3 <= s[1] for s in drawn)
    with pytest.raises(ConfigError):
        subsets(sides, 4, 5, rng)


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "rf_fusion", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "simulate" in r.stdout
