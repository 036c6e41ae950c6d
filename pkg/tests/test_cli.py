import json
import math

import pytest

from leofl.cli import main
from leofl.report import read_table


def test_capacity_command(tmp_path):
    assert main(["--out-dir", str(tmp_path), "capacity", "--power-dbm", "20", "off",
                 "--distance-km", "100", "500", "1500"]) == 0
    cols, rows = read_table(tmp_path / "capacity.csv", "capacity")
    assert {"total_capacity_bps", "per_satellite_bps", "latency_s"} <= set(cols)
    on = [float(r["total_capacity_bps"]) for r in rows if r["power_dbm"] == "20.0" or r["power_dbm"] == "20"]
    off = [float(r["total_capacity_bps"]) for r in rows if r["power_dbm"] == "-inf"]
    assert len(on) == 3 and all(a > b for a, b in zip(on, on[1:]))
    assert off == [0.0, 0.0, 0.0]
    per = [float(r["per_satellite_bps"]) for r in rows][:1]
    assert per[0] == pytest.approx(on[0] / 128)


@pytest.mark.parametrize("argv", [
    ["capacity", "--distance-km"],
    ["capacity", "--power-dbm"],
    ["capacity", "--distance-km", "0"],
    ["visibility", "--architecture", "sat-leo"],
    ["train", "--scheme", "fedprox"],
    ["train", "--preset", "nope"],
    ["bound", "--eta", "0.6"],
    ["bound", "--L", "4", "--eta", "0.2"],
])
def test_usage_errors_exit_2(tmp_path, argv):
    with pytest.raises(SystemExit) as exc:
        main(["--out-dir", str(tmp_path)] + argv)
    assert exc.value.code == 2


def test_visibility_command(tmp_path):
    assert main(["--out-dir", str(tmp_path), "visibility", "--inclination", "70", "--nsats", "12"]) == 0
    cols, rows = read_table(tmp_path / "visibility.csv", "visibility")
    assert [r["architecture"] for r in rows] == ["sat-gs", "sat-hap-gs"]
    assert float(rows[1]["mean_window_s"]) >= float(rows[0]["mean_window_s"])


def test_bound_command(tmp_path):
    assert main(["--out-dir", str(tmp_path), "bound", "--sigma", "0", "--eta", "0.25", "--tau-max", "2",
                 "--K", "50", "--seeds", "3"]) == 0
    rep = json.loads((tmp_path / "bound.json").read_text())
    assert rep["lemma_fraction_holding"] == 1.0 and rep["schema"] == 1
    assert rep["bound"] == pytest.approx(rep["bound_closed_form"])


def test_train_is_reproducible(tmp_path):
    argv = ["train", "--preset", "protocol", "--horizon", "20000", "--scheme", "proposed"]
    assert main(["--out-dir", str(tmp_path / "a"), "--seed", "4"] + argv) == 0
    assert main(["--out-dir", str(tmp_path / "b"), "--seed", "4"] + argv) == 0
    for name in ("events.csv", "aggregation_trace.csv", "accuracy.csv", "membership.csv", "summary.json"):
        a = (tmp_path / "a" / "train" / "proposed" / name).read_bytes()
        assert a == (tmp_path / "b" / "train" / "proposed" / name).read_bytes()


def test_env_prefix_sets_defaults(tmp_path, monkeypatch):
    monkeypatch.setenv("LEOFL_OUT_DIR", str(tmp_path))
    monkeypatch.setenv("LEOFL_DISTANCE_KM", "100,200")
    monkeypatch.setenv("LEOFL_POWER_DBM", "10")
    assert main(["capacity"]) == 0
    _, rows = read_table(tmp_path / "capacity.csv", "capacity")
    assert len(rows) == 2


def test_report_renders_figures(tmp_path):
    out = str(tmp_path)
    assert main(["--out-dir", out, "visibility", "--inclination", "70", "--nsats", "12"]) == 0
    assert main(["--out-dir", out, "train", "--preset", "protocol", "--horizon", "8000"]) == 0
    assert main(["--out-dir", out, "report"]) == 0
    for name in ("fig_visibility.png", "fig_capacity.png", "fig_accuracy.png", "capacity.csv"):
        assert (tmp_path / name).stat().st_size > 0
