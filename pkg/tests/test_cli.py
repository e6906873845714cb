import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from endqt import cli
from endqt.decoherence import DecoherenceTrace, bath_traces, default_times
from endqt.io import emit_plot_data, fmt

GOLDEN = Path(__file__).parent / "golden"
SCENARIOS = sorted(cli.SCENARIOS)
REGEN = os.environ.get("ENDQT_REGEN_GOLDEN") == "1"


def run_cli(*args):
    return cli.main([str(a) for a in args])


def text_artifacts(d: Path) -> dict[str, bytes]:
    out = {}
    for p in sorted(d.iterdir()):
        if p.suffix == ".csv" or (p.suffix == ".json" and p.name != "report.json"):
            out[p.name] = p.read_bytes()
    return out


def stable_report(d: Path) -> dict:
    r = json.loads((d / "report.json").read_text())
    r.pop("wall_seconds")
    return r


@pytest.mark.parametrize("scenario", SCENARIOS)
def test_golden(scenario, tmp_path, capsys):
    case = GOLDEN / scenario
    out = tmp_path / scenario
    assert run_cli(scenario, "--config", case / "config.json", "--out", out) == 0
    got = text_artifacts(out)
    got["report.json"] = (json.dumps(stable_report(out), indent=2, sort_keys=True) + "\n").encode()
    expected_dir = case / "expected"
    if REGEN:
        expected_dir.mkdir(exist_ok=True)
        for name, data in got.items():
            (expected_dir / name).write_bytes(data)
    expected = {p.name: p.read_bytes() for p in sorted(expected_dir.iterdir())}
    assert sorted(got) == sorted(expected)
    for name in expected:
        assert got[name] == expected[name], f"{scenario}/{name} differs from golden copy"


@pytest.mark.parametrize("scenario", SCENARIOS)
def test_reruns_are_byte_identical(scenario, tmp_path):
    cfg = GOLDEN / scenario / "config.json"
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_cli(scenario, "--config", cfg, "--out", a) == 0
    assert run_cli(scenario, "--config", cfg, "--out", b) == 0
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    for n in names:
        if n == "report.json":
            assert stable_report(a) == stable_report(b)
        else:
            assert (a / n).read_bytes() == (b / n).read_bytes(), n


def test_report_lists_existing_artifacts(tmp_path):
    out = tmp_path / "o"
    assert run_cli("mz", "--detector-d3", "--out", out) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["artifacts"] and all((out / n).exists() for n in report["artifacts"])
    assert report["config"]["scenario"] == "mz"


def test_chsh_headline(tmp_path, capsys):
    assert run_cli("chsh", "--out", tmp_path) == 0
    head = json.loads(capsys.readouterr().out)
    assert head["chsh"] == pytest.approx(2 * np.sqrt(2), abs=1e-9)


def test_sdc_worked_headline(tmp_path, capsys):
    assert run_cli("sdc", "--layers", 4, "--last-layer", 5, "--group-size", 30, "--delta", "auto",
                   "--seed", 42, "--out", tmp_path) == 0
    head = json.loads(capsys.readouterr().out)
    assert head["total"] == 139655
    assert head["systems_determined"] == 139655
    assert head["event_rows"] == 139650
    with open(tmp_path / "systems.csv") as fh:
        assert sum(1 for _ in fh) - 1 == 139655


class TestConfigErrors:
    def test_negative_group_size(self, tmp_path, capsys):
        assert run_cli("sdc", "--group-size", -3, "--seed", 1, "--out", tmp_path) == 2
        assert "group_size" in capsys.readouterr().err

    def test_negative_group_size_in_file(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"scenario": "sdc", "parameters": {"group_size": -1}, "seed": 1}))
        assert run_cli("sdc", "--config", cfg, "--out", tmp_path / "o") == 2
        assert "group_size" in capsys.readouterr().err

    def test_missing_seed(self, tmp_path, capsys):
        assert run_cli("trace", "--out", tmp_path) == 2
        assert "seed" in capsys.readouterr().err

    def test_unknown_parameter(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"parameters": {"colour": 1}}))
        assert run_cli("chsh", "--config", cfg, "--out", tmp_path / "o") == 2
        assert "colour" in capsys.readouterr().err

    def test_unknown_top_level_field(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"extra": 1}))
        assert run_cli("chsh", "--config", cfg, "--out", tmp_path / "o") == 2
        assert "extra" in capsys.readouterr().err

    def test_bad_json_reports_line(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text('{\n  "seed": 1,\n  oops\n}')
        assert run_cli("chsh", "--config", cfg, "--out", tmp_path / "o") == 2
        assert "line 3" in capsys.readouterr().err

    def test_scenario_mismatch(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"scenario": "bell"}))
        assert run_cli("chsh", "--config", cfg, "--out", tmp_path / "o") == 2

    @pytest.mark.parametrize("flag,value", [("--dt", 0), ("--t-max", -1), ("--epsilon", 2),
                                            ("--bath-sizes", "0,3"), ("--coupling-hi", -1)])
    def test_trace_ranges(self, flag, value, tmp_path, capsys):
        assert run_cli("trace", "--seed", 1, flag, value, "--out", tmp_path) == 2
        assert flag.lstrip("-").replace("-", "_") in capsys.readouterr().err

    def test_bad_delta(self, tmp_path, capsys):
        assert run_cli("sdc", "--seed", 1, "--delta", "-1", "--out", tmp_path) == 2
        assert "delta" in capsys.readouterr().err

    def test_dissolve_out_of_range(self, tmp_path):
        assert run_cli("sdc", "--seed", 1, "--layers", 3, "--dissolve-after", 2, "--out", tmp_path) == 2

    def test_seed_range(self, tmp_path):
        assert run_cli("trace", "--seed", -1, "--out", tmp_path) == 2
        assert run_cli("trace", "--seed", 2**64, "--out", tmp_path) == 2

    def test_mz_shots_need_seed(self, tmp_path, capsys):
        assert run_cli("mz", "--detector-d3", "--shots", 10, "--out", tmp_path) == 2
        assert "seed" in capsys.readouterr().err

    def test_bad_threads(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("ENDQT_THREADS", "zero")
        assert run_cli("chsh", "--batch-seeds", 2, "--out", tmp_path) == 2
        assert "ENDQT_THREADS" in capsys.readouterr().err


def test_runtime_failure_exits_one(tmp_path, capsys):
    assert run_cli("sdc", "--seed", 1, "--node-cap", 10, "--out", tmp_path) == 1
    assert capsys.readouterr().err.startswith("error:")


def test_flags_override_file(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"parameters": {"angle_a": 0.0, "angle_b": 0.0}}))
    assert run_cli("bell", "--config", cfg, "--angle-b", str(np.pi / 2), "--out", tmp_path / "o") == 0
    head = json.loads(capsys.readouterr().out)
    assert head["correlator"] == pytest.approx(0, abs=1e-12)


def test_batch_seeds(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("ENDQT_THREADS", "2")
    out = tmp_path / "batch"
    assert run_cli("mz", "--detector-d3", "--shots", 100, "--seed", 10, "--batch-seeds", 3, "--out", out) == 0
    summary = json.loads((out / "batch_report.json").read_text())
    assert summary["seeds"] == [10, 11, 12]
    for s in (10, 11, 12):
        single = tmp_path / f"single_{s}"
        assert run_cli("mz", "--detector-d3", "--shots", 100, "--seed", s, "--out", single) == 0
        assert (single / "counts.json").read_bytes() == (out / f"seed_{s}" / "counts.json").read_bytes()


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "endqt", "mz", "--out", str(tmp_path)],
                       capture_output=True, text=True, check=False)
    assert r.returncode == 0
    assert json.loads(r.stdout)["table"]["D2"] == pytest.approx(1.0)


class TestPlotData:
    def test_small_bath_fluctuates_more(self, tmp_path):
        stds = {}
        for G in (6, 17):
            tr = bath_traces(G, [0])[0]
            path = emit_plot_data(tr, tmp_path / f"plot_G{G}.csv")
            col = np.loadtxt(path, delimiter=",", skiprows=1)[:, 1]
            stds[G] = col.std(ddof=1)
        assert stds[6] > stds[17]

    def test_first_row(self, tmp_path):
        path = emit_plot_data(bath_traces(30, [0])[0], tmp_path / "p.csv")
        lines = path.read_text().splitlines()
        assert lines[0] == "t,abs_z"
        assert lines[1] == "0,1"

    def test_empty_trace(self, tmp_path):
        with pytest.raises(ValueError):
            emit_plot_data(DecoherenceTrace(np.zeros(0), np.zeros(0)), tmp_path / "p.csv")

    def test_unwritable_path(self, tmp_path):
        tr = DecoherenceTrace(default_times(1.0), np.ones(101))
        with pytest.raises(OSError):
            emit_plot_data(tr, tmp_path / "missing" / "p.csv")


def test_fmt():
    assert fmt(0.1 + 0.2) == "0.3"
    assert fmt(-0.0) == "0"
    assert fmt(True) == "true"
    assert fmt(None) == ""
    assert fmt(np.int64(7)) == "7"
