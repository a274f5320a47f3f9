import csv
import io
import json
import math
import subprocess
import sys

import pytest

from fuzzybell import __version__
from fuzzybell.cli import build_parser, main, read_config, resolve_config


def _csv(text):
    lines = text.splitlines()
    assert lines[0].startswith("# config: ")
    rows = list(csv.reader(io.StringIO("\n".join(lines[1:]))))
    return json.loads(lines[0][len("# config: "):]), rows[0], rows[1:]


def run_cli(capsys, *argv):
    status = main(list(argv))
    out, err = capsys.readouterr()
    return status, out, err


def test_fringe_single_pair(capsys):
    status, out, _ = run_cli(capsys, "fringe", "--n", "1", "--eta", "1.0", "--scheme", "dichotomic", "--grid", "4")
    assert status == 0
    cfg, header, rows = _csv(out)
    assert header[:3] == ["theta_rad", "p_pp", "p_pm"]
    assert float(rows[0][2]) == pytest.approx(0.5, abs=1e-12)
    assert float(rows[2][0]) == pytest.approx(math.pi / 2)
    assert float(rows[2][1]) == pytest.approx(0.5, abs=1e-12)
    assert cfg["n"] == 1 and cfg["version"] == __version__


def test_chsh_single_pair(capsys):
    status, out, _ = run_cli(capsys, "chsh", "--n", "1")
    assert status == 0
    _, header, rows = _csv(out)
    assert float(rows[0][header.index("s_value")]) == pytest.approx(2 * math.sqrt(2), abs=1e-6)
    assert rows[0][header.index("method")] == "exact"


def test_output_is_deterministic(capsys):
    argv = ("fringe", "--n", "3", "--eta", "0.6", "--scheme", "of", "--k", "1", "--method", "mc",
            "--shots", "500", "--grid", "6")
    _, first, _ = run_cli(capsys, *argv)
    _, second, _ = run_cli(capsys, *argv, "--workers", "2")
    cfg1, cfg2 = _csv(first)[0], _csv(second)[0]
    assert cfg1.pop("workers") != cfg2.pop("workers")
    assert _csv(first)[1:] == _csv(second)[1:]
    _, again, _ = run_cli(capsys, *argv)
    assert again == first


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_rerun_reproduces_file(tmp_path, capsys, fmt):
    path = tmp_path / f"out.{fmt}"
    assert main(["fringe", "--n", "4", "--eta", "0.7", "--scheme", "td", "--h", "2", "--grid", "10",
                 "--format", fmt, "-o", str(path)]) == 0
    again = tmp_path / f"again.{fmt}"
    assert main(["rerun", str(path), "-o", str(again)]) == 0
    assert path.read_bytes() == again.read_bytes()
    assert read_config(str(path))["command"] == "fringe"


def test_rerun_warns_on_version_change(tmp_path, capsys):
    path = tmp_path / "out.json"
    main(["success", "--n", "3", "--scheme", "of", "--k", "1", "--eta", "0.5", "--format", "json", "-o", str(path)])
    doc = json.loads(path.read_text())
    doc["config"]["version"] = "0.0.0"
    path.write_text(json.dumps(doc))
    status, out, err = run_cli(capsys, "rerun", str(path))
    assert status == 0 and "warning" in err
    assert json.loads(out)["rows"] == doc["rows"]


def test_rerun_rejects_bad_files(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("theta\n1\n")
    assert run_cli(capsys, "rerun", str(bad))[0] == 2
    assert run_cli(capsys, "rerun", str(tmp_path / "missing.csv"))[0] == 2


@pytest.mark.parametrize("argv,code", [
    (["fringe", "--n", "2", "--eta", "2"], 2),
    (["fringe", "--n", "2", "--scheme", "of", "--k", "-1"], 2),
    (["fringe", "--n", "2", "--gain", "1.0"], 2),
    (["fringe"], 2),
    (["spdc-fringe", "--n", "3"], 2),
    (["visibility", "--n", "3"], 2),
    (["visibility", "--n", "3", "--thresholds", "1,2"], 2),
    (["fringe", "--n", "2", "--scheme", "parity"], 2),
    (["fringe", "--n", "500"], 3),
    (["chsh", "--n", "1", "--scheme", "td", "--h", "5"], 4),
])
def test_exit_codes(capsys, argv, code):
    status, _, err = run_cli(capsys, *argv)
    assert status == code
    assert err.startswith("E_")


def test_mc_columns(capsys):
    _, out, _ = run_cli(capsys, "fringe", "--n", "2", "--eta", "0.5", "--method", "mc", "--shots", "1000",
                        "--grid", "3")
    _, header, rows = _csv(out)
    assert len(header) == 19 and header[10] == "se_pp"
    assert all(float(v) >= 0 for v in rows[0][10:])


def test_explicit_angles(capsys):
    _, out, _ = run_cli(capsys, "fringe", "--n", "1", "--angles-deg", "90")
    _, _, rows = _csv(out)
    assert len(rows) == 1
    assert float(rows[0][0]) == pytest.approx(math.pi / 2)
    assert float(rows[0][1]) == pytest.approx(0.5)


def test_spdc_fringe(capsys):
    status, out, _ = run_cli(capsys, "spdc-fringe", "--gain", "0.5", "--eta", "0.8", "--grid", "4",
                             "--format", "json")
    doc = json.loads(out)
    assert status == 0 and doc["columns"][0] == "theta_rad"
    assert sum(doc["rows"][0][1:]) == pytest.approx(1.0)


def test_visibility_command(capsys):
    _, out, _ = run_cli(capsys, "visibility", "--n", "7", "--eta", "0.5", "--scheme", "of", "--thresholds", "0,2,4")
    _, header, rows = _csv(out)
    assert header[0] == "k" and [r[0] for r in rows] == ["0", "2", "4"]
    vis = [float(r[1]) for r in rows]
    assert vis == sorted(vis)
    _, out, _ = run_cli(capsys, "visibility", "--n", "7", "--etas", "1,0.5")
    _, header, rows = _csv(out)
    assert header[0] == "eta" and float(rows[0][1]) == pytest.approx(1.0)


def test_success_and_harmonics(capsys):
    _, out, _ = run_cli(capsys, "success", "--n", "5", "--scheme", "td", "--h", "0", "--eta", "0.3")
    assert float(_csv(out)[2][0][1]) == pytest.approx(1.0)
    _, out, _ = run_cli(capsys, "harmonics", "--n", "1", "--grid", "16")
    rows = _csv(out)[2]
    assert float(rows[0][1]) == pytest.approx(0.25) and float(rows[2][1]) == pytest.approx(0.25)


def test_workers_from_environment(monkeypatch):
    monkeypatch.setenv("FUZZYBELL_WORKERS", "5")
    cfg = resolve_config(build_parser().parse_args(["fringe", "--n", "1"]))
    assert cfg["workers"] == 5
    monkeypatch.setenv("FUZZYBELL_WORKERS", "0")
    assert main(["fringe", "--n", "1"]) == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "fuzzybell", "fringe", "--n", "1", "--grid", "2"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert proc.stdout.startswith("# config: ")
