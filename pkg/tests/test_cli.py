import csv
import io
import json
import shutil
import subprocess
import sys
from pathlib import Path

import pytest
import yaml

from semiflow.cli import main
from semiflow.integrators import THREADS_ENV

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def write_config(tmp_path, raw, name="c.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(raw))
    return path


def test_newton_single_straight_line(tmp_path):
    out = tmp_path / "run"
    assert main(["-q", "run", str(CONFIGS / "newton_single.yaml"), "--out", str(out)]) == 0
    rows = list(csv.DictReader(io.StringIO((out / "trajectory.csv").read_text())))
    assert rows[0].keys() == {"t", "i", "x1", "v1"}
    for r in rows:
        assert float(r["x1"]) == pytest.approx(float(r["t"]), abs=1e-12)
        assert float(r["v1"]) == 1.0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["passed"] is True and set(manifest["files"]) == {"trajectory.csv"}


def test_sticky_symmetric_events(tmp_path):
    out = tmp_path / "run"
    assert main(["-q", "run", str(CONFIGS / "sticky_symmetric.yaml"), "--out", str(out)]) == 0
    events = json.loads((out / "events.json").read_text())
    assert len(events) == 1 and abs(events[0]["time"] - 1.0) <= 1e-8
    assert main(["-q", "verify", str(out)]) == 0


@pytest.mark.parametrize("name", ["sticky_attractive.yaml", "elasto_damped.yaml", "vlasov_gaussian.yaml"])
def test_run_then_verify(tmp_path, name, capsys):
    out = tmp_path / "run"
    assert main(["-q", "run", str(CONFIGS / name), "--out", str(out)]) == 0
    assert main(["-q", "verify", str(out)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["passed"] and report["mode"] == "run-dir"


def test_repeat_runs_identical(tmp_path):
    for k in (1, 2):
        assert main(["-q", "run", str(CONFIGS / "sticky_attractive.yaml"), "--out", str(tmp_path / f"r{k}")]) == 0
    for name in ("flowmap.csv", "events.json", "report.json"):
        assert (tmp_path / "r1" / name).read_bytes() == (tmp_path / "r2" / name).read_bytes()


def test_thread_count_does_not_change_output(tmp_path, monkeypatch):
    raw = yaml.safe_load((CONFIGS / "vlasov_gaussian.yaml").read_text())
    raw["initial"]["N"] = 96
    raw["T"] = 0.2
    cfg = write_config(tmp_path, raw)
    for threads in ("1", "4"):
        monkeypatch.setenv(THREADS_ENV, threads)
        assert main(["-q", "run", str(cfg), "--out", str(tmp_path / f"t{threads}")]) == 0
    for name in ("trajectory.csv", "report.json"):
        assert (tmp_path / "t1" / name).read_bytes() == (tmp_path / "t4" / name).read_bytes()
    m1 = json.loads((tmp_path / "t1" / "manifest.json").read_text())
    m4 = json.loads((tmp_path / "t4" / "manifest.json").read_text())
    m1.pop("wall_time_s"), m4.pop("wall_time_s")
    assert m1 == m4


def _corrupt_csv(path: Path, row: int, col: int, value: str):
    rows = list(csv.reader(io.StringIO(path.read_text())))
    rows[row][col] = value
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    path.write_text(buf.getvalue())


@pytest.mark.parametrize(
    "config,artifact,value",
    [
        ("newton_single.yaml", "trajectory.csv", "0.5"),
        ("sticky_symmetric.yaml", "flowmap.csv", "0.25"),
        ("elasto_damped.yaml", "modes.csv", "1e-3"),
        ("newton_single.yaml", "trajectory.csv", "garbage"),
    ],
)
def test_corrupted_file_fails(tmp_path, config, artifact, value):
    out = tmp_path / "run"
    assert main(["-q", "run", str(CONFIGS / config), "--out", str(out)]) == 0
    _corrupt_csv(out / artifact, 5, 3, value)
    assert main(["-q", "verify", str(out / artifact), "--json", str(tmp_path / "r.json")]) == 1
    assert json.loads((tmp_path / "r.json").read_text())["passed"] is False


def test_missing_artifact_fails(tmp_path):
    out = tmp_path / "run"
    main(["-q", "run", str(CONFIGS / "sticky_symmetric.yaml"), "--out", str(out)])
    (out / "events.json").unlink()
    assert main(["-q", "verify", str(out)]) == 1


def test_verify_suites(capsys):
    assert main(["-q", "verify", "entropy", "--seeds", "2"]) == 0
    assert main(["-q", "verify", "oracle-match", "--seeds", "1"]) == 0
    report = json.loads(capsys.readouterr().out.split("\n}\n")[0] + "\n}")
    assert report["mode"] == "suite"


def test_verify_config_in_memory(capsys):
    assert main(["-q", "verify", str(CONFIGS / "sticky_symmetric.yaml")]) == 0
    assert json.loads(capsys.readouterr().out)["mode"] == "config"


def test_exit_codes_for_bad_input(tmp_path):
    assert main(["-q", "verify", "no-such-suite"]) == 2
    assert main(["-q", "run", str(tmp_path / "missing.yaml")]) == 2
    bad = write_config(tmp_path, {"schema_version": 1, "kind": "newton", "T": -1})
    assert main(["-q", "run", str(bad), "--out", str(tmp_path)]) == 2
    empty_dir = tmp_path / "empty"
    empty_dir.mkdir()
    assert main(["-q", "verify", str(empty_dir)]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_numerical_failure_exit_code(tmp_path):
    raw = {
        "schema_version": 1,
        "kind": "newton",
        "T": 50.0,
        "integrator": {"dt": 0.5},
        "potential": {"name": "harmonic", "stiffness": -1.0e4},
        "initial": {"kind": "points", "x": [[1.0]], "v": [[0.0]], "masses": [1.0]},
    }
    with pytest.warns(RuntimeWarning):
        assert main(["-q", "run", str(write_config(tmp_path, raw)), "--out", str(tmp_path / "o")]) == 3


def test_converge_dt_ladder(tmp_path):
    out = tmp_path / "ladder.csv"
    assert main(["-q", "converge", str(CONFIGS / "vlasov_quadratic.yaml"), "--ladder", "dt=0.04,0.02,0.01", "--out", str(out)]) == 0
    rows = list(csv.DictReader(io.StringIO(out.read_text())))
    d = [float(r["distance"]) for r in rows]
    assert len(d) == 2 and d[0] > d[1] > 0


def test_converge_identical_entries(capsys):
    assert main(["-q", "converge", str(CONFIGS / "vlasov_quadratic.yaml"), "--ladder", "dt=0.01,0.01"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert float(rows[0]["distance"]) == 0.0


def test_converge_n_ladder_decreases(capsys):
    assert main(["-q", "converge", str(CONFIGS / "vlasov_gaussian.yaml"), "--ladder", "N=8,16,32,64", "--times", "0.5"]) == 0
    d = [float(r["distance"]) for r in csv.DictReader(io.StringIO(capsys.readouterr().out))]
    assert d[0] > d[1] > d[2]


def test_converge_bad_ladder():
    assert main(["-q", "converge", str(CONFIGS / "vlasov_quadratic.yaml"), "--ladder", "steps=1,2"]) == 2
    assert main(["-q", "converge", str(CONFIGS / "newton_single.yaml"), "--ladder", "N=1,2"]) == 2


@pytest.mark.skipif(shutil.which("semiflow") is None, reason="console script not installed")
def test_console_script(tmp_path):
    res = subprocess.run(["semiflow", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "semiflow" in res.stdout
    res = subprocess.run([sys.executable, "-m", "semiflow.cli", "-q", "verify", "nope"], capture_output=True, text=True)
    assert res.returncode == 2 and "unknown suite" in res.stderr
