import json
import subprocess
import sys
from pathlib import Path

import pytest

from entropic_collapse.cli import main
from entropic_collapse.config import set_value

ROOT = Path(__file__).parent.parent
CONFIGS = ROOT / "configs"


def small(tmp_path, name, **overrides):
    text = (CONFIGS / name).read_text()
    for k, v in overrides.items():
        text = set_value(text, k.replace("__", "."), str(v))
    p = tmp_path / name
    p.write_text(text)
    return p


def test_simulate_writes_artifacts(tmp_path):
    cfg = small(tmp_path, "two_level.ini", ensemble__n_traj=2000)
    out = tmp_path / "out"
    assert main(["simulate", str(cfg), "--out", str(out)]) == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == ["events.csv", "manifest.json", "observables.csv", "report.json"]
    rep = json.loads((out / "report.json").read_text())
    assert rep["gamma0_rel_error"] < 0.01
    assert rep["density_comparison"]["within_3_se"]
    man = json.loads((out / "manifest.json").read_text())
    assert man["seeds"]["master_seed"] == 20240601 and "numpy" in man["versions"]
    head = (out / "observables.csv").read_text().splitlines()[0]
    assert head == "t,obs_name,mean,var,n"


def test_rerun_and_threads_are_byte_identical(tmp_path):
    cfg = small(tmp_path, "custom_matrix.ini", ensemble__n_traj=600)
    outs = []
    for i, threads in enumerate((1, 1, 3)):
        out = tmp_path / f"o{i}"
        assert main(["simulate", str(cfg), "--out", str(out), "--threads", str(threads)]) == 0
        outs.append(out)
    for name in ("observables.csv", "events.csv"):
        ref = (outs[0] / name).read_bytes()
        assert all((o / name).read_bytes() == ref for o in outs[1:])


def test_json_format(tmp_path):
    cfg = small(tmp_path, "criterion.ini", ensemble__n_traj=20)
    out = tmp_path / "j"
    assert main(["simulate", str(cfg), "--out", str(out), "--format", "json"]) == 0
    data = json.loads((out / "observables.json").read_text())
    assert data["n"] == 20


def test_validate_bundled_configs(capsys):
    assert main(["validate", *map(str, sorted(CONFIGS.glob("*.ini")))]) == 0


def test_validation_error_exit_and_message(tmp_path, capsys):
    bad = small(tmp_path, "two_level.ini", collapse__t0=-1)
    assert main(["simulate", str(bad), "--out", str(tmp_path / "x")]) == 3
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "validation"
    assert any(e["field"] == "collapse.t0" for e in err["errors"])
    assert main(["validate", str(bad)]) == 3


def test_usage_and_io_exits(tmp_path, capsys):
    assert main(["frobnicate"]) == 2
    assert main(["simulate"]) == 2
    assert main(["simulate", str(tmp_path / "missing.ini")]) == 1
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "io"


def test_bounds_command(capsys):
    assert main(["bounds", str(CONFIGS / "experiments.txt")]) == 0
    out = capsys.readouterr().out
    assert "7.0651865" in out
    assert "discrepancy flagged" in out


def test_oracle_command(capsys):
    assert main(["oracle", "two_level_damped"]) == 0
    assert capsys.readouterr().out.startswith("PASS")


def test_criterion_sweep_is_monotone(tmp_path, capsys):
    cfg = small(tmp_path, "criterion.ini", ensemble__n_traj=100)
    assert main(["sweep", str(cfg), "--axis", "collapse.t0=1.0,1.4,1.5,2.0,4.0",
                 "--out", str(tmp_path / "s")]) == 0
    rows = (tmp_path / "s" / "sweep.csv").read_text().splitlines()
    head = rows[0].split(",")
    rate = [float(r.split(",")[head.index("event_rate")]) for r in rows[1:]]
    assert rate[0] == rate[1] == 0
    assert all(a <= b * 1.2 for a, b in zip(rate, rate[1:]))
    assert rate[2] > 0


def test_sweep_bad_value_lands_in_row(tmp_path, capsys):
    cfg = small(tmp_path, "criterion.ini", ensemble__n_traj=10)
    assert main(["sweep", str(cfg), "--axis", "collapse.gamma0=0.2,-3"]) == 0
    out = capsys.readouterr().out
    assert "validation" in out


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "entropic_collapse", "oracle", "criterion_limits"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "PASS" in r.stdout
