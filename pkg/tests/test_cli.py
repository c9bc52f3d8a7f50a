import csv
import json

import pytest

from erasable_records import cli

BASE = {"game": {"g": 2, "l": 1}, "population": {"hat_delta": 0.95, "bar_delta": 0.9}}


def _write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def _run(tmp_path, command, cfg, out="out", extra=()):
    d = tmp_path / out
    code = cli.main([command, "--config", _write(tmp_path, cfg), "--out", str(d), *extra])
    return code, d


def _read_csv(path):
    with open(path) as fh:
        return [r for r in csv.reader(line for line in fh if not line.startswith("#"))]


def test_solve_writes_equilibrium(tmp_path):
    code, d = _run(tmp_path, "solve", BASE)
    assert code == 0
    eq = json.loads((d / "equilibrium.json").read_text())
    assert eq["status"] == "solved" and eq["residuals_within_tolerance"]
    assert eq["q"] == pytest.approx(0.114571917891233, abs=1e-10)
    assert _read_csv(d / "margins.csv")[0] == ["margin", "value"]


def test_infeasible_is_negative_outcome(tmp_path):
    cfg = {**BASE, "population": {"hat_delta": 0.95, "bar_delta": 0.99}}
    code, d = _run(tmp_path, "solve", cfg)
    assert code == 2
    info = json.loads((d / "infeasible.json").read_text())
    assert info["status"] == "infeasible" and "upper_endpoint" in info
    assert not (d / "equilibrium.json").exists()


def test_supermodular_solve_rejected(tmp_path):
    code, _ = _run(tmp_path, "solve", {**BASE, "game": {"g": 1, "l": 2}})
    assert code == 5


def test_malformed_config(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{"game": {"g": 2,, }')
    d = tmp_path / "out"
    assert cli.main(["solve", "--config", str(p), "--out", str(d)]) == 1
    assert "bad.json:1:" in capsys.readouterr().err
    assert not d.exists()


@pytest.mark.parametrize("cfg", [
    {**BASE, "extra": 1},
    {**BASE, "game": {"g": -1, "l": 1}},
    {**BASE, "population": {"hat_delta": 1.0, "bar_delta": 0.9}},
    {**BASE, "monitoring": {"type": "noisy"}},
    {**BASE, "command": "scan"},
])
def test_invalid_configs(tmp_path, cfg):
    code, d = _run(tmp_path, "solve", cfg)
    assert code == 1
    assert not d.exists()


def test_missing_config_file(tmp_path):
    assert cli.main(["solve", "--config", str(tmp_path / "nope.json")]) == 1


def test_scan_outputs(tmp_path):
    cfg = {"game": {"g": 2, "l": 1}, "scan": {"hat_delta": [0.95, 0.99], "resolution": 0.01}}
    code, d = _run(tmp_path, "scan", cfg)
    assert code == 0
    rows = _read_csv(d / "intervals.csv")
    assert len(rows) == 3 and rows[1][4] == "1"
    assert len(_read_csv(d / "scan.csv")) > 100


def test_verify_and_bounds(tmp_path):
    code, d = _run(tmp_path, "verify", BASE, out="v")
    assert code == 0
    assert json.loads((d / "verify.json").read_text())["certified"]
    code, d = _run(tmp_path, "bounds", BASE, out="b")
    assert code == 0
    assert {p.name for p in d.iterdir()} == {"constants.json", "bands.csv", "theorem4.json"}


def test_purify_outputs(tmp_path):
    cfg = {**BASE, "purify": {"epsilons": [0.1, 0.01]}}
    code, d = _run(tmp_path, "purify", cfg)
    assert code == 0
    text = (d / "purification.csv").read_text()
    assert text.startswith("#") and "evidence, not proof" in text
    code, d = _run(tmp_path, "purify", {**cfg, "game": {"g": 1, "l": 2}, "purify": {"epsilons": [0.1, 0.01],
                                                                                 "starts": [0.5]}}, out="s")
    assert code == 2
    summary = json.loads((d / "purification.json").read_text())
    assert not summary["passed"] and summary["certificate"][0]["certificate_nonpositive"]


def test_simulate_is_byte_reproducible(tmp_path):
    cfg = {**BASE, "seed": 3, "simulate": {"agents": 5000, "periods": 200, "burn_in": 50, "tolerance": 0.02}}
    c1, d1 = _run(tmp_path, "simulate", cfg, out="a")
    c2, d2 = _run(tmp_path, "simulate", cfg, out="b")
    assert c1 == c2 == 0
    assert (d1 / "trace.csv").read_bytes() == (d2 / "trace.csv").read_bytes()
    assert (d1 / "summary.json").read_bytes() == (d2 / "summary.json").read_bytes()
    _, d3 = _run(tmp_path, "simulate", cfg, out="c", extra=("--seed", "4"))
    assert (d1 / "trace.csv").read_bytes() != (d3 / "trace.csv").read_bytes()
    assert json.loads((d3 / "summary.json").read_text())["seed"] == 4


def test_sweep_order_independent_of_threads(tmp_path, monkeypatch):
    cfg = {"sweep": {"g": [3, 2], "l": [1, 0.5], "hat_delta": [0.99, 0.9], "bar_delta": [0.9, 0.5]}}
    monkeypatch.setenv(cli.THREADS_ENV, "1")
    _, d1 = _run(tmp_path, "sweep", cfg, out="one")
    monkeypatch.setenv(cli.THREADS_ENV, "4")
    _, d4 = _run(tmp_path, "sweep", cfg, out="four")
    a = (d1 / "sweep.csv").read_bytes()
    assert a == (d4 / "sweep.csv").read_bytes()
    rows = _read_csv(d1 / "sweep.csv")[1:]
    assert len(rows) == 16
    keys = [tuple(map(float, r[:4])) for r in rows]
    assert keys == sorted(keys)


def test_bad_thread_count(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.THREADS_ENV, "zero")
    code, _ = _run(tmp_path, "sweep", {"sweep": {"g": [2], "l": [1], "hat_delta": [0.9], "bar_delta": [0.5]}})
    assert code == 1


def test_output_dir_precedence(tmp_path, monkeypatch):
    cfg = _write(tmp_path, {**BASE, "output_dir": str(tmp_path / "from_cfg")})
    assert cli.main(["solve", "--config", cfg]) == 0
    assert (tmp_path / "from_cfg" / "equilibrium.json").exists()
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "from_env"))
    assert cli.main(["solve", "--config", cfg]) == 0
    assert (tmp_path / "from_env" / "equilibrium.json").exists()
    assert cli.main(["solve", "--config", cfg, "--out", str(tmp_path / "from_flag")]) == 0
    assert (tmp_path / "from_flag" / "equilibrium.json").exists()


def test_seed_out_of_range(tmp_path):
    code, _ = _run(tmp_path, "simulate", BASE, extra=("--seed", str(2**64)))
    assert code == 1
