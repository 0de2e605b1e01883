import csv
import json

import pytest

from opgrowth import cli
from opgrowth.protocol import fit_slope, runtime_scaling


def test_bounds_json(capsys):
    assert cli.run(["bounds", "--alpha", "1.5", "--r", "127", "--delta", "0.5"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["regime"] == "1<alpha<2"
    assert out["inputs"]["R"] == 127
    assert out["config"]["delta"] == 0.5 and "seed" in out["config"]


def test_bounds_files(tmp_path):
    assert cli.run(["bounds", "--alpha", "2.5", "--r", "300", "--epsilon", "0.2", "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader(open(tmp_path / "bounds.csv")))
    assert rows[0]["regime"] == "alpha>2" and rows[0]["R"] == "255"
    rep = json.loads((tmp_path / "bounds.json").read_text())
    assert "concentration" in rep["extras"]
    assert not list(tmp_path.glob(".*tmp"))


def test_unknown_flag_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.run(["bounds", "--bogus", "1"])
    assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_unknown_subcommand_exits_2():
    with pytest.raises(SystemExit) as exc:
        cli.run(["frobnicate"])
    assert exc.value.code == 2


def test_config_file(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nalpha = 2.0\nr = 63\ndelta=0.25\n")
    assert cli.run(["bounds", "--config", str(cfg), "--delta", "0.5"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["regime"] == "alpha=2" and out["inputs"]["delta"] == 0.5


@pytest.mark.parametrize("text", ["bogus = 1\n", "alpha 2\n", "trials = many\n"])
def test_bad_config_exits_2(tmp_path, text):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(text)
    assert cli.run(["bounds", "--config", str(cfg), "--r", "7"]) == 2


def test_missing_parameter_exits_2():
    assert cli.run(["bounds"]) == 2
    assert cli.run(["protocol", "--alpha", "1.5"]) == 2


def test_invalid_value_exits_2():
    assert cli.run(["bounds", "--alpha", "0.5", "--r", "7"]) == 2


def test_protocol(tmp_path):
    assert cli.run(["protocol", "--r", "10000", "--out", str(tmp_path)]) == 0
    out = json.loads((tmp_path / "protocol.json").read_text())
    assert out["params"]["m"] == 21 and out["n_sites"] == 194481
    assert out["counts"] == {"zz": 15, "depolarize": 15}
    sched = json.loads((tmp_path / "schedule.json").read_text())
    assert len(sched["layers"]) == 30


def test_reduced_outputs(tmp_path):
    cfg = tmp_path / "reduced.cfg"
    cfg.write_text("d = 1\nalpha = 1.5\nm = 6\nq_star = 3\ntrials = 12\nseed = 4\nlambda_threshold = 0.05\n")
    assert cli.run(["reduced", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    rows = list(csv.DictReader(open(tmp_path / "o" / "trajectory.csv")))
    assert list(rows[0]) == ["layer_index", "mean_occupancy", "p05", "p95"]
    assert len(rows) == 2**4 - 1
    summ = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summ["success"]["threshold"] == 0.05 and summ["config"]["trials"] == 12


def test_reduced_bit_identical(tmp_path):
    args = ["reduced", "--m", "5", "--q-star", "3", "--trials", "8", "--seed", "11", "--threads", "1"]
    assert cli.run(args + ["--out", str(tmp_path / "a")]) == 0
    assert cli.run(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("trajectory.csv", "summary.json"):
        a = (tmp_path / "a" / name).read_text().replace(str(tmp_path / "a"), "")
        b = (tmp_path / "b" / name).read_text().replace(str(tmp_path / "b"), "")
        assert a == b


def test_oracle_compare(tmp_path):
    assert cli.run(["oracle-compare", "--trials", "10", "--scale", "0.3", "--out", str(tmp_path)]) == 0
    out = json.loads((tmp_path / "oracle.json").read_text())
    assert out["branching"]["max_slack"] < 1e-9


def _read_sweep(path):
    lines = path.read_text().splitlines()
    comments = [ln for ln in lines if ln.startswith("#")]
    rows = list(csv.DictReader([ln for ln in lines if not ln.startswith("#")]))
    return comments, rows


def test_sweep_runtime_column(tmp_path):
    rs = "1000,3000,10000,30000,100000,1000000"
    assert cli.run(["sweep", "--alpha", "1.5", "--grid", rs, "--out", str(tmp_path)]) == 0
    comments, rows = _read_sweep(tmp_path / "sweep.csv")
    assert any(c.startswith("# t_qstar") for c in comments)
    t = [float(r["t_qstar"]) for r in rows]
    assert all(a < b for a, b in zip(t, t[1:]))
    table = [(float(r["r"]), float(r["t_qstar"])) for r in rows]
    ref = runtime_scaling([float(x) for x in rs.split(",")], 1.5)
    assert fit_slope(table) == pytest.approx(fit_slope(ref), rel=1e-12)


def test_sweep_with_trials_has_seed(tmp_path):
    assert cli.run(["sweep", "--sweep-param", "m", "--grid", "3,5", "--q-star", "2", "--trials", "5",
                    "--seed", "9", "--out", str(tmp_path)]) == 0
    _, rows = _read_sweep(tmp_path / "sweep.csv")
    assert [r["seed"] for r in rows] == ["9", "9"]
    assert all(0 <= float(r["success"]) <= 1 for r in rows)


@pytest.mark.parametrize("grid", ["", "geom:1:10:0", "lin:1"])
def test_sweep_bad_grid(grid, tmp_path):
    assert cli.run(["sweep", "--grid", grid, "--out", str(tmp_path)]) == 2


def test_verify_quick(tmp_path):
    code = cli.run(["verify", "--scale", "0.05", "--out", str(tmp_path)])
    rep = json.loads((tmp_path / "verify.json").read_text())
    assert code == 0 and rep["passed"]
    assert {c["name"] for c in rep["checks"]} >= {"holder", "markov_step", "reduced_vs_exact"}


def test_atomic_write_replaces(tmp_path):
    p = tmp_path / "x" / "f.txt"
    cli.atomic_write(p, "one")
    cli.atomic_write(p, "two")
    assert p.read_text() == "two" and len(list(p.parent.iterdir())) == 1
