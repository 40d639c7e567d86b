import json
import subprocess
import sys

import numpy as np

from shapelim.cli import run
from shapelim.envelope import EnvelopeFunctionalTable, envelope_table
from shapelim.experiments.montecarlo import MCRun, mc_pointwise
from shapelim.mle import fit_log_concave
from shapelim.model import load_sample, make_density_model


def test_fit_from_file(tmp_path):
    data = tmp_path / "x.txt"
    data.write_text("\n".join(str(v) for v in np.random.default_rng(0).normal(size=50)) + "\n")
    out = tmp_path / "fit"
    assert run(["fit", str(out), "--input", str(data), "--emit-curves", str(out)]) == 0
    rec = json.loads((out / "fit.json").read_text())
    fit = fit_log_concave(load_sample(data))
    assert rec["knots"] == fit.knots.tolist() and rec["values"] == fit.values.tolist()
    assert rec["residuals"]["pass"] is True
    assert rec["mode"] in rec["knots"]
    man = json.loads((out / "manifest.json").read_text())
    assert str(data) in man["inputs"] and "curves.csv" in man["outputs"]
    header = (out / "curves.csv").read_text().splitlines()[0]
    assert header == "x,f_hat,phi_hat,F_hat,hazard_hat"


def test_fit_from_model_writes_truth_columns(tmp_path):
    out = tmp_path / "g"
    assert run(["fit", str(out), "--family", "gamma", "--params", '{"shape": 2}', "--n", "60",
                "--seed", "3", "--emit-curves", str(out), "--grid", "51"]) == 0
    header = (out / "curves.csv").read_text().splitlines()[0].split(",")
    assert header[-4:] == ["f0", "phi0", "F0", "hazard0"]


def test_envelope_matches_library(tmp_path):
    out = tmp_path / "env"
    assert run(["envelope", str(out), "--k", "2", "--K", "1", "--h", "0.01", "--reps", "3",
                "--seed", "5", "--workers", "1"]) == 0
    back = EnvelopeFunctionalTable.read(out / "envelope.csv", out / "envelope.json")
    lib = envelope_table(2, 1.0, 0.01, 3, 5, workers=1)
    np.testing.assert_array_equal(back.H2_0, lib.H2_0)
    np.testing.assert_array_equal(back.argmax, lib.argmax)


def test_mc_and_compare(tmp_path):
    mc_dir = tmp_path / "mc"
    assert run(["mc", str(mc_dir), "--family", "gaussian", "--x0", "0", "--n", "50,100",
                "--reps", "5", "--seed", "2", "--workers", "1"]) == 0
    back = MCRun.read(mc_dir / "mc.csv", mc_dir / "mc.json")
    lib = mc_pointwise(make_density_model("gaussian"), [50, 100], 5, 2, x0=0.0, workers=1)
    np.testing.assert_array_equal(back.raw["f"], lib.raw["f"])
    env = tmp_path / "env"
    assert run(["envelope", str(env), "--K", "1", "--h", "0.01", "--reps", "5", "--seed", "1"]) == 0
    cmp_dir = tmp_path / "cmp"
    args = ["compare", str(cmp_dir), "--mc", str(mc_dir), "--limit-table", str(env / "envelope.csv")]
    assert run(args) == 0
    rep = json.loads((cmp_dir / "compare.json").read_text())
    assert rep["k"] == 2 and "f" in rep["rows"] and rep["pass"]
    # a threshold nothing can meet
    assert run(args + ["--ks-max", "-1"]) == 3
    assert (cmp_dir / "manifest.json").exists()


def test_small_commands(tmp_path):
    assert run(["minimax", str(tmp_path / "mm"), "--family", "gaussian"]) == 0
    mm = json.loads((tmp_path / "mm" / "minimax.json").read_text())
    assert mm["poly_roots"]["2"] == 3.0
    assert run(["identities", str(tmp_path / "id"), "--intervals", "2", "--j-max", "2"]) == 0
    assert run(["table", str(tmp_path / "tb"), "--family", "quartic", "--printed-gammas"]) == 0
    tb = json.loads((tmp_path / "tb" / "constants.json").read_text())
    assert tb["k"] == 4 and "gamma1_printed" in tb


def test_usage_errors(tmp_path, capsys):
    assert run(["fit", str(tmp_path / "a")]) == 2
    assert run(["fit", str(tmp_path / "a"), "--input", str(tmp_path / "missing.txt")]) == 2
    assert run(["mc", str(tmp_path / "b"), "--family", "gaussian", "--n", "10"]) == 2
    assert run(["table", str(tmp_path / "c"), "--family", "uniform", "--x0", "2"]) == 2
    assert run(["nonsense"]) == 2
    bad = tmp_path / "bad.txt"
    bad.write_text("1\nfoo\n")
    assert run(["fit", str(tmp_path / "d"), "--input", str(bad)]) == 2
    assert "bad.txt:2" in capsys.readouterr().err


def test_config_precedence_and_errors(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"command": "envelope", "reps": 7, "h": 0.01, "seed": 4}))
    assert run(["envelope", "--config", str(cfg), "--reps", "9", "--dump-config"]) == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["reps"] == 9 and rec["h"] == 0.01 and rec["seed"] == 4 and rec["command"] == "envelope"
    # the dumped record is itself a valid config
    again = tmp_path / "again.json"
    again.write_text(json.dumps(rec))
    assert run(["envelope", "--config", str(again), "--dump-config"]) == 0
    assert json.loads(capsys.readouterr().out) == rec
    cfg.write_text(json.dumps({"command": "envelope", "bogus": 1}))
    assert run(["envelope", "--config", str(cfg)]) == 2
    cfg.write_text('{"reps": 3,\n  oops}')
    assert run(["envelope", "--config", str(cfg)]) == 2
    assert "c.json:2:" in capsys.readouterr().err
    cfg.write_text(json.dumps({"command": "fit"}))
    assert run(["envelope", "--config", str(cfg)]) == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "shapelim.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("shapelim ")
