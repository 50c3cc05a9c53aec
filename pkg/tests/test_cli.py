from __future__ import annotations

import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from mmdust.cli import common_grid_indices, main
from mmdust.io import read_path, summary_path


@pytest.fixture
def cox_csv(tmp_path):
    out = tmp_path / "cox.csv"
    assert main(["simulate", "--design", "cox_sec412", "--seed", "1", "--n", "80", "--out", str(out)]) == 0
    return out


def fit_args(data, out, *extra):
    return ["fit", "--data", str(data), "--loss", "cox", "--structure", "pairs", "--pairs", "1-2,2-3,4-5",
            "--stack-identity", "--eps", "0.5", "--Nm", "3", "--Nd", "20", "--out", str(out), *extra]


def test_simulate_outputs(tmp_path, cox_csv):
    truth = json.loads((tmp_path / "cox_truth.json").read_text())
    assert truth["design"] == "cox_sec412" and len(truth["coef"]) == 10
    header = cox_csv.read_text().splitlines()[0].split(",")
    assert header[-2:] == ["time", "status"] and len(header) == 12
    tree_out = tmp_path / "tree.csv"
    assert main(["simulate", "--design", "cox_tree_appE", "--seed", "0", "--n", "60",
                 "--out", str(tree_out)]) == 0
    assert (tmp_path / "tree_tree.txt").exists()


def test_fit_writes_path(tmp_path, cox_csv):
    out = tmp_path / "fit"
    assert main(fit_args(cox_csv, out)) == 0
    path = read_path(tmp_path / "fit.csv")
    assert len(path) > 1 and path.points[0].beta.shape == (10,)
    rows = list(csv.DictReader(summary_path(tmp_path / "fit.csv").open()))
    assert len(rows) == len(path)


def test_fit_json_and_tree(tmp_path):
    data = tmp_path / "t.csv"
    main(["simulate", "--design", "cox_tree_appE", "--seed", "2", "--n", "80", "--out", str(data)])
    out = tmp_path / "tfit"
    rc = main(["fit", "--data", str(data), "--loss", "cox", "--structure", "tree",
               "--structure-file", str(tmp_path / "t_tree.txt"), "--eps", "1.0", "--Nd", "10",
               "--max-points", "5", "--format", "json", "--out", str(out)])
    assert rc == 0
    doc = json.loads((tmp_path / "tfit.json").read_text())
    assert doc["coefficient_scale"] == "standardized"
    assert len(doc["points"][0]["beta"]) == 67
    assert len(doc["scales"]["column_scales"]) == 42


def test_fit_is_deterministic(tmp_path, cox_csv):
    a, b = tmp_path / "a", tmp_path / "b"
    main(fit_args(cox_csv, a, "--seed", "3"))
    main(fit_args(cox_csv, b, "--seed", "3"))
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a_summary.csv").read_bytes() == (tmp_path / "b_summary.csv").read_bytes()


def test_config_file(tmp_path, cox_csv):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"data = {cox_csv}\nloss = cox\neps = 0.5\nNd = 20\nstack-identity = true\n"
                   f"out = {tmp_path / 'cfg'}\n")
    assert main(["--config", str(cfg), "fit"]) == 0
    explicit = tmp_path / "exp"
    main(["fit", "--data", str(cox_csv), "--loss", "cox", "--eps", "0.5", "--Nd", "20",
          "--stack-identity", "--out", str(explicit)])
    assert (tmp_path / "cfg.csv").read_bytes() == (tmp_path / "exp.csv").read_bytes()
    # explicit flags override the file
    assert main(["--config", str(cfg), "fit", "--eps", "1.0", "--out", str(tmp_path / "ovr")]) == 0
    assert read_path(tmp_path / "ovr.csv").eps == pytest.approx(1.0)


def test_oracle_check_and_sweep(tmp_path):
    data = tmp_path / "sq.csv"
    rng = np.random.default_rng(0)
    X = rng.standard_normal((30, 4))
    y = X @ [1.0, 1.0, 0.0, -1.0] + 0.3 * rng.standard_normal(30)
    np.savetxt(data, np.column_stack([X, y]), delimiter=",", header="a,b,c,d,y", comments="")
    base = ["--data", str(data), "--loss", "squared", "--structure", "chain", "--Nd", "0"]
    oc = tmp_path / "oc.csv"
    assert main(["oracle-check", *base, "--eps", "0.05", "--lambdas", "lambda0,2.0,0.5",
                 "--jobs", "2", "--out", str(oc)]) == 0
    rows = list(csv.DictReader(oc.open()))
    assert len(rows) == 3 and all(float(r["oracle_kkt"]) < 1e-6 for r in rows)
    assert all(float(r["sup_error"]) < 0.5 for r in rows)
    sw = tmp_path / "sw.csv"
    assert main(["sweep", *base, "--eps-list", "0.4,0.2,0.1", "--out", str(sw)]) == 0
    rows = list(csv.DictReader(sw.open()))
    assert [float(r["eps"]) for r in rows] == [0.4, 0.2, 0.1]
    assert all(int(r["n_compared"]) > 0 for r in rows)


def test_common_grid():
    assert common_grid_indices([0.4, 0.2, 0.1, 0.05]) == (0.4, [1, 2, 4, 8])
    with pytest.raises(ValueError):
        common_grid_indices([0.4, 0.3])


def test_errors_are_json(tmp_path, capsys):
    assert main(["fit", "--data", str(tmp_path / "nope.csv"), "--loss", "squared", "--out", "x"]) == 1
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "DataError"
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = red\n")
    assert main(["--config", str(bad), "fit"]) == 1


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "mmdust.cli", "simulate", "--design", "logistic_sec411",
                           "--n", "20", "--out", str(tmp_path / "l.csv")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    proc = subprocess.run([sys.executable, "-m", "mmdust.cli", "fit", "--loss", "squared"],
                          capture_output=True, text=True)
    assert proc.returncode != 0
