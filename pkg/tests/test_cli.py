import csv
import json

import numpy as np
import pytest

from ctad.cli import main


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_split_outputs(synthetic_csv, tmp_path, capsys):
    assert main(["split", "--data", synthetic_csv, "--out", str(tmp_path), "--emit-order", str(tmp_path / "o.txt")]) == 0
    assert "blobs,0,90,90,15" in capsys.readouterr().out
    order = [int(v) for v in (tmp_path / "o.txt").read_text().split()]
    assert order == sorted(order) and len(order) == 105
    assert len(_rows(tmp_path / "test.csv")) == 105


def test_calibrate_with_cached_centroids(synthetic_csv, tmp_path):
    cj = tmp_path / "c.json"
    assert main(["fit-kmeans", "--data", synthetic_csv, "--k", "3", "--out", str(cj)]) == 0
    out = tmp_path / "cal"
    assert main(["calibrate", "--data", synthetic_csv, "--k", "3", "--centroids", str(cj), "--out", str(out)]) == 0
    fresh = tmp_path / "cal2"
    assert main(["calibrate", "--data", synthetic_csv, "--k", "3", "--out", str(fresh)]) == 0
    a, b = _rows(out / "calibration.csv"), _rows(fresh / "calibration.csv")
    assert list(a[0]) == ["row_index", "base_score", "delta", "calibrated_score", "label"]
    assert a == b
    meta = json.loads((out / "config.json").read_text())
    assert meta["calibrator"]["k"] == 3 and meta["detector"] == "knn"


def test_external_scores_calibrate_like_builtin(synthetic_csv, tmp_path):
    scores = tmp_path / "s.txt"
    assert main(["score", "--data", synthetic_csv, "--detector", "ecod", "--out", str(scores)]) == 0
    ext, own = tmp_path / "ext", tmp_path / "own"
    assert main(["calibrate", "--data", synthetic_csv, "--detector", f"external:{scores}", "--out", str(ext)]) == 0
    assert main(["calibrate", "--data", synthetic_csv, "--detector", "ecod", "--out", str(own)]) == 0
    ra, rb = _rows(ext / "calibration.csv"), _rows(own / "calibration.csv")
    assert [(r["delta"], r["calibrated_score"]) for r in ra] == [(r["delta"], r["calibrated_score"]) for r in rb]


def test_bench_exit_codes(synthetic_csv, tmp_path):
    assert main(["bench", "--data", synthetic_csv, "--seed", "0", "1", "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "b" / "summary.csv").exists()
    short = tmp_path / "short.txt"
    short.write_text("1\n")
    assert main(["bench", "--data", synthetic_csv, "--detector", f"external:{short}"]) == 2
    assert main(["bench", "--data", synthetic_csv, "--detector", "svm"]) == 1
    assert main(["bench", "--data", synthetic_csv, "--m", "-1"]) == 1


def test_config_errors_exit_one(tmp_path):
    with pytest.raises(SystemExit) as e:
        main(["calibrate", "--data", "x.csv", "--calibrator", "magic", "--out", str(tmp_path)])
    assert e.value.code == 1
    with pytest.raises(SystemExit) as e:
        main([])
    assert e.value.code == 1
    assert main(["split", "--data", str(tmp_path / "missing.csv")]) == 1


def test_sweep_writes_long_csv(synthetic_csv, tmp_path):
    assert main(["sweep", "--data", synthetic_csv, "--param", "lambda", "--values", "0", "1", "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "sweep_lambda.csv")
    assert [r["value"] for r in rows] == ["0.0", "1.0"]
    assert rows[0]["auc_roc_base"] == rows[0]["auc_roc_cal"]


def test_ot_debug(tmp_path, capsys):
    c = tmp_path / "c.csv"
    c.write_text("0,2\n")
    assert main(["ot", "--cost", str(c)]) == 0
    assert capsys.readouterr().out.strip().splitlines()[-1] == "cost,1.0"


def test_theory_check_report(tmp_path):
    out = tmp_path / "t.json"
    assert main(["theory-check", "--runs", "2", "--trials", "30", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["runs"] == 2 and len(rep["checks"]) == 2
    assert {"empirical_gap", "predicted_floor", "holds", "eps_hat", "eta_hat"} <= rep["checks"][0].keys()
    assert len(rep["variance"]["rows"]) == 4


def test_profile(capsys):
    assert main(["profile", "--n-samples", "50"]) == 0
    assert json.loads(capsys.readouterr().out)["n_samples"] == 50
