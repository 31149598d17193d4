import json

import numpy as np
import pytest

from ctad.bench import BenchConfig, profile_ot, run_bench, sweep


def test_none_passthrough(synthetic_csv):
    rep = run_bench(BenchConfig(datasets=(synthetic_csv,), detectors=("pca",), calibrators=("none",)))
    (cell,) = rep.cells
    assert cell["status"] == "ok"
    assert cell["auc_roc_base"] == cell["auc_roc_cal"]
    assert cell["auc_pr_base"] == cell["auc_pr_cal"]


def test_grid_completeness_and_failures(synthetic_csv, tmp_path):
    bad = tmp_path / "short.txt"
    bad.write_text("0.5\n")
    cfg = BenchConfig(
        datasets=(synthetic_csv,),
        detectors=("knn", f"external:{bad}"),
        calibrators=("ctad", "centroid"),
        seeds=(0, 1),
    )
    rep = run_bench(cfg)
    keys = [(c["detector"], c["calibrator"], c["seed"]) for c in rep.cells]
    assert len(keys) == len(set(keys)) == 2 * 2 * 2
    assert len(rep.failures) == 4
    assert all(f["detector"].startswith("external:") for f in rep.failures)


def test_report_deterministic(overlap_csv, tmp_path):
    cfg = dict(datasets=(overlap_csv,), detectors=("knn", "iforest"), calibrators=("ctad", "mahalanobis"), seeds=(0, 1))
    a, b = tmp_path / "a", tmp_path / "b"
    run_bench(BenchConfig(**cfg)).write(a)
    run_bench(BenchConfig(**cfg, jobs=2)).write(b)
    for name in ("cells.csv", "summary.csv", "gap.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    ja, jb = json.loads((a / "report.json").read_text()), json.loads((b / "report.json").read_text())
    ja.pop("timing"), jb.pop("timing")
    assert ja == jb
    assert ja["seeds"] == [0, 1] and ja["config"]["detectors"] == ["knn", "iforest"]


def test_timings_reported(synthetic_csv):
    rep = run_bench(BenchConfig(datasets=(synthetic_csv,), detectors=("iforest",)))
    (t,) = rep.timings
    assert t["delta_ms_per_sample"] > 0 and t["base_ms_per_sample"] > 0
    assert rep.runtime()[0]["ot_ms"] > 0


def test_lambda_sweep_anchor(overlap_csv):
    rows = sweep(BenchConfig(datasets=(overlap_csv,), detectors=("knn", "ecod")), "LAMBDA", [0.0, 0.5, 1.0])
    anchors = [r for r in rows if r["value"] == 0.0]
    assert len(anchors) == 2
    for r in anchors:
        assert r["auc_roc_cal"] == r["auc_roc_base"] and r["auc_pr_cal"] == r["auc_pr_base"]


def test_k_sweep_flat(overlap_csv):
    rows = sweep(BenchConfig(datasets=(overlap_csv,)), "K", list(range(3, 11)))
    auc = [r["auc_roc_cal"] for r in rows]
    assert max(auc) - min(auc) <= 0.05


def test_m_sweep_deterministic(overlap_csv, tmp_path):
    cfg = BenchConfig(datasets=(overlap_csv,), out_dir=str(tmp_path))
    assert sweep(cfg, "M", [5, 10, 20]) == sweep(cfg, "M", [5, 10, 20])
    assert (tmp_path / "sweep_m.csv").exists()


def test_sweep_rejects_bad_input(synthetic_csv):
    cfg = BenchConfig(datasets=(synthetic_csv,))
    with pytest.raises(ValueError):
        sweep(cfg, "RHO", [1])
    with pytest.raises(ValueError):
        sweep(cfg, "K", [])


def test_config_requires_grid():
    with pytest.raises(ValueError):
        BenchConfig(datasets=())
    with pytest.raises(ValueError):
        BenchConfig(datasets=("x.csv",), seeds=())


def test_profile_small_problem_faster():
    small = profile_ot(m=0, n_samples=1500)
    big = profile_ot(m=20, n_samples=1500)
    assert small["median_ms"] < big["median_ms"]
    assert big["p95_over_median"] < 5
    assert np.isfinite(big["p95_ms"])
