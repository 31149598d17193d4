"""Benchmark grid, hyperparameter sweeps and OT runtime profiling.

Each (dataset, seed) pair is one unit of work: it owns its split, its
standardizer and its fitted calibrators, and it evaluates every configured
detector against every calibrator. Units are independent, so they run in a
process pool and are merged in configuration order.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from ctad.calibrate import CalibratorConfig, deltas, fit_calibrator, fuse
from ctad.dataset import fit_standardizer, load_csv, split
from ctad.detectors import make_detector
from ctad.metrics import evaluate, paired_t_test_one_tailed
from ctad.ot import pairwise_distances, solve_ot
from ctad.seeding import derive_seed

logger = logging.getLogger(__name__)

CELL_FIELDS = [
    "dataset", "detector", "calibrator", "m", "k", "lam", "seed", "status",
    "n_train", "n_test", "n_pos",
    "auc_roc_base", "auc_roc_cal", "auc_pr_base", "auc_pr_cal",
    "delta_mean_normal", "delta_mean_anomaly", "error",
]
TIMING_FIELDS = [
    "dataset", "detector", "calibrator", "seed",
    "fit_ms", "base_ms_per_sample", "delta_ms_per_sample",
]
SUMMARY_FIELDS = [
    "detector", "calibrator", "metric", "baseline", "improv_abs", "improv_pct",
    "win_count", "n_datasets", "p_value",
]
GAP_FIELDS = ["dataset", "mean_ot_normal", "mean_ot_anomaly", "increase_pct", "n_seeds"]
RUNTIME_FIELDS = ["dataset", "detector", "baseline_ms", "ot_ms"]
SWEEP_FIELDS = [
    "param", "value", "dataset", "detector", "calibrator", "seed", "status",
    "auc_roc_base", "auc_roc_cal", "auc_pr_base", "auc_pr_cal",
]


@dataclass(frozen=True)
class BenchConfig:
    datasets: tuple[str, ...]
    detectors: tuple[str, ...] = ("knn",)
    calibrators: tuple[str, ...] = ("ctad",)
    seeds: tuple[int, ...] = (0,)
    m: int = 20
    k: int = 5
    lam: float = 1.0
    label_col: str = "-1"
    normalize: str = "none"
    standardize: bool = True
    out_dir: str | None = None
    jobs: int = 1

    def __post_init__(self) -> None:
        if not self.datasets:
            raise ValueError("at least one dataset is required")
        if not self.detectors:
            raise ValueError("at least one detector is required")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        for kind in self.calibrators:
            CalibratorConfig(kind=kind, m=self.m, k=self.k, lam=self.lam)

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("out_dir")
        out.pop("jobs")
        return out


@dataclass
class BenchReport:
    config: BenchConfig
    cells: list[dict] = field(default_factory=list)
    timings: list[dict] = field(default_factory=list)

    @property
    def failures(self) -> list[dict]:
        return [c for c in self.cells if c["status"] != "ok"]

    def summary(self) -> list[dict]:
        return summarize(self.cells)

    def gaps(self) -> list[dict]:
        return gap_table(self.cells)

    def runtime(self) -> list[dict]:
        return runtime_table(self.timings)

    def to_json(self, include_timing: bool = True) -> dict:
        out = {
            "config": self.config.to_dict(),
            "seeds": list(self.config.seeds),
            "n_cells": len(self.cells),
            "n_failures": len(self.failures),
            "summary": self.summary(),
            "gaps": self.gaps(),
            "failures": self.failures,
        }
        if include_timing:
            out["timing"] = self.runtime()
        return out

    def write(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "cells.csv", CELL_FIELDS, self.cells)
        write_csv(out / "summary.csv", SUMMARY_FIELDS, self.summary())
        write_csv(out / "gap.csv", GAP_FIELDS, self.gaps())
        write_csv(out / "runtime.csv", RUNTIME_FIELDS, self.runtime())
        write_csv(out / "timing.csv", TIMING_FIELDS, self.timings)
        (out / "report.json").write_text(json.dumps(self.to_json(), indent=2, default=_json_default))


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _fmt(v):
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return v


def write_csv(path: Path, fields: list[str], rows: list[dict]) -> None:
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(row.get(k, "")) for k in fields})


def _prepare(path: str, label_col: str, seed: int, standardize: bool):
    ds = load_csv(path, label_col)
    sp = split(ds, seed)
    train, test = sp.train, sp.test_features
    if standardize:
        std = fit_standardizer(train)
        train, test = std.transform(train), std.transform(test)
    return ds.name, train, test, sp.test_labels


def _blank_cell(name, det, cfg: CalibratorConfig, seed) -> dict:
    return {
        "dataset": name, "detector": det, "calibrator": cfg.kind,
        "m": cfg.m, "k": cfg.k, "lam": float(cfg.lam), "seed": seed,
        "status": "ok", "error": "",
    }


def evaluate_group(
    path: str,
    label_col: str,
    seed: int,
    detectors: tuple[str, ...],
    configs: tuple[CalibratorConfig, ...],
    normalize: str = "none",
    standardize: bool = True,
) -> tuple[list[dict], list[dict]]:
    """Evaluate every detector x calibrator config on one (dataset, seed) split.

    Returns (cells, timings). Failures are captured per cell, never raised.
    """
    name = Path(path).stem
    try:
        name, train, test, labels = _prepare(path, label_col, seed, standardize)
    except Exception as exc:  # noqa: BLE001 - recorded in the report
        cells = []
        for det in detectors:
            for cfg in configs:
                cell = _blank_cell(name, det, cfg, seed)
                cell.update(status="failed", error=f"{type(exc).__name__}: {exc}")
                cells.append(cell)
        return cells, []

    n_test = test.shape[0]
    delta_cache: dict[tuple, tuple[np.ndarray, float] | Exception] = {}

    def delta_for(cfg: CalibratorConfig):
        key = (cfg.kind, cfg.m, cfg.k)
        if key not in delta_cache:
            try:
                fit_cfg = replace(cfg, lam=1.0, seed=seed)
                state = fit_calibrator(train, fit_cfg)
                t0 = time.perf_counter()
                values = deltas(state, test)
                per = (time.perf_counter() - t0) * 1e3 / max(n_test, 1)
                delta_cache[key] = (values, per)
            except Exception as exc:  # noqa: BLE001
                delta_cache[key] = exc
        return delta_cache[key]

    cells: list[dict] = []
    timings: list[dict] = []
    for det in detectors:
        det_error = ""
        fit_ms = base_ms = float("nan")
        try:
            ext_name = det.format(seed=seed, dataset=name) if det.startswith("external:") else det
            model = make_detector(ext_name, seed=derive_seed(seed, f"detector:{det}"), n_test=n_test)
            t0 = time.perf_counter()
            model.fit(train)
            t1 = time.perf_counter()
            base = model.score(test)
            t2 = time.perf_counter()
            fit_ms = (t1 - t0) * 1e3
            base_ms = (t2 - t1) * 1e3 / max(n_test, 1)
            base_eval = evaluate(base, labels)
        except Exception as exc:  # noqa: BLE001
            det_error = f"{type(exc).__name__}: {exc}"
            logger.debug("detector %s failed on %s: %s", det, name, traceback.format_exc())
        for cfg in configs:
            cell = _blank_cell(name, det, cfg, seed)
            cell.update(n_train=train.shape[0], n_test=n_test, n_pos=int(labels.sum()))
            if det_error:
                cell.update(status="failed", error=det_error)
                cells.append(cell)
                continue
            got = delta_for(cfg)
            if isinstance(got, Exception):
                cell.update(status="failed", error=f"{type(got).__name__}: {got}")
                cells.append(cell)
                continue
            values, delta_ms = got
            try:
                fused = fuse(base, values, cfg.lam, cfg.kind, normalize)
                cal_eval = evaluate(fused.calibrated, labels)
            except Exception as exc:  # noqa: BLE001
                cell.update(status="failed", error=f"{type(exc).__name__}: {exc}")
                cells.append(cell)
                continue
            cell.update(
                auc_roc_base=base_eval.auc_roc,
                auc_roc_cal=cal_eval.auc_roc,
                auc_pr_base=base_eval.auc_pr,
                auc_pr_cal=cal_eval.auc_pr,
                delta_mean_normal=float(values[labels == 0].mean()),
                delta_mean_anomaly=float(values[labels == 1].mean()),
            )
            cells.append(cell)
            timings.append({
                "dataset": name, "detector": det, "calibrator": cfg.kind, "seed": seed,
                "fit_ms": fit_ms, "base_ms_per_sample": base_ms, "delta_ms_per_sample": delta_ms,
            })
    return cells, timings


def _run_groups(tasks: list[tuple], jobs: int) -> list[tuple[list[dict], list[dict]]]:
    if jobs <= 1 or len(tasks) <= 1:
        return [evaluate_group(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(evaluate_group, *t) for t in tasks]
        return [f.result() for f in futures]


def run_bench(cfg: BenchConfig) -> BenchReport:
    configs = tuple(
        CalibratorConfig(kind=kind, m=cfg.m, k=cfg.k, lam=cfg.lam) for kind in cfg.calibrators
    )
    tasks = [
        (path, cfg.label_col, seed, tuple(cfg.detectors), configs, cfg.normalize, cfg.standardize)
        for path in cfg.datasets
        for seed in cfg.seeds
    ]
    report = BenchReport(config=cfg)
    for cells, timings in _run_groups(tasks, cfg.jobs):
        report.cells.extend(cells)
        report.timings.extend(timings)
    if cfg.out_dir:
        report.write(cfg.out_dir)
    return report


def summarize(cells: list[dict]) -> list[dict]:
    """Per (detector, calibrator, metric): dataset-level improvement statistics.

    Seeds are averaged within a dataset first; the paired test runs across datasets.
    """
    ok = [c for c in cells if c["status"] == "ok"]
    keys = list(dict.fromkeys((c["detector"], c["calibrator"], c["m"], c["k"], c["lam"]) for c in ok))
    rows = []
    for det, cal, m, k, lam in keys:
        group = [c for c in ok if (c["detector"], c["calibrator"], c["m"], c["k"], c["lam"]) == (det, cal, m, k, lam)]
        datasets = list(dict.fromkeys(c["dataset"] for c in group))
        for metric in ("auc_pr", "auc_roc"):
            base = np.array([np.mean([c[f"{metric}_base"] for c in group if c["dataset"] == d]) for d in datasets])
            after = np.array([np.mean([c[f"{metric}_cal"] for c in group if c["dataset"] == d]) for d in datasets])
            with np.errstate(divide="ignore", invalid="ignore"):
                rel = np.where(base > 0, (after - base) / base * 100.0, np.nan)
            p = float("nan")
            if len(datasets) >= 2:
                p = paired_t_test_one_tailed(after, base).p_value
            rows.append({
                "detector": det, "calibrator": cal, "metric": metric,
                "baseline": float(base.mean()),
                "improv_abs": float((after - base).mean()),
                "improv_pct": float(np.nanmean(rel)) if np.isfinite(rel).any() else float("nan"),
                "win_count": int((after > base).sum()),
                "n_datasets": len(datasets),
                "p_value": p,
            })
    return rows


def gap_table(cells: list[dict]) -> list[dict]:
    """Class-conditional mean OT per dataset from the CTAD cells (seed-averaged)."""
    rows = []
    ctad = [c for c in cells if c["status"] == "ok" and c["calibrator"] in ("ctad", "ot-only")]
    for name in dict.fromkeys(c["dataset"] for c in ctad):
        seen = {}
        for c in ctad:
            if c["dataset"] == name:
                # delta does not depend on the detector; keep one value per seed
                seen.setdefault(c["seed"], (c["delta_mean_normal"], c["delta_mean_anomaly"]))
        mn = float(np.mean([v[0] for v in seen.values()]))
        ma = float(np.mean([v[1] for v in seen.values()]))
        inc = 100.0 * (ma - mn) / mn if mn > 0 else float("nan")
        rows.append({"dataset": name, "mean_ot_normal": mn, "mean_ot_anomaly": ma,
                     "increase_pct": inc, "n_seeds": len(seen)})
    return rows


def runtime_table(timings: list[dict]) -> list[dict]:
    rows = []
    ctad = [t for t in timings if t["calibrator"] == "ctad"]
    for key in dict.fromkeys((t["dataset"], t["detector"]) for t in ctad):
        sel = [t for t in ctad if (t["dataset"], t["detector"]) == key]
        rows.append({
            "dataset": key[0], "detector": key[1],
            "baseline_ms": float(np.mean([t["base_ms_per_sample"] for t in sel])),
            "ot_ms": float(np.mean([t["delta_ms_per_sample"] for t in sel])),
        })
    return rows


SWEEP_PARAMS = {"K": "k", "M": "m", "LAMBDA": "lam"}


def sweep(cfg: BenchConfig, param: str, values) -> list[dict]:
    """Rerun calibration for each value of one hyperparameter, all else fixed."""
    param = param.upper()
    if param not in SWEEP_PARAMS:
        raise ValueError(f"param must be one of {sorted(SWEEP_PARAMS)}")
    values = list(values)
    if not values:
        raise ValueError("values must be non-empty")
    attr = SWEEP_PARAMS[param]
    configs = []
    for kind in cfg.calibrators:
        for v in values:
            v = float(v) if attr == "lam" else int(v)
            params = {"kind": kind, "m": cfg.m, "k": cfg.k, "lam": cfg.lam, attr: v}
            configs.append(CalibratorConfig(**params))
    tasks = [
        (path, cfg.label_col, seed, tuple(cfg.detectors), tuple(configs), cfg.normalize, cfg.standardize)
        for path in cfg.datasets
        for seed in cfg.seeds
    ]
    rows = []
    for cells, _ in _run_groups(tasks, cfg.jobs):
        for c in cells:
            row = {k: c.get(k, "") for k in SWEEP_FIELDS if k not in ("param", "value")}
            row.update(param=param, value=c[attr])
            rows.append(row)
    if cfg.out_dir:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / f"sweep_{param.lower()}.csv", SWEEP_FIELDS, rows)
        (out / f"sweep_{param.lower()}.json").write_text(
            json.dumps({"config": cfg.to_dict(), "param": param, "values": values}, indent=2)
        )
    return rows


def profile_ot(m: int = 20, k: int = 5, dim: int = 20, n_samples: int = 10_000, seed: int = 0) -> dict:
    """Per-sample wall time of one OT evaluation (test-row costs plus solve)."""
    if m < 0 or k < 1 or dim < 1 or n_samples < 1:
        raise ValueError("invalid profiling parameters")
    rng = np.random.default_rng(derive_seed(seed, "profile"))
    centroids = rng.standard_normal((k, dim))
    refs = rng.standard_normal((m, dim))
    points = rng.standard_normal((n_samples, dim)) * 1.5
    ref_cost = pairwise_distances(refs, centroids)
    cost = np.empty((m + 1, k))
    cost[:-1] = ref_cost
    times = np.empty(n_samples)
    clock = time.perf_counter
    for i in range(n_samples):
        t0 = clock()
        diff = centroids - points[i]
        cost[-1] = np.sqrt((diff * diff).sum(axis=1))
        solve_ot(cost)
        times[i] = clock() - t0
    ms = times * 1e3
    median = float(np.median(ms))
    p95 = float(np.percentile(ms, 95))
    return {
        "m": m, "k": k, "dim": dim, "n_samples": n_samples, "seed": seed,
        "median_ms": median, "p95_ms": p95, "mean_ms": float(ms.mean()),
        "p95_over_median": p95 / median if median > 0 else float("inf"),
    }
