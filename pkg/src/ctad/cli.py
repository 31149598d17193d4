"""Command-line entry point: ``ctad <subcommand> ...``.

Exit codes: 0 on success, 2 when some benchmark cells failed, 1 on
configuration or input errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ctad import bench
from ctad.calibrate import KINDS, NORMALIZE, CalibratorConfig, calibrate_scores, fit_calibrator
from ctad.dataset import fit_standardizer, load_csv, split
from ctad.detectors import DETECTORS, make_detector
from ctad.kmeans import CentroidSet, fit_kmeans
from ctad.metrics import evaluate
from ctad.ot import solve_ot
from ctad.seeding import derive_seed
from ctad.theory import SyntheticSpec, check_separation, check_variance

logger = logging.getLogger("ctad")

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _calibrator_name(value: str) -> str:
    if value not in KINDS:
        raise argparse.ArgumentTypeError(f"choose from {', '.join(KINDS)}")
    return value


def _add_data(p, multi=False):
    p.add_argument("--data", required=True, nargs="+" if multi else None, help="CSV dataset path(s)")
    p.add_argument("--label-col", default="-1", help="label column name or index (default: last)")
    p.add_argument("--no-standardize", action="store_true", help="use raw feature scales")


def _add_calib(p, multi=False):
    if multi:
        p.add_argument("--detector", action="append", help="knn|pca|ecod|iforest|external:<path>")
        p.add_argument("--calibrator", action="append", type=_calibrator_name)
    else:
        p.add_argument("--detector", default="knn")
        p.add_argument("--calibrator", default="ctad", type=_calibrator_name)
    p.add_argument("--m", type=int, default=20, help="reference samples")
    p.add_argument("--k", type=int, default=5, help="k-means centroids")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0, help="calibration weight")
    p.add_argument("--normalize", choices=NORMALIZE, default="none")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ctad", description="Optimal-transport calibration of anomaly scores.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("split", help="one-class train/test split")
    _add_data(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="directory for train.csv and test.csv")
    p.add_argument("--emit-order", help="write test-row source indices, one per line")

    p = sub.add_parser("fit-kmeans", help="fit and cache the centroid set")
    _add_data(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--max-iter", type=int, default=300)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--out", required=True, help="centroid JSON path")

    p = sub.add_parser("score", help="base detector scores for the test split")
    _add_data(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--detector", default="knn")
    p.add_argument("--out", help="score file (one per line); stdout if omitted")

    p = sub.add_parser("calibrate", help="calibrated scores for the test split")
    _add_data(p)
    _add_calib(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--centroids", help="cached centroid JSON from fit-kmeans")
    p.add_argument("--out", required=True, help="output directory")

    for name, helptext in (("bench", "detector x calibrator x dataset grid"), ("sweep", "hyperparameter sweep")):
        p = sub.add_parser(name, help=helptext)
        _add_data(p, multi=True)
        _add_calib(p, multi=True)
        p.add_argument("--seed", type=int, nargs="+", default=[0])
        p.add_argument("--out", help="output directory")
        p.add_argument("--jobs", type=int, default=1)
        if name == "sweep":
            p.add_argument("--param", required=True, type=str.upper, choices=sorted(bench.SWEEP_PARAMS))
            p.add_argument("--values", required=True, nargs="+", type=float)

    p = sub.add_parser("theory-check", help="synthetic checks of the OT separation bounds")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--m", type=int, default=20)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--clusters", type=int, default=3)
    p.add_argument("--std", type=float, default=0.05)
    p.add_argument("--offset", type=float, default=5.0)
    p.add_argument("--dim", type=int, default=4)
    p.add_argument("--n-train", type=int, default=600)
    p.add_argument("--n-normal", type=int, default=200)
    p.add_argument("--n-anomaly", type=int, default=50)
    p.add_argument("--variance-m", type=int, nargs="+", default=[5, 10, 20, 40])
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--out", help="JSON report path; stdout if omitted")

    p = sub.add_parser("profile", help="per-sample OT wall time")
    p.add_argument("--m", type=int, default=20)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--dim", type=int, default=20)
    p.add_argument("--n-samples", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("ot", help="solve OT for a hand-written cost matrix (debug)")
    p.add_argument("--cost", required=True, help="headerless numeric CSV")
    return parser


def _load_split(args):
    ds = load_csv(args.data, args.label_col)
    sp = split(ds, args.seed)
    train, test = sp.train, sp.test_features
    if not args.no_standardize:
        std = fit_standardizer(train)
        train, test = std.transform(train), std.transform(test)
    return ds, sp, train, test


def cmd_split(args) -> int:
    ds = load_csv(args.data, args.label_col)
    sp = split(ds, args.seed)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        header = [f"x{j}" for j in range(ds.features.shape[1])]
        with (out / "train.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header + ["label"])
            w.writerows([*map(repr, row), 0] for row in sp.train.tolist())
        with (out / "test.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header + ["label"])
            for row, y in zip(sp.test_features.tolist(), sp.test_labels.tolist()):
                w.writerow([*map(repr, row), y])
    if args.emit_order:
        Path(args.emit_order).write_text("".join(f"{i}\n" for i in sp.test_index.tolist()))
    n_test_anom = int(sp.test_labels.sum())
    print("dataset,seed,n_train,n_test_normal,n_test_anomaly")
    print(f"{ds.name},{args.seed},{sp.train.shape[0]},{sp.test_labels.size - n_test_anom},{n_test_anom}")
    return EXIT_OK


def cmd_fit_kmeans(args) -> int:
    _, _, train, _ = _load_split(args)
    cs = fit_kmeans(train, args.k, seed=derive_seed(args.seed, "kmeans"), max_iter=args.max_iter, tol=args.tol)
    cs.save(args.out)
    print(f"k={cs.k} inertia={cs.inertia!r} -> {args.out}")
    return EXIT_OK


def cmd_score(args) -> int:
    _, _, train, test = _load_split(args)
    model = make_detector(args.detector, seed=derive_seed(args.seed, f"detector:{args.detector}"), n_test=test.shape[0])
    scores = model.fit(train).score(test)
    text = "".join(f"{s!r}\n" for s in scores.tolist())
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    _, sp, train, test = _load_split(args)
    cfg = CalibratorConfig(kind=args.calibrator, m=args.m, k=args.k, lam=args.lam, seed=args.seed)
    model = make_detector(args.detector, seed=derive_seed(args.seed, f"detector:{args.detector}"), n_test=test.shape[0])
    base = model.fit(train).score(test)
    cached = CentroidSet.load(args.centroids) if args.centroids else None
    state = fit_calibrator(train, cfg, centroids=cached)
    result = calibrate_scores(state, base, test, normalize=args.normalize)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "calibration.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row_index", "base_score", "delta", "calibrated_score", "label"])
        for idx, rec, y in zip(sp.test_index.tolist(), result.records(), sp.test_labels.tolist()):
            w.writerow([idx, repr(rec.base_score), repr(rec.delta), repr(rec.calibrated), y])
    before = evaluate(base, sp.test_labels)
    after = evaluate(result.calibrated, sp.test_labels)
    meta = {
        "data": args.data,
        "label_col": args.label_col,
        "detector": args.detector,
        "calibrator": cfg.to_dict(),
        "normalize": args.normalize,
        "standardize": not args.no_standardize,
        "centroids": args.centroids,
        "baseline": before.to_dict(),
        "calibrated": after.to_dict(),
    }
    (out / "config.json").write_text(json.dumps(meta, indent=2))
    print("metric,baseline,calibrated")
    print(f"auc_roc,{before.auc_roc!r},{after.auc_roc!r}")
    print(f"auc_pr,{before.auc_pr!r},{after.auc_pr!r}")
    return EXIT_OK


def _bench_config(args) -> bench.BenchConfig:
    for name in args.detector or []:
        if name not in DETECTORS and not name.startswith("external:"):
            raise ValueError(f"unknown detector {name!r}")
    return bench.BenchConfig(
        datasets=tuple(args.data),
        detectors=tuple(args.detector or ["knn"]),
        calibrators=tuple(args.calibrator or ["ctad"]),
        seeds=tuple(args.seed),
        m=args.m,
        k=args.k,
        lam=args.lam,
        label_col=args.label_col,
        normalize=args.normalize,
        standardize=not args.no_standardize,
        out_dir=args.out,
        jobs=args.jobs,
    )


def _print_rows(fields, rows) -> None:
    w = csv.DictWriter(sys.stdout, fieldnames=fields, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: bench._fmt(r.get(k, "")) for k in fields})


def cmd_bench(args) -> int:
    report = bench.run_bench(_bench_config(args))
    _print_rows(bench.SUMMARY_FIELDS, report.summary())
    for f in report.failures:
        logger.error("cell failed: %s/%s/%s seed=%s: %s", f["dataset"], f["detector"], f["calibrator"], f["seed"], f["error"])
    return EXIT_PARTIAL if report.failures else EXIT_OK


def cmd_sweep(args) -> int:
    rows = bench.sweep(_bench_config(args), args.param, args.values)
    _print_rows(bench.SWEEP_FIELDS, rows)
    return EXIT_PARTIAL if any(r["status"] != "ok" for r in rows) else EXIT_OK


def cmd_theory(args) -> int:
    checks = []
    for run in range(args.runs):
        seed = args.seed + run
        spec = SyntheticSpec(
            k_clusters=args.clusters, cluster_std=args.std, anomaly_offset=args.offset,
            n_train=args.n_train, n_test_normal=args.n_normal, n_test_anomaly=args.n_anomaly,
            dim=args.dim, seed=seed,
        )
        checks.append(check_separation(spec, m=args.m, k_centroids=args.k, seed=seed).to_dict())
    base_spec = SyntheticSpec(
        k_clusters=args.clusters, cluster_std=args.std, anomaly_offset=args.offset,
        n_train=args.n_train, n_test_normal=args.n_normal, n_test_anomaly=args.n_anomaly,
        dim=args.dim, seed=args.seed,
    )
    variance = check_variance(base_spec, args.variance_m, args.trials, k_centroids=args.k, seed=args.seed)
    report = {
        "runs": args.runs,
        "gap_positive": sum(c["gap_positive"] for c in checks),
        "floor_holds": sum(c["holds"] for c in checks),
        "checks": checks,
        "variance": variance.to_dict(),
    }
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(text)
        print(f"gap_positive={report['gap_positive']}/{args.runs} floor_holds={report['floor_holds']}/{args.runs} "
              f"variance_slope={variance.slope:.3f} -> {args.out}")
    else:
        print(text)
    return EXIT_OK


def cmd_profile(args) -> int:
    res = bench.profile_ot(args.m, args.k, args.dim, args.n_samples, args.seed)
    print(json.dumps(res, indent=2))
    return EXIT_OK


def cmd_ot(args) -> int:
    cost = np.loadtxt(args.cost, delimiter=",", ndmin=2)
    plan = solve_ot(cost)
    w = csv.writer(sys.stdout, lineterminator="\n")
    for row in plan.mass.tolist():
        w.writerow([repr(v) for v in row])
    print(f"cost,{plan.cost!r}")
    return EXIT_OK


COMMANDS = {
    "split": cmd_split,
    "fit-kmeans": cmd_fit_kmeans,
    "score": cmd_score,
    "calibrate": cmd_calibrate,
    "bench": cmd_bench,
    "sweep": cmd_sweep,
    "theory-check": cmd_theory,
    "profile": cmd_profile,
    "ot": cmd_ot,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ValueError, OSError) as exc:
        print(f"ctad {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
