"""Optimal-transport calibration of tabular anomaly scores."""

from ctad.calibrate import CalibratorConfig, calibrate_scores, deltas, fit_calibrator
from ctad.dataset import Dataset, fit_standardizer, load_csv, split
from ctad.detectors import make_detector
from ctad.kmeans import CentroidSet, fit_kmeans
from ctad.metrics import auc_pr, auc_roc, evaluate
from ctad.ot import bounds, build_cost, ot_distance, solve_ot

__version__ = "0.1.0"

__all__ = [
    "CalibratorConfig",
    "CentroidSet",
    "Dataset",
    "auc_pr",
    "auc_roc",
    "bounds",
    "build_cost",
    "calibrate_scores",
    "deltas",
    "evaluate",
    "fit_calibrator",
    "fit_kmeans",
    "fit_standardizer",
    "load_csv",
    "make_detector",
    "ot_distance",
    "solve_ot",
    "split",
]
