"""Score calibration: s* = s + lambda * delta, with delta from OT or an alternative.

The offline phase (k-means and reference sampling) runs once per training
set; the online phase evaluates ``delta`` per test row. ``delta`` never looks
at the base scores, so one fitted state serves every base detector.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterator

import numpy as np
from scipy.linalg import solve_triangular

from ctad.kmeans import CentroidSet, fit_kmeans
from ctad.ot import pairwise_distances, solve_ot
from ctad.seeding import derive_seed

KINDS = ("ctad", "centroid", "mahalanobis", "ot-only", "none")
NORMALIZE = ("none", "minmax")


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class CalibratorConfig:
    kind: str = "ctad"
    m: int = 20
    k: int = 5
    lam: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise CalibrationError(f"unknown calibrator {self.kind!r}; choose from {KINDS}")
        if self.m < 0:
            raise CalibrationError("m must be >= 0")
        if self.k < 1:
            raise CalibrationError("k must be >= 1")
        if not np.isfinite(self.lam):
            raise CalibrationError("lambda must be finite")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ReferenceSet:
    points: np.ndarray
    seed: int
    index: np.ndarray


def sample_references(train: np.ndarray, m: int, seed: int) -> ReferenceSet:
    """Draw ``m`` training rows without replacement."""
    n = train.shape[0]
    if m > n:
        raise CalibrationError(f"m={m} exceeds the {n} training rows")
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(n, size=m, replace=False)) if m else np.empty(0, dtype=np.int64)
    return ReferenceSet(points=train[idx].copy(), seed=seed, index=idx)


@dataclass(frozen=True)
class MahalanobisModel:
    mean: np.ndarray
    chol: np.ndarray
    reg: float

    def quadratic_form(self, x) -> np.ndarray:
        diff = np.atleast_2d(np.asarray(x, dtype=float)) - self.mean
        z = solve_triangular(self.chol, diff.T, lower=True)
        return (z * z).sum(axis=0)


def fit_mahalanobis(train: np.ndarray) -> MahalanobisModel:
    x = np.asarray(train, dtype=float)
    d = x.shape[1]
    mean = x.mean(axis=0)
    cov = np.atleast_2d(np.cov(x, rowvar=False)) if x.shape[0] > 1 else np.zeros((d, d))
    reg = 1e-6 * float(np.trace(cov)) / d
    if reg <= 0:
        reg = 1e-12
    chol = np.linalg.cholesky(cov + reg * np.eye(d))
    return MahalanobisModel(mean=mean, chol=chol, reg=reg)


@dataclass(frozen=True)
class CalibratorState:
    config: CalibratorConfig
    dim: int
    centroids: CentroidSet | None = None
    references: ReferenceSet | None = None
    mahalanobis: MahalanobisModel | None = None
    ref_cost: np.ndarray | None = None


def fit_calibrator(train, cfg: CalibratorConfig, centroids: CentroidSet | None = None) -> CalibratorState:
    """Offline phase: k-means and reference sampling (or the Mahalanobis fit).

    A previously fitted ``centroids`` set may be passed to skip k-means.
    """
    x = np.asarray(train, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0:
        raise CalibrationError("training matrix must be non-empty and 2-D")
    n, d = x.shape
    if cfg.kind == "none":
        return CalibratorState(config=cfg, dim=d)
    if cfg.kind == "mahalanobis":
        return CalibratorState(config=cfg, dim=d, mahalanobis=fit_mahalanobis(x))
    if cfg.k > n:
        raise CalibrationError(f"k={cfg.k} exceeds the {n} training rows")
    if centroids is None:
        centroids = fit_kmeans(x, cfg.k, seed=derive_seed(cfg.seed, "kmeans"))
    elif centroids.centroids.shape[1] != d:
        raise CalibrationError("cached centroids do not match the feature dimension")
    if cfg.kind == "centroid":
        return CalibratorState(config=cfg, dim=d, centroids=centroids)
    refs = sample_references(x, cfg.m, derive_seed(cfg.seed, "references"))
    ref_cost = pairwise_distances(refs.points, centroids.centroids)
    return CalibratorState(config=cfg, dim=d, centroids=centroids, references=refs, ref_cost=ref_cost)


def deltas(state: CalibratorState, test) -> np.ndarray:
    """Calibration terms for every row of ``test``."""
    x = np.atleast_2d(np.asarray(test, dtype=float))
    if x.shape[1] != state.dim:
        raise CalibrationError(f"expected {state.dim} features, got {x.shape[1]}")
    kind = state.config.kind
    if kind == "none":
        return np.zeros(x.shape[0])
    if kind == "mahalanobis":
        return np.sqrt(state.mahalanobis.quadratic_form(x))
    to_centroids = pairwise_distances(x, state.centroids.centroids)
    if kind == "centroid":
        return to_centroids.min(axis=1)
    cost = np.empty((state.ref_cost.shape[0] + 1, to_centroids.shape[1]))
    cost[:-1] = state.ref_cost
    out = np.empty(x.shape[0])
    for i in range(x.shape[0]):
        cost[-1] = to_centroids[i]
        out[i] = solve_ot(cost).cost
    return out


def delta(state: CalibratorState, x_test) -> float:
    x = np.asarray(x_test, dtype=float).reshape(-1)
    return float(deltas(state, x[None, :])[0])


@dataclass(frozen=True)
class CalibrationRecord:
    base_score: float
    delta: float
    calibrated: float


@dataclass(frozen=True)
class Calibration:
    base: np.ndarray
    delta: np.ndarray
    calibrated: np.ndarray
    lam: float

    def records(self) -> Iterator[CalibrationRecord]:
        for s, d, c in zip(self.base.tolist(), self.delta.tolist(), self.calibrated.tolist()):
            yield CalibrationRecord(s, d, c)

    def __len__(self) -> int:
        return self.base.shape[0]


def minmax(v: np.ndarray) -> np.ndarray:
    lo, hi = float(v.min()), float(v.max())
    if hi <= lo:
        return np.zeros_like(v)
    return (v - lo) / (hi - lo)


def fuse(base, delta_values, lam: float, kind: str = "ctad", normalize: str = "none") -> Calibration:
    """Combine base scores with precomputed calibration terms."""
    s = np.asarray(base, dtype=float).reshape(-1)
    dv = np.asarray(delta_values, dtype=float).reshape(-1)
    if s.shape != dv.shape:
        raise CalibrationError(f"{s.size} base scores for {dv.size} test rows")
    if normalize not in NORMALIZE:
        raise CalibrationError(f"unknown normalization {normalize!r}")
    s_in, d_in = (minmax(s), minmax(dv)) if normalize == "minmax" else (s, dv)
    if kind == "ot-only":
        calibrated = d_in.copy()
    else:
        calibrated = s_in + lam * d_in
    return Calibration(base=s, delta=dv, calibrated=calibrated, lam=lam)


def calibrate_scores(
    state: CalibratorState,
    base,
    test,
    lam: float | None = None,
    normalize: str = "none",
) -> Calibration:
    x = np.atleast_2d(np.asarray(test, dtype=float))
    s = np.asarray(base, dtype=float).reshape(-1)
    if s.shape[0] != x.shape[0]:
        raise CalibrationError(f"{s.shape[0]} base scores for {x.shape[0]} test rows")
    lam = state.config.lam if lam is None else lam
    return fuse(s, deltas(state, x), lam, state.config.kind, normalize)
