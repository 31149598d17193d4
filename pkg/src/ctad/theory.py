"""Synthetic checks of the OT separation guarantees.

Normal data is drawn as isotropic Gaussian blobs around well-separated
centres; anomalies sit at a fixed radius from their nearest centre. The
cluster spread controls the normal-side nearest-centroid distance and the
anomaly radius controls the anomaly side, so the separation regime can be
dialled in directly.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ctad.calibrate import CalibratorConfig, deltas, fit_calibrator, sample_references
from ctad.dataset import Dataset
from ctad.kmeans import fit_kmeans
from ctad.ot import BOUND_SLACK, BoundViolation, pairwise_distances, solve_ot
from ctad.seeding import derive_seed


@dataclass(frozen=True)
class SyntheticSpec:
    k_clusters: int = 3
    cluster_std: float = 0.05
    anomaly_offset: float = 5.0
    n_train: int = 600
    n_test_normal: int = 200
    n_test_anomaly: int = 50
    dim: int = 4
    seed: int = 0

    def __post_init__(self) -> None:
        if self.k_clusters < 1 or self.dim < 1:
            raise ValueError("k_clusters and dim must be >= 1")
        if self.cluster_std < 0:
            raise ValueError("cluster_std must be >= 0")
        if not self.anomaly_offset > self.cluster_std:
            raise ValueError("anomaly_offset must exceed cluster_std")
        if self.n_train < 1 or self.n_test_normal < 0 or self.n_test_anomaly < 0:
            raise ValueError("sample counts must be nonnegative with n_train >= 1")

    @property
    def spacing(self) -> float:
        return max(10.0 * self.cluster_std, 1.0)


@dataclass(frozen=True)
class SyntheticData:
    centers: np.ndarray
    train: np.ndarray
    test_features: np.ndarray
    test_labels: np.ndarray

    def as_dataset(self, name: str = "synthetic") -> Dataset:
        n_test = self.test_labels.shape[0]
        return Dataset(
            features=np.vstack([self.train, self.test_features]),
            labels=np.concatenate([np.zeros(self.train.shape[0], dtype=np.int64), self.test_labels]),
            name=name,
        ) if n_test else Dataset(self.train, np.zeros(self.train.shape[0], dtype=np.int64), name)


def _centers(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    k, d, gap = spec.k_clusters, spec.dim, spec.spacing
    if k <= d:
        # regular simplex: scaled basis vectors, randomly rotated
        base = np.eye(d)[:k] * (gap / math.sqrt(2.0))
        q, r = np.linalg.qr(rng.standard_normal((d, d)))
        q = q * np.sign(np.diag(r))
        return base @ q.T
    centers = [rng.uniform(0.0, gap * k, size=d)]
    for _ in range(100_000):
        if len(centers) == k:
            break
        c = rng.uniform(0.0, gap * k, size=d)
        if min(np.linalg.norm(c - o) for o in centers) >= gap:
            centers.append(c)
    if len(centers) < k:
        raise RuntimeError("could not place well-separated centres")
    return np.asarray(centers)


def _normals(centers: np.ndarray, n: int, std: float, rng: np.random.Generator) -> np.ndarray:
    which = rng.integers(centers.shape[0], size=n)
    return centers[which] + std * rng.standard_normal((n, centers.shape[1]))


def _anomalies(centers: np.ndarray, n: int, radius: float, rng: np.random.Generator) -> np.ndarray:
    out = np.empty((n, centers.shape[1]))
    filled = 0
    for _ in range(1000 * max(n, 1)):
        if filled == n:
            break
        c = centers[rng.integers(centers.shape[0])]
        u = rng.standard_normal(centers.shape[1])
        u /= np.linalg.norm(u)
        p = c + radius * u
        if np.sqrt(((centers - p) ** 2).sum(axis=1)).min() >= radius * (1.0 - 1e-12):
            out[filled] = p
            filled += 1
    if filled < n:
        raise RuntimeError("could not place anomalies at the requested radius")
    return out


def synthesize(spec: SyntheticSpec) -> SyntheticData:
    rng = np.random.default_rng(derive_seed(spec.seed, "synthetic"))
    centers = _centers(spec, rng)
    train = _normals(centers, spec.n_train, spec.cluster_std, rng)
    test_n = _normals(centers, spec.n_test_normal, spec.cluster_std, rng)
    test_a = _anomalies(centers, spec.n_test_anomaly, spec.anomaly_offset, rng)
    labels = np.concatenate(
        [np.zeros(spec.n_test_normal, dtype=np.int64), np.ones(spec.n_test_anomaly, dtype=np.int64)]
    )
    return SyntheticData(centers, train, np.vstack([test_n, test_a]), labels)


def generate(spec: SyntheticSpec) -> Dataset:
    """Rows ordered: training normals, held-out normals, anomalies."""
    return synthesize(spec).as_dataset()


@dataclass(frozen=True)
class SeparationCheck:
    empirical_gap: float
    predicted_floor: float
    stat_slack: float
    holds: bool
    eps_hat: float
    eta_hat: float
    mean_ot_normal: float
    mean_ot_anomaly: float
    m: int
    k: int
    seed: int
    lower_violations: int
    upper_violations: int

    @property
    def gap_positive(self) -> bool:
        return self.empirical_gap > 0

    def to_dict(self) -> dict:
        out = asdict(self)
        out["gap_positive"] = self.gap_positive
        return out


def check_separation(spec: SyntheticSpec, m: int = 20, k_centroids: int = 3, seed: int = 0) -> SeparationCheck:
    """Compare the class-conditional mean OT gap with its plug-in floor.

    The floor is ``(eta_hat - (m + 1) * eps_hat) / (m + 1)``; ``holds`` allows
    three standard errors of the gap estimate below it.
    """
    data = synthesize(spec)
    state = fit_calibrator(data.train, CalibratorConfig(kind="ctad", m=m, k=k_centroids, lam=1.0, seed=seed))
    ot = deltas(state, data.test_features)
    nearest = pairwise_distances(data.test_features, state.centroids.centroids).min(axis=1)
    lower = nearest / (m + 1)
    upper = (state.ref_cost.min(axis=1).sum() + nearest) / (m + 1)
    lower_bad = int((ot < lower - BOUND_SLACK).sum())
    if lower_bad:
        raise BoundViolation(f"{lower_bad} OT values below the nearest-centroid lower bound")
    upper_bad = int((ot > upper + BOUND_SLACK).sum())

    y = data.test_labels
    ot_n, ot_a = ot[y == 0], ot[y == 1]
    gap = float(ot_a.mean() - ot_n.mean())
    se = math.sqrt(ot_a.var(ddof=1) / ot_a.size + ot_n.var(ddof=1) / ot_n.size)
    eps_hat = float(nearest[y == 0].mean())
    eta_hat = float(nearest[y == 1].mean())
    floor = (eta_hat - (m + 1) * eps_hat) / (m + 1)
    slack = 3.0 * se
    return SeparationCheck(
        empirical_gap=gap,
        predicted_floor=floor,
        stat_slack=slack,
        holds=gap >= floor - slack,
        eps_hat=eps_hat,
        eta_hat=eta_hat,
        mean_ot_normal=float(ot_n.mean()),
        mean_ot_anomaly=float(ot_a.mean()),
        m=m,
        k=k_centroids,
        seed=seed,
        lower_violations=lower_bad,
        upper_violations=upper_bad,
    )


@dataclass(frozen=True)
class VarianceRow:
    m: int
    variance: float
    mean: float
    trials: int


@dataclass(frozen=True)
class VarianceTable:
    rows: tuple[VarianceRow, ...]
    slope: float
    noise_allowance: float = 0.10

    @property
    def non_increasing(self) -> bool:
        v = [r.variance for r in self.rows]
        return all(b <= a * (1.0 + self.noise_allowance) for a, b in zip(v, v[1:]))

    def to_dict(self) -> dict:
        return {
            "rows": [asdict(r) for r in self.rows],
            "loglog_slope": self.slope,
            "non_increasing": self.non_increasing,
            "noise_allowance": self.noise_allowance,
        }


def check_variance(
    spec: SyntheticSpec,
    m_values=(5, 10, 20, 40),
    trials: int = 200,
    k_centroids: int | None = None,
    seed: int = 0,
) -> VarianceTable:
    """Variance of the OT term for one held-out normal point under reference resampling."""
    if trials < 30:
        raise ValueError("trials must be >= 30")
    m_values = [int(v) for v in m_values]
    if not m_values:
        raise ValueError("m_values must be non-empty")
    data = synthesize(spec)
    k = k_centroids or spec.k_clusters
    centroids = fit_kmeans(data.train, k, seed=derive_seed(seed, "kmeans")).centroids
    probe = data.test_features[data.test_labels == 0][:1]
    if probe.shape[0] == 0:
        raise ValueError("spec must contain at least one held-out normal")
    probe_cost = pairwise_distances(probe, centroids)[0]
    rows = []
    for m in m_values:
        values = np.empty(trials)
        for t in range(trials):
            refs = sample_references(data.train, m, derive_seed(seed, f"variance:{m}:{t}"))
            cost = np.vstack([pairwise_distances(refs.points, centroids), probe_cost[None, :]])
            values[t] = solve_ot(cost).cost
        rows.append(VarianceRow(m=m, variance=float(values.var(ddof=1)), mean=float(values.mean()), trials=trials))
    ms = np.log([r.m for r in rows])
    vs = np.log([max(r.variance, 1e-300) for r in rows])
    slope = float(np.polyfit(ms, vs, 1)[0]) if len(rows) > 1 else float("nan")
    return VarianceTable(rows=tuple(rows), slope=slope)
