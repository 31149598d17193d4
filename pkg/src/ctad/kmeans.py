"""K-means (Lloyd iterations from k-means++ seeding) for the centroid measure."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CentroidSet:
    """K centroids of the training set, each carrying mass 1/K.

    Attributes:
        centroids: (K, D) array.
        inertia: mean squared distance from each training row to its nearest centroid.
        k: number of centroids actually produced.
        seed: seed used for initialization.
        inertia_history: inertia after every Lloyd step, for monotonicity checks.
    """

    centroids: np.ndarray
    inertia: float
    k: int
    seed: int = 0
    inertia_history: tuple[float, ...] = field(default=(), compare=False)

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "centroids": self.centroids.tolist(),
            "inertia": self.inertia,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, payload: dict) -> CentroidSet:
        centroids = np.asarray(payload["centroids"], dtype=float)
        return cls(
            centroids=centroids,
            inertia=float(payload["inertia"]),
            k=int(payload["k"]),
            seed=int(payload.get("seed", 0)),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2))

    @classmethod
    def load(cls, path: str | Path) -> CentroidSet:
        return cls.from_json(json.loads(Path(path).read_text()))


def _exact_sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    out = np.empty((x.shape[0], c.shape[0]))
    step = max(1, 4_000_000 // max(1, c.size))
    for start in range(0, x.shape[0], step):
        diff = x[start : start + step, None, :] - c[None, :, :]
        out[start : start + step] = np.einsum("ijk,ijk->ij", diff, diff)
    return out


def compute_inertia(train: np.ndarray, centroids: np.ndarray) -> float:
    return float(_exact_sq_dists(train, centroids).min(axis=1).mean())


def _kmeans_plus_plus(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    chosen = [int(rng.integers(n))]
    closest = _exact_sq_dists(x, x[chosen]).ravel()
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            # every row coincides with a chosen centre; take any unchosen row
            remaining = np.setdiff1d(np.arange(n), chosen)
            idx = int(rng.choice(remaining))
        else:
            idx = int(rng.choice(n, p=closest / total))
        chosen.append(idx)
        closest = np.minimum(closest, _exact_sq_dists(x, x[idx : idx + 1]).ravel())
    return x[chosen].copy()


def fit_kmeans(
    train,
    k: int = 5,
    seed: int = 0,
    max_iter: int = 300,
    tol: float = 1e-6,
) -> CentroidSet:
    """Cluster ``train`` into ``k`` groups.

    Empty clusters are reseeded to the training row farthest from its
    assigned centroid. If the data has fewer than ``k`` distinct rows the
    duplicates survive and a warning is logged.
    """
    x = np.asarray(train, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("training matrix must be non-empty and 2-D")
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")

    rng = np.random.default_rng(seed)
    centroids = _kmeans_plus_plus(x, k, rng)
    history: list[float] = []
    for _ in range(max_iter):
        d = _exact_sq_dists(x, centroids)
        labels = d.argmin(axis=1)
        history.append(float(d[np.arange(n), labels].mean()))
        new = np.empty_like(centroids)
        counts = np.bincount(labels, minlength=k)
        for j in range(k):
            if counts[j]:
                new[j] = x[labels == j].mean(axis=0)
        empty = np.flatnonzero(counts == 0)
        if empty.size:
            own = d[np.arange(n), labels]
            taken: set[int] = set()
            for j in empty:
                order = np.argsort(-own, kind="stable")
                idx = next((int(i) for i in order if int(i) not in taken), int(order[0]))
                taken.add(idx)
                new[j] = x[idx]
                own[idx] = 0.0
        shift = float(np.sqrt(((new - centroids) ** 2).sum(axis=1)).max())
        centroids = new
        if shift < tol:
            break

    inertia = compute_inertia(x, centroids)
    history.append(inertia)
    distinct = np.unique(centroids, axis=0).shape[0]
    if distinct < k:
        logger.warning("k-means produced only %d distinct centroids for k=%d", distinct, k)
    return CentroidSet(
        centroids=centroids,
        inertia=inertia,
        k=k,
        seed=seed,
        inertia_history=tuple(history),
    )


def nearest_centroid_distance(q, x) -> tuple[int, float]:
    """Index and Euclidean distance of the centroid closest to ``x`` (lowest index on ties)."""
    c = np.asarray(getattr(q, "centroids", q), dtype=float)
    v = np.asarray(x, dtype=float).reshape(-1)
    if v.shape[0] != c.shape[1]:
        raise ValueError(f"x has dimension {v.shape[0]}, centroids have {c.shape[1]}")
    d = np.sqrt(((c - v) ** 2).sum(axis=1))
    j = int(np.argmin(d))
    return j, float(d[j])
