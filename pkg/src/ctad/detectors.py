"""Base anomaly detectors sharing a ``fit`` / ``score`` interface.

Every detector is fit on normal-only training rows and returns raw,
unnormalised scores where larger means more anomalous.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

EULER_GAMMA = 0.5772156649


class DetectorError(ValueError):
    pass


class Detector:
    kind = "base"
    train_dim: int | None = None

    def fit(self, train) -> Detector:
        raise NotImplementedError

    def score(self, x) -> np.ndarray:
        raise NotImplementedError

    def _check(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.train_dim is None:
            raise DetectorError(f"{self.kind} detector used before fit")
        if x.shape[1] != self.train_dim:
            raise DetectorError(f"expected {self.train_dim} features, got {x.shape[1]}")
        return x


def _as_train(train) -> np.ndarray:
    x = np.asarray(train, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0:
        raise DetectorError("training data must be a non-empty 2-D array")
    return x


class KNNDetector(Detector):
    """Distance to the k-th nearest training row (exact, Euclidean)."""

    kind = "knn"

    def __init__(self, k: int = 5) -> None:
        self.k = k

    def fit(self, train) -> KNNDetector:
        x = _as_train(train)
        if not 1 <= self.k <= x.shape[0]:
            raise DetectorError(f"k must be in [1, {x.shape[0]}], got {self.k}")
        self.train_ = x
        self.train_sq_ = (x * x).sum(axis=1)
        self.train_dim = x.shape[1]
        return self

    def score(self, x) -> np.ndarray:
        x = self._check(x)
        out = np.empty(x.shape[0])
        step = max(1, 2_000_000 // max(1, self.train_.shape[0]))
        for start in range(0, x.shape[0], step):
            chunk = x[start : start + step]
            sq = (chunk * chunk).sum(1)[:, None] - 2.0 * chunk @ self.train_.T + self.train_sq_[None, :]
            # shortlist with the expanded form, then rank the shortlist on exact distances
            width = min(self.train_.shape[0], self.k + 8)
            cand = np.argpartition(sq, width - 1, axis=1)[:, :width]
            exact = np.sqrt(((chunk[:, None, :] - self.train_[cand]) ** 2).sum(-1))
            out[start : start + step] = np.sort(exact, axis=1)[:, self.k - 1]
        return out


class PCADetector(Detector):
    """Squared reconstruction error outside the top principal directions."""

    kind = "pca"

    def __init__(self, n_components: int | None = None) -> None:
        self.n_components = n_components

    def fit(self, train) -> PCADetector:
        x = _as_train(train)
        n, d = x.shape
        r = self.n_components if self.n_components is not None else min(d, math.ceil(d / 2))
        if not 1 <= r <= min(n - 1, d):
            raise DetectorError(f"n_components must be in [1, {min(n - 1, d)}], got {r}")
        self.mean_ = x.mean(axis=0)
        _, s, vt = np.linalg.svd(x - self.mean_, full_matrices=False)
        tol = s.max(initial=0.0) * max(n, d) * np.finfo(float).eps
        rank = int((s > tol).sum())
        r = min(r, rank)
        comps = vt[:r].copy()
        # sign convention: largest-magnitude loading of each component is nonnegative
        for i in range(r):
            if comps[i, np.argmax(np.abs(comps[i]))] < 0:
                comps[i] = -comps[i]
        self.components_ = comps
        self.rank_ = r
        self.train_dim = d
        return self

    def project(self, x) -> np.ndarray:
        """Reconstruction of ``x`` from the retained components."""
        x = self._check(x)
        c = x - self.mean_
        return (c @ self.components_.T) @ self.components_ + self.mean_

    def score(self, x) -> np.ndarray:
        x = self._check(x)
        c = x - self.mean_
        resid = c - (c @ self.components_.T) @ self.components_
        return (resid * resid).sum(axis=1)


class ECODDetector(Detector):
    """Empirical-CDF tail probabilities summed over features.

    Left and right tail scores are summed across features; a third
    aggregate picks, per feature, the tail on the side of the training
    skew (left for negative skew). The final score is the largest of the
    three sums.
    """

    kind = "ecod"

    def fit(self, train) -> ECODDetector:
        x = _as_train(train)
        n = x.shape[0]
        self.sorted_ = np.sort(x, axis=0)
        self.n_ = n
        centred = x - x.mean(axis=0)
        m2 = (centred**2).mean(axis=0)
        m3 = (centred**3).mean(axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            g1 = np.where(m2 > 0, m3 / np.where(m2 > 0, m2, 1.0) ** 1.5, 0.0)
        if n > 2:
            g1 = g1 * math.sqrt(n * (n - 1)) / (n - 2)
        self.skewness_ = g1
        self.train_dim = x.shape[1]
        return self

    def tail_scores(self, x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        x = self._check(x)
        n = self.n_
        floor = 1.0 / n
        le = np.empty_like(x)
        for j in range(x.shape[1]):
            le[:, j] = np.searchsorted(self.sorted_[:, j], x[:, j], side="right")
        cdf = le / n
        left = -np.log(np.maximum(cdf, floor))
        right = -np.log(np.maximum(1.0 - cdf + floor, floor))
        auto = np.where(self.skewness_ < 0, left, right)
        return left.sum(axis=1), right.sum(axis=1), auto.sum(axis=1)

    def score(self, x) -> np.ndarray:
        left, right, auto = self.tail_scores(x)
        return np.maximum(np.maximum(left, right), auto)


def average_path_length(n) -> np.ndarray:
    """c(n) = 2 H(n-1) - 2 (n-1)/n with H(i) = ln(i) + Euler's constant; c(1) = 0."""
    n = np.asarray(n, dtype=float)
    out = np.zeros_like(n)
    big = n > 1
    m = n[big]
    out[big] = 2.0 * (np.log(m - 1.0) + EULER_GAMMA) - 2.0 * (m - 1.0) / m
    return out


class _Tree:
    __slots__ = ("feature", "threshold", "left", "right", "size", "depth")

    def __init__(self) -> None:
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.size: list[int] = []
        self.depth: list[int] = []

    def add(self, size: int, depth: int) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.size.append(size)
        self.depth.append(depth)
        return len(self.size) - 1

    def freeze(self) -> None:
        for name in self.__slots__:
            setattr(self, name, np.asarray(getattr(self, name)))


def _grow(x: np.ndarray, max_depth: int, rng: np.random.Generator) -> _Tree:
    tree = _Tree()
    root = tree.add(x.shape[0], 0)
    stack = [(root, np.arange(x.shape[0]))]
    while stack:
        node, idx = stack.pop()
        depth = tree.depth[node]
        if idx.size <= 1 or depth >= max_depth:
            continue
        sub = x[idx]
        lo = sub.min(axis=0)
        hi = sub.max(axis=0)
        splittable = np.flatnonzero(hi > lo)
        if splittable.size == 0:
            continue
        f = int(splittable[rng.integers(splittable.size)])
        t = float(rng.uniform(lo[f], hi[f]))
        go_left = sub[:, f] < t
        tree.feature[node] = f
        tree.threshold[node] = t
        li = tree.add(int(go_left.sum()), depth + 1)
        ri = tree.add(int((~go_left).sum()), depth + 1)
        tree.left[node] = li
        tree.right[node] = ri
        stack.append((li, idx[go_left]))
        stack.append((ri, idx[~go_left]))
    tree.freeze()
    return tree


class IForestDetector(Detector):
    """Isolation forest; score = 2 ** (-E[h(x)] / c(subsample))."""

    kind = "iforest"

    def __init__(self, n_trees: int = 100, subsample: int | None = None, seed: int = 0) -> None:
        self.n_trees = n_trees
        self.subsample = subsample
        self.seed = seed

    def fit(self, train) -> IForestDetector:
        x = _as_train(train)
        n = x.shape[0]
        psi = self.subsample if self.subsample is not None else min(256, n)
        if self.n_trees < 1:
            raise DetectorError("n_trees must be >= 1")
        if not 2 <= psi <= n:
            raise DetectorError(f"subsample must be in [2, {n}], got {psi}")
        max_depth = math.ceil(math.log2(psi))
        self.trees_ = []
        for t in range(self.n_trees):
            rng = np.random.default_rng(self.seed + t)
            rows = rng.choice(n, size=psi, replace=False)
            self.trees_.append(_grow(x[rows], max_depth, rng))
        self.psi_ = psi
        self.train_dim = x.shape[1]
        return self

    def path_lengths(self, x) -> np.ndarray:
        """(n_trees, n_samples) adjusted path lengths h(x)."""
        x = self._check(x)
        out = np.empty((len(self.trees_), x.shape[0]))
        rows = np.arange(x.shape[0])
        for t, tree in enumerate(self.trees_):
            node = np.zeros(x.shape[0], dtype=np.int64)
            while True:
                f = tree.feature[node]
                active = f >= 0
                if not active.any():
                    break
                a = rows[active]
                go_left = x[a, f[active]] < tree.threshold[node[active]]
                node[a] = np.where(go_left, tree.left[node[a]], tree.right[node[a]])
            out[t] = tree.depth[node] + average_path_length(tree.size[node])
        return out

    def score(self, x) -> np.ndarray:
        mean_h = self.path_lengths(x).mean(axis=0)
        return np.power(2.0, -mean_h / average_path_length(self.psi_))


class ExternalScores(Detector):
    """Replays precomputed test scores, one per line, row-aligned with the test split."""

    kind = "external"

    def __init__(self, scores) -> None:
        self.scores = np.asarray(scores, dtype=float).reshape(-1)

    def fit(self, train=None) -> ExternalScores:
        return self

    def score(self, x) -> np.ndarray:
        n = np.atleast_2d(np.asarray(x)).shape[0]
        if n != self.scores.shape[0]:
            raise DetectorError(
                f"external scores have {self.scores.shape[0]} rows but the test set has {n}"
            )
        return self.scores.copy()


def load_external_scores(path: str | Path, n_test: int | None = None) -> ExternalScores:
    values = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            v = float(line)
        except ValueError:
            raise DetectorError(f"{path}:{lineno}: not a number: {line!r}") from None
        if not math.isfinite(v):
            raise DetectorError(f"{path}:{lineno}: score is not finite")
        values.append(v)
    if n_test is not None and len(values) != n_test:
        raise DetectorError(f"{path}: {len(values)} scores for {n_test} test rows")
    return ExternalScores(values)


def fit_knn(train, k: int = 5) -> KNNDetector:
    return KNNDetector(k).fit(train)


def fit_pca(train, n_components: int | None = None) -> PCADetector:
    return PCADetector(n_components).fit(train)


def fit_ecod(train) -> ECODDetector:
    return ECODDetector().fit(train)


def fit_iforest(train, n_trees: int = 100, subsample: int | None = None, seed: int = 0) -> IForestDetector:
    return IForestDetector(n_trees, subsample, seed).fit(train)


DETECTORS = ("knn", "pca", "ecod", "iforest")


def make_detector(name: str, seed: int = 0, n_test: int | None = None) -> Detector:
    """Build an unfitted detector from a CLI name such as ``knn`` or ``external:scores.txt``."""
    if name.startswith("external:"):
        return load_external_scores(name.split(":", 1)[1], n_test)
    if name == "knn":
        return KNNDetector()
    if name == "pca":
        return PCADetector()
    if name == "ecod":
        return ECODDetector()
    if name == "iforest":
        return IForestDetector(seed=seed)
    raise DetectorError(f"unknown detector {name!r}")
