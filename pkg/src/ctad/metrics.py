"""Ranking metrics, the paired one-tailed t-test and the class-conditional OT gap."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class EvalResult:
    auc_roc: float
    auc_pr: float
    n_pos: int
    n_neg: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class PairedTestResult:
    mean_diff: float
    t_stat: float
    p_value: float
    df: int
    win_count: int
    n: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class GapReport:
    mean_ot_normal: float
    mean_ot_anomaly: float
    increase_pct: float

    def to_dict(self) -> dict:
        return asdict(self)


def _prepare(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=float).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if s.shape != y.shape:
        raise MetricError(f"{s.size} scores for {y.size} labels")
    if not np.all(np.isin(y, (0, 1))):
        raise MetricError("labels must be 0 or 1")
    return s, y.astype(np.int64)


def auc_roc(scores, labels) -> float:
    """Mann-Whitney AUC: (concordant pairs + ties / 2) / (n_pos * n_neg).

    Computed from doubled mid-ranks in integer arithmetic, so the result is
    the exactly rounded ratio.
    """
    s, y = _prepare(scores, labels)
    n_pos = int(y.sum())
    n_neg = int(y.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC-ROC needs both classes")
    order = np.argsort(s, kind="mergesort")
    sorted_s = s[order]
    # doubled mid-rank of each tie group: first + last (1-based)
    boundaries = np.flatnonzero(np.diff(sorted_s)) + 1
    starts = np.concatenate([[0], boundaries])
    ends = np.concatenate([boundaries, [s.size]])
    twice_rank = np.empty(s.size, dtype=np.int64)
    for a, b in zip(starts.tolist(), ends.tolist()):
        twice_rank[a:b] = (a + 1) + b
    pos_twice = int(twice_rank[y[order] == 1].sum())
    twice_u = pos_twice - n_pos * (n_pos + 1)
    return twice_u / (2 * n_pos * n_neg)


def auc_pr(scores, labels) -> float:
    """Average precision, sum over thresholds of (R_n - R_{n-1}) * P_n.

    Tied scores form a single threshold.
    """
    s, y = _prepare(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise MetricError("AUC-PR needs at least one positive")
    order = np.argsort(-s, kind="mergesort")
    sorted_s = s[order]
    sorted_y = y[order]
    ends = np.concatenate([np.flatnonzero(np.diff(sorted_s)) + 1, [s.size]])
    tp = np.cumsum(sorted_y)[ends - 1]
    precision = tp / ends
    recall = tp / n_pos
    prev = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev) * precision))


def evaluate(scores, labels) -> EvalResult:
    _, y = _prepare(scores, labels)
    n_pos = int(y.sum())
    return EvalResult(auc_roc(scores, labels), auc_pr(scores, labels), n_pos, int(y.size - n_pos))


def _betacf(a: float, b: float, x: float, eps: float = 1e-16, max_iter: int = 10_000) -> float:
    # modified Lentz evaluation of the incomplete-beta continued fraction
    tiny = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def betainc_regularized(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_sf(t: float, df: float) -> float:
    """P(T > t) for Student's t with ``df`` degrees of freedom."""
    if math.isinf(t):
        return 0.0 if t > 0 else 1.0
    tail = 0.5 * betainc_regularized(df / 2.0, 0.5, df / (df + t * t))
    return tail if t >= 0 else 1.0 - tail


def paired_t_test_one_tailed(after, before) -> PairedTestResult:
    """Test H1: mean(after - before) > 0."""
    a = np.asarray(after, dtype=float).reshape(-1)
    b = np.asarray(before, dtype=float).reshape(-1)
    if a.shape != b.shape:
        raise MetricError("paired samples must have equal length")
    n = a.size
    if n < 2:
        raise MetricError("paired t-test needs n >= 2")
    d = a - b
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    wins = int((d > 0).sum())
    if sd == 0.0:
        t = math.copysign(math.inf, mean) if mean != 0 else 0.0
        p = 0.0 if mean > 0 else (1.0 if mean < 0 else 0.5)
    else:
        t = mean / (sd / math.sqrt(n))
        p = student_t_sf(t, n - 1)
    return PairedTestResult(mean_diff=mean, t_stat=t, p_value=p, df=n - 1, win_count=wins, n=n)


def gap_report(ot_values, labels) -> GapReport:
    v, y = _prepare(ot_values, labels)
    if y.all() or not y.any():
        raise MetricError("gap report needs both classes")
    mean_n = float(v[y == 0].mean())
    mean_a = float(v[y == 1].mean())
    if mean_n > 0:
        inc = 100.0 * (mean_a - mean_n) / mean_n
    else:
        inc = math.inf if mean_a > 0 else 0.0
    return GapReport(mean_ot_normal=mean_n, mean_ot_anomaly=mean_a, increase_pct=inc)
