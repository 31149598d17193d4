"""Exact discrete optimal transport between uniform measures.

The calibration term compares an empirical measure over ``M + 1`` points
(``M`` reference samples plus the test sample, last row) with a uniform
measure over ``K`` centroids. With uniform masses the balanced problem
scales to an integral transportation problem: each source ships ``K`` units
and each sink receives ``M + 1`` units. That problem is solved exactly by a
transportation simplex (MODI potentials on a spanning-tree basis) in integer
flow arithmetic, so the marginals of the returned plan are exact up to the
final division.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

BOUND_SLACK = 1e-9
# switch to Bland's rule after this many consecutive degenerate pivots
_DEGENERATE_STREAK = 50


class BoundViolation(AssertionError):
    """Raised when the solver output breaks the lower bound (a solver bug)."""


@dataclass(frozen=True)
class TransportPlan:
    mass: np.ndarray
    cost: float

    def row_sums(self) -> np.ndarray:
        return self.mass.sum(axis=1)

    def col_sums(self) -> np.ndarray:
        return self.mass.sum(axis=0)


@dataclass(frozen=True)
class BoundReport:
    """Analytic sandwich around one OT evaluation.

    ``lower`` is the test sample's nearest-centroid distance divided by
    ``M + 1``; ``upper`` adds the references' nearest-centroid distances.
    ``upper_holds`` is reported rather than enforced: the upper value is only
    a bound when the nearest-centroid assignment already meets the centroid
    marginals.
    """

    ot: float
    lower: float
    upper: float
    nearest_dist: float
    ref_dists: np.ndarray

    @property
    def lower_holds(self) -> bool:
        return self.ot >= self.lower - BOUND_SLACK

    @property
    def upper_holds(self) -> bool:
        return self.ot <= self.upper + BOUND_SLACK


def _centroid_array(q) -> np.ndarray:
    return np.asarray(getattr(q, "centroids", q), dtype=float)


def _ref_array(refs) -> np.ndarray:
    return np.asarray(getattr(refs, "points", refs), dtype=float)


def pairwise_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Euclidean distances between rows of ``a`` and rows of ``b``."""
    out = np.empty((a.shape[0], b.shape[0]))
    step = max(1, 4_000_000 // max(1, b.size))
    for start in range(0, a.shape[0], step):
        diff = a[start : start + step, None, :] - b[None, :, :]
        out[start : start + step] = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return out


def build_cost(refs, x_test, q) -> np.ndarray:
    """Cost matrix of shape ``(M + 1, K)``; the last row belongs to ``x_test``."""
    centroids = _centroid_array(q)
    if centroids.ndim != 2 or centroids.shape[0] < 1:
        raise ValueError("need at least one centroid as a (K, D) array")
    dim = centroids.shape[1]
    x = np.asarray(x_test, dtype=float).reshape(-1)
    if x.shape[0] != dim:
        raise ValueError(f"x_test has dimension {x.shape[0]}, centroids have {dim}")
    points = _ref_array(refs)
    if points.size == 0:
        points = np.empty((0, dim))
    elif points.ndim == 1:
        points = points[None, :]
    if points.ndim != 2 or points.shape[1] != dim:
        raise ValueError(f"references have dimension {points.shape[1]}, centroids have {dim}")
    sources = np.vstack([points, x[None, :]])
    return pairwise_distances(sources, centroids)


def _initial_basis(cost, supply, demand):
    """Matrix-minimum starting basis with exactly m + n - 1 cells forming a tree."""
    m, n = cost.shape
    s = list(supply)
    d = list(demand)
    row_alive = [True] * m
    col_alive = [True] * n
    rows_left, cols_left = m, n
    flow: dict[tuple[int, int], int] = {}
    for flat in np.argsort(cost, axis=None, kind="stable").tolist():
        i, j = divmod(flat, n)
        if not (row_alive[i] and col_alive[j]):
            continue
        x = min(s[i], d[j])
        flow[(i, j)] = x
        s[i] -= x
        d[j] -= x
        if rows_left == 1 and cols_left == 1:
            break
        if s[i] == 0 and rows_left > 1:
            row_alive[i] = False
            rows_left -= 1
        else:
            col_alive[j] = False
            cols_left -= 1
    return flow


def _potentials(cost, row_adj, col_adj):
    m, n = cost.shape
    u = [0.0] * m
    v = [0.0] * n
    seen_r = [False] * m
    seen_c = [False] * n
    seen_r[0] = True
    stack = [(0, True)]
    while stack:
        node, is_row = stack.pop()
        if is_row:
            for j in row_adj[node]:
                if not seen_c[j]:
                    seen_c[j] = True
                    v[j] = cost[node, j] - u[node]
                    stack.append((j, False))
        else:
            for i in col_adj[node]:
                if not seen_r[i]:
                    seen_r[i] = True
                    u[i] = cost[i, node] - v[node]
                    stack.append((i, True))
    return np.array(u), np.array(v)


def _tree_path(p, q, row_adj, col_adj):
    """Alternating cell sequence on the tree path from row ``p`` to column ``q``."""
    parent: dict[tuple[int, bool], tuple[int, bool] | None] = {(p, True): None}
    queue = deque([(p, True)])
    target = (q, False)
    while queue:
        node = queue.popleft()
        if node == target:
            break
        idx, is_row = node
        nbrs = row_adj[idx] if is_row else col_adj[idx]
        for k in nbrs:
            nxt = (k, not is_row)
            if nxt not in parent:
                parent[nxt] = node
                queue.append(nxt)
    cells = []
    node = target
    while parent[node] is not None:
        prev = parent[node]
        cells.append((prev[0], node[0]) if prev[1] else (node[0], prev[0]))
        node = prev
    # cells run from q back to p; first cell touches column q and takes "-"
    return cells


def transport_simplex(cost, supply, demand, max_iter: int = 100_000):
    """Solve a balanced integral transportation problem exactly.

    Args:
        cost: (m, n) array of finite costs.
        supply: m nonnegative integers.
        demand: n nonnegative integers with the same total as ``supply``.

    Returns:
        (m, n) integer flow array of an optimal basic solution.
    """
    cost = np.asarray(cost, dtype=float)
    m, n = cost.shape
    if sum(supply) != sum(demand):
        raise ValueError("supply and demand totals differ")
    flow = _initial_basis(cost, supply, demand)
    row_adj = [set() for _ in range(m)]
    col_adj = [set() for _ in range(n)]
    for i, j in flow:
        row_adj[i].add(j)
        col_adj[j].add(i)

    tol = 1e-12 * (1.0 + float(np.abs(cost).max(initial=0.0)))
    degenerate = 0
    for _ in range(max_iter):
        u, v = _potentials(cost, row_adj, col_adj)
        reduced = cost - u[:, None] - v[None, :]
        bland = degenerate >= _DEGENERATE_STREAK
        if bland:
            candidates = np.flatnonzero(reduced.ravel() < -tol)
            if candidates.size == 0:
                break
            flat = int(candidates[0])
        else:
            flat = int(np.argmin(reduced))
            if reduced.flat[flat] >= -tol:
                break
        p, q = divmod(flat, n)
        path = _tree_path(p, q, row_adj, col_adj)
        minus = path[0::2]
        plus = path[1::2]
        theta = min(flow[c] for c in minus)
        ties = [c for c in minus if flow[c] == theta]
        leave = min(ties) if bland else ties[0]
        for c in minus:
            flow[c] -= theta
        for c in plus:
            flow[c] += theta
        flow[(p, q)] = theta
        del flow[leave]
        row_adj[leave[0]].discard(leave[1])
        col_adj[leave[1]].discard(leave[0])
        row_adj[p].add(q)
        col_adj[q].add(p)
        degenerate = degenerate + 1 if theta == 0 else 0
    else:
        raise RuntimeError("transportation simplex did not converge")

    out = np.zeros((m, n), dtype=np.int64)
    for (i, j), x in flow.items():
        out[i, j] = x
    return out


def solve_ot(cost) -> TransportPlan:
    """Exact OT plan between uniform measures on the rows and columns of ``cost``."""
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2 or 0 in cost.shape:
        raise ValueError("cost must be a non-empty 2-D matrix")
    if not np.all(np.isfinite(cost)) or np.any(cost < 0):
        raise ValueError("cost entries must be finite and nonnegative")
    m, n = cost.shape
    if n == 1 or m == 1:
        mass = np.full((m, n), 1.0 / (m * n))
        return TransportPlan(mass=mass, cost=float((mass * cost).sum()))
    units = transport_simplex(cost, [n] * m, [m] * n)
    mass = units / float(m * n)
    total = float(np.dot(units.ravel().astype(float), cost.ravel())) / (m * n)
    return TransportPlan(mass=mass, cost=total)


def ot_distance(refs, x_test, q) -> float:
    return solve_ot(build_cost(refs, x_test, q)).cost


def bounds(refs, x_test, q) -> BoundReport:
    """OT value together with the nearest-centroid sandwich.

    Raises:
        BoundViolation: if the OT value falls below ``d* / (M + 1)``.
    """
    cost = build_cost(refs, x_test, q)
    ot = solve_ot(cost).cost
    nearest = cost.min(axis=1)
    m1 = cost.shape[0]
    d_star = float(nearest[-1])
    ref_dists = nearest[:-1].copy()
    report = BoundReport(
        ot=ot,
        lower=d_star / m1,
        upper=(float(ref_dists.sum()) + d_star) / m1,
        nearest_dist=d_star,
        ref_dists=ref_dists,
    )
    if not report.lower_holds:
        raise BoundViolation(f"OT {ot!r} below lower bound {report.lower!r}")
    return report
