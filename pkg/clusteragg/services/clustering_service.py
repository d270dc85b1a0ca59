"""
Clustering with outliers: exact subset-enumeration oracles and the medoid 2-approximation.

The exact oracles quantify over every member set of size ``n - f`` and are
therefore capped (``settings.enumeration_cap``). The medoid search is the
production path: O(n^2 d) distance work, deterministic, lowest index wins
every tie.
"""
import itertools
from dataclasses import dataclass, field
from typing import List, Optional, Tuple, Union

import numpy as np

from clusteragg.core.config import settings
from clusteragg.core.exceptions import EnumerationCapError, PreconditionError
from clusteragg.core.logging_config import get_logger
from clusteragg.schemas.robustness import ClusterObjective
from clusteragg.services.geometry import (
    PointsLike,
    VectorSet,
    as_points,
    centroid,
    exact_meb,
    pairwise_sq_distances,
)

logger = get_logger("services.clustering")

SetLike = Union[VectorSet, PointsLike]


@dataclass(frozen=True)
class ClusterSolution:
    """A center, the indices it covers, and the objective value."""
    objective: ClusterObjective
    center: np.ndarray
    members: Tuple[int, ...]
    cost: float
    medoid_index: Optional[int] = None
    distance_evaluations: int = 0
    extra: dict = field(default_factory=dict, compare=False)

    def members_centroid(self, points: SetLike) -> np.ndarray:
        return centroid(_points(points)[list(self.members)])


def _points(X: SetLike) -> np.ndarray:
    if isinstance(X, VectorSet):
        return X.points
    return as_points(X, "clustering")


def _budget(X: SetLike, f: Optional[int]) -> int:
    if f is not None:
        return f
    if isinstance(X, VectorSet):
        return X.f
    raise PreconditionError("An outlier budget f is required for raw point arrays")


def knn_of(X: SetLike, c: np.ndarray, k: int, anchor: Optional[int] = None) -> np.ndarray:
    """
    Indices (ascending) of the ``k`` points closest to ``c``.

    Distance ties go to the lower index. ``anchor`` names a member that
    coincides with ``c`` and must be part of the answer.
    """
    P = _points(X)
    n = P.shape[0]
    if not 1 <= k <= n:
        raise PreconditionError(f"k={k} must satisfy 1 <= k <= n={n}")
    diff = P - np.asarray(c, dtype=np.float64)
    sq = np.einsum("ij,ij->i", diff, diff)
    if anchor is not None:
        sq = sq.copy()
        sq[anchor] = -1.0
    order = np.argsort(sq, kind="stable")[:k]
    return np.sort(order)


def cluster_cost(objective: ClusterObjective, c: np.ndarray, S: PointsLike) -> float:
    """Max distance (center) or sum of squared distances (mean) from ``c`` to ``S``."""
    pts = as_points(S, "cluster_cost")
    diff = pts - np.asarray(c, dtype=np.float64)
    sq = np.einsum("ij,ij->i", diff, diff)
    if objective is ClusterObjective.CENTER:
        return float(np.sqrt(sq.max()))
    return float(sq.sum())


def _check_cap(n: int, cap: Optional[int]) -> None:
    cap = settings.enumeration_cap if cap is None else cap
    if n > cap:
        raise EnumerationCapError(n, cap)


def _member_sets(n: int, size: int) -> np.ndarray:
    """All size-``size`` index sets, lexicographic order, one per row."""
    return np.array(list(itertools.combinations(range(n), size)), dtype=np.intp).reshape(-1, size)


def _subset_blocks(D: np.ndarray, combos: np.ndarray) -> np.ndarray:
    return D[combos[:, :, None], combos[:, None, :]]


def exact_center_outliers(X: SetLike, f: Optional[int] = None, cap: Optional[int] = None, seed: int = 0) -> ClusterSolution:
    """Globally minimal ball covering ``n - f`` points, by enumeration of member sets."""
    P = _points(X)
    f = _budget(X, f)
    n = P.shape[0]
    _check_cap(n, cap)
    if not 0 <= f < n:
        raise PreconditionError(f"f={f} must satisfy 0 <= f < n={n}")
    size = n - f
    combos = _member_sets(n, size)
    D = pairwise_sq_distances(P)
    diameters = np.sqrt(_subset_blocks(D, combos).reshape(len(combos), -1).max(axis=1))
    # radius >= diameter / 2, so ascending diameter order allows an early stop
    order = np.argsort(diameters, kind="stable")

    best_radius = np.inf
    best: Optional[Tuple[Tuple[int, ...], np.ndarray]] = None
    evaluated = 0
    for idx in order:
        tol = settings.geometry_tolerance * max(1.0, best_radius if np.isfinite(best_radius) else 1.0)
        if diameters[idx] / 2.0 > best_radius + tol:
            break
        members = tuple(int(i) for i in combos[idx])
        ball = exact_meb(P[list(members)], seed=seed)
        evaluated += 1
        if best is None or ball.radius < best_radius - tol:
            best_radius, best = ball.radius, (members, ball.center)
        elif abs(ball.radius - best_radius) <= tol and members < best[0]:
            best = (members, ball.center)

    assert best is not None
    logger.debug(f"exact 1-center: n={n} f={f} subsets={len(combos)} meb_calls={evaluated}")
    return ClusterSolution(
        objective=ClusterObjective.CENTER,
        center=best[1],
        members=best[0],
        cost=float(best_radius),
        extra={"subsets": len(combos), "meb_calls": evaluated},
    )


def exact_mean_outliers(X: SetLike, f: Optional[int] = None, cap: Optional[int] = None) -> ClusterSolution:
    """Globally minimal 1-mean cost over ``n - f`` points; ties go to the lexicographically first set."""
    P = _points(X)
    f = _budget(X, f)
    n = P.shape[0]
    _check_cap(n, cap)
    if not 0 <= f < n:
        raise PreconditionError(f"f={f} must satisfy 0 <= f < n={n}")
    size = n - f
    combos = _member_sets(n, size)
    D = pairwise_sq_distances(P)
    # sum_i |x_i - mean|^2 = (1 / 2m) sum_{i,j} |x_i - x_j|^2
    costs = _subset_blocks(D, combos).reshape(len(combos), -1).sum(axis=1) / (2.0 * size)
    best_cost = costs.min()
    tol = settings.geometry_tolerance * max(1.0, best_cost)
    idx = int(np.flatnonzero(costs <= best_cost + tol)[0])
    members = tuple(int(i) for i in combos[idx])
    center = centroid(P[list(members)])
    return ClusterSolution(
        objective=ClusterObjective.MEAN,
        center=center,
        members=members,
        cost=cluster_cost(ClusterObjective.MEAN, center, P[list(members)]),
        extra={"subsets": len(combos)},
    )


def _medoid_candidates(objective: ClusterObjective, P: np.ndarray, size: int) -> Tuple[np.ndarray, np.ndarray]:
    """Cost and ``size`` nearest neighbours of every point taken as the medoid."""
    n = P.shape[0]
    if not 1 <= size <= n:
        raise PreconditionError(f"cluster size {size} must satisfy 1 <= size <= n={n}")
    D = pairwise_sq_distances(P)
    ranked = D.copy()
    np.fill_diagonal(ranked, -1.0)
    neighbours = np.argsort(ranked, axis=1, kind="stable")[:, :size]
    near_sq = np.take_along_axis(D, neighbours, axis=1)
    if objective is ClusterObjective.CENTER:
        costs = np.sqrt(near_sq.max(axis=1))
    else:
        costs = near_sq.sum(axis=1)
    return costs, neighbours


def tied_member_sets(objective: ClusterObjective, X: SetLike, size: int, rtol: float = 1e-9) -> List[Tuple[int, ...]]:
    """
    Distinct member sets of the medoid candidates within ``rtol`` of the best cost.

    More than one entry means the medoid search broke a tie by index, so its
    output depends on the input order. With ``size == 1`` every point is a
    zero-cost candidate.
    """
    P = _points(X)
    costs, neighbours = _medoid_candidates(objective, P, size)
    best = float(costs.min())
    tied = np.flatnonzero(costs <= best + rtol * max(best, 1e-300))
    return sorted({tuple(int(i) for i in np.sort(neighbours[j])) for j in tied})


def medoid_search(objective: ClusterObjective, X: SetLike, size: int) -> ClusterSolution:
    """
    Best medoid-anchored cluster of ``size`` points.

    Every input point is tried as the center together with its ``size``
    nearest points (itself included); the cheapest candidate wins, lowest
    index on ties.
    """
    P = _points(X)
    n = P.shape[0]
    costs, neighbours = _medoid_candidates(objective, P, size)
    j = int(np.argmin(costs))
    return ClusterSolution(
        objective=objective,
        center=P[j].copy(),
        members=tuple(int(i) for i in np.sort(neighbours[j])),
        cost=float(costs[j]),
        medoid_index=j,
        distance_evaluations=n * n,
    )


def approx_cluster(objective: ClusterObjective, X: SetLike, f: Optional[int] = None) -> ClusterSolution:
    """Medoid 2-approximation for 1-center / 1-mean with ``f`` outliers (requires f < n/2)."""
    P = _points(X)
    f = _budget(X, f)
    n = P.shape[0]
    if f < 0 or 2 * f >= n:
        raise PreconditionError(f"Outlier clustering requires 0 <= f < n/2 (n={n}, f={f})")
    return medoid_search(objective, P, n - f)
