"""
Geometric substrate: vector sets, centroids, diameters and exact minimum enclosing balls.

Every function here is pure and works in float64. Point collections are
``(k, d)`` arrays; a 1-D array is read as ``k`` scalar points.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np

from clusteragg.core.config import settings
from clusteragg.core.exceptions import DimensionMismatchError, EmptySetError, ValidationError

PointsLike = Union[np.ndarray, Sequence[Sequence[float]], Sequence[float]]


def as_points(points: PointsLike, operation: str = "geometry") -> np.ndarray:
    """Coerce input into a finite ``(k, d)`` float64 array."""
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValidationError(f"{operation}: expected a 2-D array of points, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise EmptySetError(operation)
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{operation}: points must be finite")
    return arr


@dataclass(frozen=True)
class VectorSet:
    """An ordered collection of ``n`` update vectors with an outlier budget ``f``."""

    points: np.ndarray
    f: int = 0

    def __post_init__(self) -> None:
        arr = as_points(self.points, "VectorSet")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "points", arr)
        if not 0 <= self.f < arr.shape[0]:
            raise ValidationError(
                f"Outlier budget f={self.f} must satisfy 0 <= f < n={arr.shape[0]}",
                field="f",
            )

    @classmethod
    def from_vectors(cls, vectors: Iterable[Sequence[float]], f: int = 0) -> "VectorSet":
        rows = [np.asarray(v, dtype=np.float64).ravel() for v in vectors]
        if not rows:
            raise EmptySetError("VectorSet")
        d = rows[0].shape[0]
        for row in rows[1:]:
            if row.shape[0] != d:
                raise DimensionMismatchError(d, row.shape[0])
        return cls(np.vstack(rows), f)

    @property
    def n(self) -> int:
        return int(self.points.shape[0])

    @property
    def d(self) -> int:
        return int(self.points.shape[1])

    def subset(self, indices: Iterable[int]) -> np.ndarray:
        return self.points[list(indices)]

    def with_f(self, f: int) -> "VectorSet":
        return VectorSet(self.points, f)

    def translated(self, shift: Sequence[float]) -> "VectorSet":
        return VectorSet(self.points + np.asarray(shift, dtype=np.float64), self.f)

    def scaled(self, factor: float) -> "VectorSet":
        return VectorSet(self.points * factor, self.f)

    def permuted(self, order: Sequence[int]) -> "VectorSet":
        return VectorSet(self.points[list(order)], self.f)


@dataclass(frozen=True)
class Ball:
    """Closed Euclidean ball ``B(center, radius)``."""

    center: np.ndarray
    radius: float

    def contains(self, point: np.ndarray, tol: Optional[float] = None) -> bool:
        tol = settings.geometry_tolerance if tol is None else tol
        return float(np.linalg.norm(point - self.center)) <= self.radius + tol * (1.0 + self.radius)


def centroid(points: PointsLike) -> np.ndarray:
    """Coordinate-wise arithmetic mean."""
    return as_points(points, "centroid").mean(axis=0)


def pairwise_sq_distances(points: PointsLike) -> np.ndarray:
    """Squared Euclidean distance matrix built from explicit differences (exactly symmetric)."""
    arr = as_points(points, "pairwise_sq_distances")
    diff = arr[:, None, :] - arr[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def diameter(points: PointsLike) -> float:
    """Largest pairwise Euclidean distance; 0 for a singleton."""
    arr = as_points(points, "diameter")
    if arr.shape[0] == 1:
        return 0.0
    return float(np.sqrt(pairwise_sq_distances(arr).max()))


def _circumscribed_ball(boundary: List[np.ndarray]) -> Ball:
    """Smallest ball with every boundary point on its sphere (center in their affine hull)."""
    anchor = boundary[0]
    if len(boundary) == 1:
        return Ball(anchor.copy(), 0.0)
    offsets = np.vstack([p - anchor for p in boundary[1:]])
    gram = offsets @ offsets.T
    rhs = 0.5 * np.diag(gram)
    # lstsq keeps affinely dependent boundaries (duplicates, collinear triples) solvable
    coeffs, *_ = np.linalg.lstsq(gram, rhs, rcond=None)
    center = anchor + coeffs @ offsets
    radius = max(float(np.linalg.norm(p - center)) for p in boundary)
    return Ball(center, radius)


def _welzl(points: np.ndarray, count: int, boundary: List[np.ndarray], dim: int, tol: float) -> Optional[Ball]:
    if count == 0 or len(boundary) == dim + 1:
        return _circumscribed_ball(boundary) if boundary else None
    point = points[count - 1]
    ball = _welzl(points, count - 1, boundary, dim, tol)
    if ball is not None and ball.contains(point, tol):
        return ball
    return _welzl(points, count - 1, boundary + [point], dim, tol)


def exact_meb(points: PointsLike, seed: int = 0, tol: Optional[float] = None) -> Ball:
    """
    Exact minimum enclosing ball via Welzl's support-point recursion.

    Point order is shuffled with ``seed`` for expected-linear behaviour; the
    returned radius does not depend on the seed.
    """
    arr = as_points(points, "exact_meb")
    tol = settings.geometry_tolerance if tol is None else tol
    if np.all(arr == arr[0]):
        return Ball(arr[0].copy(), 0.0)
    order = np.random.default_rng(seed).permutation(arr.shape[0])
    shuffled = arr[order]
    ball = _welzl(shuffled, shuffled.shape[0], [], arr.shape[1], tol)
    assert ball is not None
    # covering radius over the unshuffled input
    radius = float(np.sqrt(((arr - ball.center) ** 2).sum(axis=1).max()))
    return Ball(ball.center, radius)
