import logging
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np
from scipy.linalg import null_space
from scipy.spatial import cKDTree

from rlab.utils.errors import DegenerateNormal, EmptyIntersection, PreconditionViolated

logger = logging.getLogger(__name__)

NORMAL_TOL = 1e-12
MIN_AMBIENT_DIM = 2
MAX_AMBIENT_DIM = 8

# cKDTree compares squared distances; query slightly wider and filter with numpy
_QUERY_PAD = 1.0 + 1e-9


def as_vec(v) -> np.ndarray:
    """Coerce to a finite 1-d float vector."""
    vec = np.asarray(v, dtype=float).reshape(-1)
    if not np.all(np.isfinite(vec)):
        raise PreconditionViolated("vector has non-finite entries", {"vector": vec.tolist()})
    return vec


def check_ambient_dim(d: int) -> int:
    if not MIN_AMBIENT_DIM <= d <= MAX_AMBIENT_DIM:
        raise PreconditionViolated(
            f"ambient dimension {d} outside [{MIN_AMBIENT_DIM}, {MAX_AMBIENT_DIM}]"
        )
    return d


def unit(v) -> np.ndarray:
    vec = as_vec(v)
    length = np.linalg.norm(vec)
    if length == 0.0:
        raise DegenerateNormal("cannot normalize the zero vector")
    return vec / length


def tangent_basis(normal) -> np.ndarray:
    """Orthonormal basis (rows) of the hyperplane orthogonal to `normal`."""
    return null_space(as_vec(normal)[None, :]).T


@dataclass(frozen=True)
class AffinePlane:
    """Codimension-1 affine plane through `base` with unit `normal`."""

    base: np.ndarray
    normal: np.ndarray

    def __post_init__(self):
        base = as_vec(self.base)
        normal = as_vec(self.normal)
        if base.shape != normal.shape:
            raise PreconditionViolated("plane base and normal differ in dimension")
        if abs(np.linalg.norm(normal) - 1.0) > NORMAL_TOL:
            raise PreconditionViolated(
                "plane normal is not a unit vector", {"norm": float(np.linalg.norm(normal))}
            )
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "normal", normal)

    @classmethod
    def through(cls, point, direction) -> "AffinePlane":
        """Plane through `point` whose normal is `direction` rescaled to unit length."""
        return cls(as_vec(point), unit(direction))

    @property
    def ambient_dim(self) -> int:
        return self.base.shape[0]

    def translated_to(self, point) -> "AffinePlane":
        return AffinePlane(as_vec(point), self.normal)

    def tangent_basis(self) -> np.ndarray:
        return tangent_basis(self.normal)

    def to_dict(self) -> dict:
        return {"base": self.base.tolist(), "normal": self.normal.tolist()}


@dataclass(frozen=True)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", as_vec(self.center))
        if not self.radius > 0:
            raise PreconditionViolated(f"ball radius must be positive, got {self.radius}")
        object.__setattr__(self, "radius", float(self.radius))


def project_to_plane(y, plane: AffinePlane) -> np.ndarray:
    """Orthogonal projection onto `plane`; accepts a point or an (m, d) array."""
    y = np.asarray(y, dtype=float)
    heights = (y - plane.base) @ plane.normal
    return y - np.multiply.outer(heights, plane.normal)


def dist_to_plane(y, plane: AffinePlane):
    y = np.asarray(y, dtype=float)
    return np.abs((y - plane.base) @ plane.normal)


def local_hausdorff_many(base_p, normal_p, base_q, normal_q, centers, radii) -> np.ndarray:
    """Row-wise d_{x,r}(P, Q) for stacked planes; NaN where a plane misses the closed ball.

    For a disk P ∩ B̄_r(x) the farthest point from Q sits on the rim, so the directed
    distance is |<x_P - b_Q, n_Q>| + ρ·|π_{T_P} n_Q| with ρ the disk radius.
    """
    base_p, normal_p = np.atleast_2d(base_p), np.atleast_2d(normal_p)
    base_q, normal_q = np.atleast_2d(base_q), np.atleast_2d(normal_q)
    centers = np.atleast_2d(centers)
    radii = np.broadcast_to(np.asarray(radii, dtype=float), (centers.shape[0],))

    def directed(b_from, n_from, b_to, n_to):
        heights = np.einsum("ij,ij->i", centers - b_from, n_from)
        foot = centers - heights[:, None] * n_from
        rho = np.sqrt(np.clip(radii**2 - heights**2, 0.0, None))
        tilt = n_to - np.einsum("ij,ij->i", n_to, n_from)[:, None] * n_from
        offset = np.abs(np.einsum("ij,ij->i", foot - b_to, n_to))
        return offset + rho * np.linalg.norm(tilt, axis=1), np.abs(heights)

    pq, height_p = directed(base_p, normal_p, base_q, normal_q)
    qp, height_q = directed(base_q, normal_q, base_p, normal_p)
    value = np.maximum(pq, qp) / radii
    missing = (height_p > radii) | (height_q > radii)
    return np.where(missing, np.nan, value)


def plane_local_hausdorff(P: AffinePlane, Q: AffinePlane, x, r: float) -> float:
    """Normalized local Hausdorff distance d_{x,r}(P, Q) between two hyperplanes."""
    x = as_vec(x)
    value = local_hausdorff_many(P.base, P.normal, Q.base, Q.normal, x, r)[0]
    if np.isnan(value):
        raise EmptyIntersection(
            "plane does not meet the ball",
            {"center": x.tolist(), "radius": float(r),
             "dist_P": float(dist_to_plane(x, P)), "dist_Q": float(dist_to_plane(x, Q))},
        )
    return float(value)


class SpatialIndex:
    """Build-once KD-tree over a frozen point list; ball queries are open balls."""

    def __init__(self, points):
        pts = np.array(points, dtype=float, copy=True)
        if pts.ndim != 2:
            raise PreconditionViolated("spatial index expects an (N, d) array")
        pts.setflags(write=False)
        self.points = pts
        self.tree = cKDTree(pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    def range_query(self, center, radius: float) -> np.ndarray:
        """Sorted indices with |p - center| < radius."""
        if radius <= 0 or len(self) == 0:
            return np.empty(0, dtype=np.intp)
        center = np.asarray(center, dtype=float)
        idx = np.asarray(self.tree.query_ball_point(center, radius * _QUERY_PAD), dtype=np.intp)
        if idx.size:
            idx = idx[np.linalg.norm(self.points[idx] - center, axis=1) < radius]
            idx.sort()
        return idx

    def range_query_many(self, centers, radius: float) -> List[np.ndarray]:
        centers = np.atleast_2d(np.asarray(centers, dtype=float))
        if radius <= 0 or len(self) == 0:
            return [np.empty(0, dtype=np.intp) for _ in range(centers.shape[0])]
        raw = self.tree.query_ball_point(centers, radius * _QUERY_PAD)
        hits = []
        for center, found in zip(centers, raw):
            idx = np.asarray(found, dtype=np.intp)
            if idx.size:
                idx = idx[np.linalg.norm(self.points[idx] - center, axis=1) < radius]
                idx.sort()
            hits.append(idx)
        return hits

    def pairs_within(self, radius: float) -> np.ndarray:
        """(m, 2) index pairs i < j with |p_i - p_j| <= radius."""
        if len(self) < 2:
            return np.empty((0, 2), dtype=np.intp)
        return self.tree.query_pairs(radius, output_type="ndarray")

    def pairs_with(self, queries, radius: float):
        """(query_rows, point_indices) of every pair with |q - p| <= radius."""
        queries = np.atleast_2d(np.asarray(queries, dtype=float))
        if len(self) == 0 or queries.shape[0] == 0:
            return np.empty(0, dtype=np.intp), np.empty(0, dtype=np.intp)
        found = self.tree.query_ball_point(queries, radius)
        lengths = np.array([len(f) for f in found], dtype=np.intp)
        rows = np.repeat(np.arange(queries.shape[0], dtype=np.intp), lengths)
        cols = np.concatenate([np.asarray(f, dtype=np.intp) for f in found]) if lengths.sum() else rows[:0]
        return rows, cols

    def nearest(self, queries, k: int = 1):
        return self.tree.query(np.asarray(queries, dtype=float), k=k)

    def neighbor_spacing(self, k: int = 1) -> np.ndarray:
        """Distance from every point to its k-th nearest other point."""
        if len(self) <= k:
            return np.full(len(self), np.inf)
        dist, _ = self.tree.query(self.points, k=k + 1)
        return dist[:, k]


def range_query(idx: SpatialIndex, b: Ball) -> np.ndarray:
    return idx.range_query(b.center, b.radius)


def orthonormalize(vectors: Sequence, dim: int) -> np.ndarray:
    """Orthonormal rows spanning the given vectors (Gram-Schmidt via QR)."""
    if len(vectors) == 0:
        return np.zeros((0, dim))
    mat = np.asarray(vectors, dtype=float).reshape(len(vectors), dim)
    q, _ = np.linalg.qr(mat.T)
    return q.T[: mat.shape[0]]
