import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import List, Optional, Sequence

import numpy as np
from scipy.special import gamma

from rlab.geometry.core import Ball, SpatialIndex, as_vec, check_ambient_dim
from rlab.models.reports import AhlforsAudit, AhlforsRecord, DoublingAudit
from rlab.utils.errors import EmptyBall, MissingNormals, PreconditionViolated
from rlab.utils.parallel import parallel_map

logger = logging.getLogger(__name__)

KNN_WEIGHT_K = 8
H_MIN_FACTOR = 3.0
NORMAL_UNIT_TOL = 1e-9


def disk_volume(n: int) -> float:
    """Volume ω_n of the unit n-disk."""
    return math.pi ** (n / 2) / gamma(n / 2 + 1)


def estimate_weights(points: np.ndarray, dim_n: int, k: int = KNN_WEIGHT_K) -> np.ndarray:
    """Quadrature masses from the k-NN ball: w_i = ω_n r_k(i)^n / k."""
    index = SpatialIndex(points)
    k = min(k, len(index) - 1)
    if k < 1:
        return np.ones(len(index))
    radius = index.neighbor_spacing(k)
    return disk_volume(dim_n) * radius**dim_n / k


@dataclass(frozen=True, eq=False)
class DiscreteSurface:
    """Weighted point sample of an n-dimensional set in R^{n+1}, optionally with unit normals."""

    points: np.ndarray
    weights: np.ndarray
    dim_n: int
    normals: Optional[np.ndarray] = None
    index: SpatialIndex = field(init=False, repr=False)

    def __post_init__(self):
        points = np.array(self.points, dtype=float)
        weights = np.array(self.weights, dtype=float).reshape(-1)
        if points.ndim != 2 or points.shape[0] == 0:
            raise PreconditionViolated("surface needs a non-empty (N, n+1) point array")
        check_ambient_dim(points.shape[1])
        if points.shape[1] != self.dim_n + 1:
            raise PreconditionViolated(
                f"intrinsic dimension {self.dim_n} does not match ambient {points.shape[1]}"
            )
        if weights.shape[0] != points.shape[0]:
            raise PreconditionViolated("weights and points differ in length")
        if not np.all(np.isfinite(points)):
            raise PreconditionViolated("surface points must be finite")
        if not (np.all(weights > 0) and np.all(np.isfinite(weights))):
            raise PreconditionViolated("weights must be positive and finite")
        normals = self.normals
        if normals is not None:
            normals = np.array(normals, dtype=float)
            if normals.shape != points.shape:
                raise PreconditionViolated("normals and points differ in shape")
            worst = np.max(np.abs(np.linalg.norm(normals, axis=1) - 1.0))
            if worst > NORMAL_UNIT_TOL:
                raise PreconditionViolated("normals must be unit vectors", {"worst_deviation": float(worst)})
            normals.setflags(write=False)
        points.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "normals", normals)
        object.__setattr__(self, "index", SpatialIndex(points))

    @classmethod
    def from_points(cls, points, normals=None, weights=None, dim_n: Optional[int] = None) -> "DiscreteSurface":
        points = np.asarray(points, dtype=float)
        dim_n = points.shape[1] - 1 if dim_n is None else dim_n
        if weights is None:
            weights = estimate_weights(points, dim_n)
            logger.info(f"Estimated k-NN weights for {points.shape[0]} points (k={KNN_WEIGHT_K})")
        return cls(points=points, weights=weights, dim_n=dim_n, normals=normals)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def ambient_dim(self) -> int:
        return self.points.shape[1]

    @property
    def has_normals(self) -> bool:
        return self.normals is not None

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    def require_normals(self) -> np.ndarray:
        if self.normals is None:
            raise MissingNormals("this operation needs unit normals on the surface")
        return self.normals

    @cached_property
    def median_spacing(self) -> float:
        if self.n_points < 2:
            return 0.0
        return float(np.median(self.index.neighbor_spacing(1)))

    @cached_property
    def h_min(self) -> float:
        """Smallest radius at which the discrete measure is trusted."""
        return H_MIN_FACTOR * self.median_spacing

    def ball_indices(self, x, r: float) -> np.ndarray:
        return self.index.range_query(x, r)

    def subset(self, indices) -> "DiscreteSurface":
        indices = np.asarray(indices, dtype=np.intp)
        normals = None if self.normals is None else self.normals[indices]
        return DiscreteSurface(self.points[indices], self.weights[indices], self.dim_n, normals)

    def transformed(self, rotation=None, shift=None, scale: float = 1.0) -> "DiscreteSurface":
        """Image under y -> scale·R·y + shift; weights pick up scale^n, normals R·ν."""
        rot = np.eye(self.ambient_dim) if rotation is None else np.asarray(rotation, dtype=float)
        shift = np.zeros(self.ambient_dim) if shift is None else as_vec(shift)
        points = scale * self.points @ rot.T + shift
        normals = None if self.normals is None else self.normals @ rot.T
        return DiscreteSurface(points, self.weights * scale**self.dim_n, self.dim_n, normals)


def _ball_or_raise(S: DiscreteSurface, x, r: float) -> np.ndarray:
    idx = S.ball_indices(x, r)
    if idx.size == 0:
        raise EmptyBall("ball contains no sample points", {"center": as_vec(x).tolist(), "radius": float(r)})
    return idx


def mu_ball(S: DiscreteSurface, b: Ball) -> float:
    idx = S.ball_indices(b.center, b.radius)
    return float(S.weights[idx].sum())


def average(S: DiscreteSurface, f, x, r: float) -> float:
    """Weighted mean f_{x,r} of a per-point scalar field over B_r(x)."""
    idx = _ball_or_raise(S, x, r)
    values = np.asarray(f, dtype=float)[idx]
    return float(np.average(values, weights=S.weights[idx]))


def average_normal(S: DiscreteSurface, x, r: float) -> np.ndarray:
    normals = S.require_normals()
    idx = _ball_or_raise(S, x, r)
    return np.average(normals[idx], axis=0, weights=S.weights[idx])


def center_of_mass(S: DiscreteSurface, x, r: float) -> np.ndarray:
    idx = _ball_or_raise(S, x, r)
    return np.average(S.points[idx], axis=0, weights=S.weights[idx])


def draw_probes(
    S: DiscreteSurface,
    probe_count: int,
    seed: int = 0,
    center=None,
    radius: Optional[float] = None,
) -> np.ndarray:
    """Deterministic sorted sample of point indices, optionally restricted to a ball."""
    if center is not None and radius is not None:
        candidates = S.ball_indices(center, radius)
    else:
        candidates = np.arange(S.n_points)
    count = min(int(probe_count), candidates.size)
    if count <= 0:
        return np.empty(0, dtype=np.intp)
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(candidates, size=count, replace=False))


def resolvable_radii(S: DiscreteSurface, radii: Sequence[float]):
    radii = sorted(float(r) for r in radii)
    kept = [r for r in radii if r >= S.h_min]
    skipped = [r for r in radii if r < S.h_min]
    if skipped:
        logger.warning(f"Skipping {len(skipped)} radii below h_min={S.h_min:.4g}")
    return kept, skipped


def ahlfors_audit(
    S: DiscreteSurface,
    radii: Sequence[float],
    probe_count: int,
    seed: int = 0,
    probe_center=None,
    probe_radius: Optional[float] = None,
    threads: Optional[int] = None,
) -> AhlforsAudit:
    """Measure μ(B_r(x))/r^n over probes × resolvable radii and estimate C_M."""
    outside = [float(r) for r in radii if not 0 < r < 1]
    if outside:
        raise PreconditionViolated("Ahlfors radii must lie in (0, 1)", {"radii": outside})
    kept, skipped = resolvable_radii(S, radii)
    probes = draw_probes(S, probe_count, seed, probe_center, probe_radius)

    def audit_radius(r: float) -> List[AhlforsRecord]:
        hits = S.index.range_query_many(S.points[probes], r)
        records = []
        for probe, idx in zip(probes, hits):
            ratio = float(S.weights[idx].sum()) / r**S.dim_n
            records.append(AhlforsRecord(x_index=int(probe), r=r, ratio=ratio, empty=idx.size == 0))
        return records

    records = [rec for batch in parallel_map(audit_radius, kept, threads) for rec in batch]
    if not records:
        logger.warning("Ahlfors audit produced no records")
        return AhlforsAudit(
            ratio_min=0.0, ratio_max=0.0, c_m=math.inf, records=[], skipped_radii=skipped,
            h_min=S.h_min, flagged=0,
        )
    ratios = np.array([rec.ratio for rec in records])
    ratio_min, ratio_max = float(ratios.min()), float(ratios.max())
    c_m = max(ratio_max, 1.0 / ratio_min) if ratio_min > 0 else math.inf
    flagged = sum(rec.empty for rec in records)
    logger.info(f"Ahlfors audit: {len(records)} records, ratio in [{ratio_min:.4g}, {ratio_max:.4g}]")
    return AhlforsAudit(
        ratio_min=ratio_min, ratio_max=ratio_max, c_m=c_m, records=records,
        skipped_radii=skipped, h_min=S.h_min, flagged=flagged,
    )


def doubling_audit(
    S: DiscreteSurface,
    radii: Sequence[float],
    probe_count: int,
    seed: int = 0,
    threads: Optional[int] = None,
) -> DoublingAudit:
    """Largest μ(B_2r(x))/μ(B_r(x)) over probes × resolvable radii."""
    kept, skipped = resolvable_radii(S, radii)
    probes = draw_probes(S, probe_count, seed)

    def ratios_at(r: float) -> np.ndarray:
        inner = S.index.range_query_many(S.points[probes], r)
        outer = S.index.range_query_many(S.points[probes], 2 * r)
        return np.array([S.weights[o].sum() / S.weights[i].sum() for i, o in zip(inner, outer)])

    batches = parallel_map(ratios_at, kept, threads)
    values = np.concatenate(batches) if batches else np.empty(0)
    worst = float(values.max()) if values.size else math.nan
    return DoublingAudit(kappa0=worst, samples=int(values.size), skipped_radii=skipped, h_min=S.h_min)
