import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from rlab.analysis.flatness import minimax_plane
from rlab.construction.ccbp import CCBP
from rlab.geometry.core import SpatialIndex, as_vec, local_hausdorff_many, tangent_basis
from rlab.geometry.measure import DiscreteSurface
from rlab.models.reports import (
    BilipEstimate,
    ContainmentReport,
    FlowLevelRecord,
    FlowSummary,
    ReifenbergRecord,
    ReifenbergReport,
    SupportCheck,
)
from rlab.utils.errors import DegeneratePair, FlowDiverged, PreconditionViolated, ResolutionExceeded
from rlab.utils.parallel import chunked, parallel_map

logger = logging.getLogger(__name__)

BUMP_INNER = 8.0
BUMP_OUTER = 10.0
EPS_PRIME_SUPPORT = 10.0
EPS_PRIME_OUTER = 11.0
EPS_PRIME_BALL = 100.0
SUPPORT_RADIUS = 11.0
DIVERGENCE_FACTOR = 10.0
STEP_BOUND = 1.5
PAIR_SEED = 0x5EED
MAX_PAIRS = 1_000_000
CHUNK = 4096


@dataclass(frozen=True)
class BumpProfile:
    """φ(t) = 1 on [0, inner], 0 on [outer, ∞), cubic smoothstep in between (C¹, monotone)."""

    inner: float = BUMP_INNER
    outer: float = BUMP_OUTER

    def __call__(self, t):
        s = np.clip((self.outer - np.asarray(t, dtype=float)) / (self.outer - self.inner), 0.0, 1.0)
        return s * s * (3.0 - 2.0 * s)

    @property
    def max_slope(self) -> float:
        return 1.5 / (self.outer - self.inner)


PHI = BumpProfile()


@dataclass(frozen=True, eq=False)
class FlowTrace:
    grid: np.ndarray                      # z on Σ₀
    params: np.ndarray                    # coordinates of z in Σ₀'s tangent frame
    images: List[np.ndarray]              # f_0 = z, ..., f_J
    eps_prime: Dict[int, np.ndarray]      # k -> ε′_k(f_k(z)), k = 1..J
    step_ratio: List[float]               # max_z |f_{k+1}(z) - f_k(z)| / r_k
    radii: List[float]
    grid_spacing: float
    disk_radius: float
    achieved_eps: float

    @property
    def final(self) -> np.ndarray:
        return self.images[-1]

    @property
    def depth(self) -> int:
        return len(self.images) - 1

    def interior(self, r: float) -> np.ndarray:
        """Grid indices whose r-ball stays inside the sampled disk of Σ₀."""
        return np.flatnonzero(np.linalg.norm(self.params, axis=1) + r <= self.disk_radius)


# ==================== Partition of unity and σ_k ====================


def _weights_many(c: CCBP, k: int, Y: np.ndarray):
    level = c.level(k)
    rows, cols = level.index.pairs_with(Y, BUMP_OUTER * level.r)
    if rows.size == 0:
        return rows, cols, np.empty(0)
    bumps = PHI(np.linalg.norm(Y[rows] - level.refined[cols], axis=1) / level.r)
    totals = np.bincount(rows, weights=bumps, minlength=Y.shape[0])
    theta = bumps / np.maximum(totals[rows], 1.0)
    return rows, cols, theta


def partition_weights(c: CCBP, k: int, y) -> Dict[int, float]:
    """Non-zero θ_jk(y) keyed by j."""
    y = as_vec(y)
    _, cols, theta = _weights_many(c, k, y[None, :])
    return {int(j): float(t) for j, t in zip(cols, theta) if t > 0}


def _sigma_many(c: CCBP, k: int, Y: np.ndarray) -> np.ndarray:
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    rows, cols, theta = _weights_many(c, k, Y)
    out = Y.copy()
    if rows.size:
        level, normals = c.level(k), c.normals[k]
        heights = np.einsum("ij,ij->i", Y[rows] - level.refined[cols], normals[cols])
        np.add.at(out, rows, -(theta * heights)[:, None] * normals[cols])
    return out


def sigma_k(c: CCBP, k: int, y) -> np.ndarray:
    """σ_k(y) = y + Σ_j θ_jk(y)(π_jk(y) − y)."""
    return _sigma_many(c, k, as_vec(y)[None, :])[0]


def support_check(c: CCBP, k: int, Y) -> SupportCheck:
    """σ_k must fix every point outside V_k^11."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    level = c.level(k)
    gap, _ = level.index.nearest(Y)
    outside = np.atleast_1d(gap) >= SUPPORT_RADIUS * level.r
    moved = np.linalg.norm(_sigma_many(c, k, Y) - Y, axis=1) > 0
    bad = int(np.sum(outside & moved))
    return SupportCheck(level=k, probes=int(Y.shape[0]), outside=int(outside.sum()), moved_outside=bad, passed=bad == 0)


# ==================== ε′_k ====================


class EpsilonPrimeTable:
    """Pairwise plane discrepancies D[j, i] between level k and levels k, k-1, built once per CCBP."""

    def __init__(self, c: CCBP):
        self.c = c
        self._tables: Dict[Tuple[int, int], np.ndarray] = {}

    def table(self, k: int, m: int) -> np.ndarray:
        key = (k, m)
        if key not in self._tables:
            c = self.c
            lk, lm = c.level(k), c.level(m)
            reach = EPS_PRIME_SUPPORT * lk.r + EPS_PRIME_OUTER * lm.r
            rows, cols = lm.index.pairs_with(lk.refined, reach)
            D = np.zeros((lk.size, lm.size))
            if rows.size:
                values = local_hausdorff_many(
                    lk.refined[rows], c.normals[k][rows], lm.refined[cols], c.normals[m][cols],
                    lm.refined[cols], EPS_PRIME_BALL * lm.r,
                )
                D[rows, cols] = np.where(np.isnan(values), np.inf, values)
            self._tables[key] = D
        return self._tables[key]

    def evaluate(self, k: int, Y: np.ndarray) -> np.ndarray:
        if k < 1:
            raise PreconditionViolated("ε′_k is defined for k >= 1")
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        lk = self.c.level(k)
        inner = lk.index.range_query_many(Y, EPS_PRIME_SUPPORT * lk.r)
        out = np.zeros(Y.shape[0])
        for m in (k, k - 1):
            D = self.table(k, m)
            lm = self.c.level(m)
            outer = lm.index.range_query_many(Y, EPS_PRIME_OUTER * lm.r)
            for p, (a, b) in enumerate(zip(inner, outer)):
                if a.size and b.size:
                    out[p] = max(out[p], float(D[np.ix_(a, b)].max()))
        return out


def epsilon_prime(c: CCBP, k: int, y) -> float:
    """Worst plane-to-plane discrepancy seen at y; 0 outside V_k^10."""
    return float(EpsilonPrimeTable(c).evaluate(k, as_vec(y)[None, :])[0])


# ==================== Flow ====================


def sigma0_grid(c: CCBP, spacing: float) -> Tuple[np.ndarray, np.ndarray, float]:
    """Square lattice of Σ₀ ∩ region at the given spacing, with tangent-frame coordinates."""
    sigma0 = c.sigma0
    frame = tangent_basis(sigma0.normal)
    center = c.net.region_center
    height = float((center - sigma0.base) @ sigma0.normal)
    radius = math.sqrt(max(c.net.region_radius**2 - height**2, 0.0))
    foot = center - height * sigma0.normal
    steps = int(math.floor(radius / spacing))
    axis = spacing * np.arange(-steps, steps + 1)
    lattice = np.stack(np.meshgrid(*([axis] * frame.shape[0]), indexing="ij"), axis=-1).reshape(-1, frame.shape[0])
    params = lattice[np.linalg.norm(lattice, axis=1) < radius]
    return foot + params @ frame, params, radius


def run_flow(
    c: CCBP,
    grid_spacing: Optional[float] = None,
    depth: Optional[int] = None,
    threads: Optional[int] = None,
    strict: bool = True,
) -> FlowTrace:
    """Iterate f_{k+1} = σ_k ∘ f_k on a lattice of Σ₀ and record displacements and ε′.

    With `strict`, a level step above 1.5 r_k raises FlowDiverged; otherwise it is only
    flagged in the trace. Steps above 10 r_k raise either way.
    """
    depth = c.depth if depth is None else depth
    if not 1 <= depth <= c.depth:
        raise PreconditionViolated(f"flow depth must lie in [1, {c.depth}], got {depth}")
    radii = [c.level(k).r for k in range(depth + 1)]
    target = radii[depth] / 4
    spacing = target if grid_spacing is None else float(grid_spacing)
    if spacing > target:
        logger.warning(f"grid spacing {spacing:.4g} is coarser than r_J/4 = {target:.4g}")
    grid, params, disk = sigma0_grid(c, spacing)
    if grid.shape[0] == 0:
        raise ResolutionExceeded("Σ₀ grid is empty at this spacing", {"spacing": spacing})
    logger.info(f"flow: {grid.shape[0]} grid points, depth {depth}, spacing {spacing:.4g}")
    table = EpsilonPrimeTable(c)
    slices = chunked(grid.shape[0], CHUNK)
    images, eps_prime, step_ratio = [grid], {}, []
    current = grid
    for k in range(depth):
        if k >= 1:
            eps_prime[k] = np.concatenate(parallel_map(lambda s: table.evaluate(k, current[s]), slices, threads))
        moved = np.vstack(parallel_map(lambda s: _sigma_many(c, k, current[s]), slices, threads))
        step = np.linalg.norm(moved - current, axis=1)
        worst = float(step.max())
        if worst > DIVERGENCE_FACTOR * radii[k]:
            i = int(np.argmax(step))
            raise FlowDiverged(
                f"level {k} moved a grid point by {worst:.4g} > 10 r_k",
                {"level": k, "grid_index": i, "displacement": worst, "r_k": radii[k], "bound": "divergence"},
            )
        step_ratio.append(worst / radii[k])
        if worst > STEP_BOUND * radii[k]:
            if strict:
                i = int(np.argmax(step))
                raise FlowDiverged(
                    f"level {k} moved a grid point by {worst:.4g} > 1.5 r_k",
                    {"level": k, "grid_index": i, "displacement": worst, "r_k": radii[k], "bound": "step"},
                )
            logger.warning(f"level {k}: step {worst:.4g} exceeds 1.5 r_k")
        current = moved
        images.append(current)
        logger.info(f"flow level {k} done: max step / r_k = {step_ratio[-1]:.4g}")
    eps_prime[depth] = np.concatenate(parallel_map(lambda s: table.evaluate(depth, current[s]), slices, threads))
    return FlowTrace(
        grid=grid, params=params, images=images, eps_prime=eps_prime, step_ratio=step_ratio,
        radii=radii, grid_spacing=spacing, disk_radius=disk, achieved_eps=c.achieved_eps,
    )


def bilip_criterion(trace: FlowTrace) -> float:
    """N = max_z Σ_{k=1..J} ε′_k(f_k(z))²."""
    if not trace.eps_prime:
        return 0.0
    total = sum(values**2 for values in trace.eps_prime.values())
    return float(np.max(total))


def _pair_ratios(z: np.ndarray, f: np.ndarray, a: np.ndarray, b: np.ndarray):
    before = np.linalg.norm(z[a] - z[b], axis=1)
    after = np.linalg.norm(f[a] - f[b], axis=1)
    return before, after


def bilip_estimate(trace: FlowTrace, max_pairs: int = MAX_PAIRS, seed: int = PAIR_SEED) -> BilipEstimate:
    """Worst two-sided distortion max(|f z - f w|/|z - w|, inverse) over grid pairs."""
    z, f = trace.grid, trace.final
    count = z.shape[0]
    if count < 2:
        raise PreconditionViolated("bi-Lipschitz estimate needs at least two grid points")
    total = count * (count - 1) // 2
    if total <= max_pairs:
        a, b = np.triu_indices(count, k=1)
        sampled = False
    else:
        rng = np.random.default_rng(seed)
        a = rng.integers(0, count, size=max_pairs)
        b = rng.integers(0, count - 1, size=max_pairs)
        b = b + (b >= a)
        sampled = True
    worst, worst_pair = 1.0, None
    for s in chunked(a.size, 1 << 18):
        before, after = _pair_ratios(z, f, a[s], b[s])
        collapsed = np.flatnonzero(after == 0)
        if collapsed.size:
            i = int(collapsed[0])
            raise DegeneratePair(
                "two grid points have the same image",
                {"pair": [int(a[s][i]), int(b[s][i])], "distance": float(before[i])},
            )
        distortion = np.maximum(after / before, before / after)
        i = int(np.argmax(distortion))
        if distortion[i] > worst or worst_pair is None:
            worst = max(worst, float(distortion[i]))
            worst_pair = [int(a[s][i]), int(b[s][i])]
    return BilipEstimate(k_lower=worst, worst_pair=worst_pair, pairs=int(a.size), sampled=sampled)


def flow_levels(trace: FlowTrace) -> List[FlowLevelRecord]:
    """One record per level: step size, worst ε′_k and the running max of Σ ε′²."""
    records = []
    running = np.zeros(trace.grid.shape[0])
    for k, r in enumerate(trace.radii):
        eps = trace.eps_prime.get(k)
        if eps is not None:
            running = running + eps**2
        records.append(FlowLevelRecord(
            level=k,
            r=r,
            step_ratio=trace.step_ratio[k] if k < len(trace.step_ratio) else None,
            eps_prime_max=float(eps.max()) if eps is not None and eps.size else 0.0,
            n_cumulative=float(running.max()) if running.size else 0.0,
        ))
    return records


def trace_columns(trace: FlowTrace) -> List[str]:
    """z0.., f1_0.., ..., fJ_.. for a d-dimensional ambient space."""
    d = trace.grid.shape[1]
    columns = [f"z{i}" for i in range(d)]
    for k in range(1, trace.depth + 1):
        columns += [f"f{k}_{i}" for i in range(d)]
    return columns


def trace_rows(trace: FlowTrace) -> np.ndarray:
    """One row per grid point z: z, f_1(z), ..., f_J(z)."""
    return np.hstack(trace.images)


def flow_summary(trace: FlowTrace, estimate: BilipEstimate) -> FlowSummary:
    shift = float(np.max(np.linalg.norm(trace.final - trace.grid, axis=1)))
    eps = trace.achieved_eps
    return FlowSummary(
        n_criterion=bilip_criterion(trace),
        k_lower=estimate.k_lower,
        worst_pair=estimate.worst_pair,
        pairs=estimate.pairs,
        sampled=estimate.sampled,
        step_ratio=trace.step_ratio,
        step_bound_ok=all(s <= STEP_BOUND for s in trace.step_ratio),
        max_displacement=shift,
        c0_estimate=shift / eps if eps > 0 else None,
        grid_points=int(trace.grid.shape[0]),
        grid_spacing=trace.grid_spacing,
        levels=flow_levels(trace),
    )


# ==================== Audits of the image ====================


def _disk_probes(frame: np.ndarray, r: float, spacing: float) -> np.ndarray:
    steps = int(math.floor(r / spacing))
    axis = spacing * np.arange(-steps, steps + 1)
    lattice = np.stack(np.meshgrid(*([axis] * frame.shape[0]), indexing="ij"), axis=-1).reshape(-1, frame.shape[0])
    return lattice[np.linalg.norm(lattice, axis=1) <= r]


def reifenberg_audit(
    image_points,
    radii: Sequence[float],
    spacing: Optional[float] = None,
    centers: Optional[Sequence[int]] = None,
    max_centers: int = 256,
    threads: Optional[int] = None,
) -> ReifenbergReport:
    """Two-sided flatness of a point set: plane-to-set sup plus a hole term, worst over centres and radii."""
    pts = np.asarray(image_points, dtype=float)
    index = SpatialIndex(pts)
    if spacing is None:
        spacing = float(np.median(index.neighbor_spacing(1)))
    too_small = [r for r in radii if r < spacing]
    if too_small:
        raise ResolutionExceeded("audit radius below the grid spacing", {"radii": too_small, "spacing": spacing})
    if centers is None:
        centers = np.arange(pts.shape[0])
    centers = np.asarray(centers, dtype=np.intp)
    if centers.size > max_centers:
        centers = centers[np.linspace(0, centers.size - 1, max_centers).round().astype(np.intp)]
    n = pts.shape[1] - 1
    allowance = spacing * math.sqrt(n) / 2

    def score(job) -> ReifenbergRecord:
        i, r = job
        x = pts[i]
        idx = index.range_query(x, r)
        flat, normal = minimax_plane(pts[idx], x, r)
        frame = tangent_basis(normal)
        # the open r-ball only has to cover the disk one spacing inside its rim
        probes = _disk_probes(frame, r - spacing, max(spacing / 2, 2 * r / 64))
        gap, _ = index.nearest(x + probes @ frame)
        hole = max(float(np.max(gap)) - allowance, 0.0) / r
        return ReifenbergRecord(x_index=int(i), r=float(r), flatness=flat, hole=hole, score=max(flat, hole))

    jobs = [(int(i), float(r)) for r in radii for i in centers]
    records = parallel_map(score, jobs, threads)
    worst = max(records, key=lambda rec: rec.score) if records else None
    return ReifenbergReport(
        worst=worst.score if worst else 0.0,
        worst_record=worst,
        records=records,
        spacing=spacing,
        allowance=allowance,
    )


def containment_audit(
    S: DiscreteSurface,
    trace: FlowTrace,
    region_center,
    region_radius: float,
    constant: float = 5.0,
) -> ContainmentReport:
    """Every sample in the half-radius region within 2·spacing + C·r_J of the flow image."""
    members = S.ball_indices(region_center, 0.5 * region_radius)
    bound = 2 * trace.grid_spacing + constant * trace.radii[-1]
    if members.size == 0:
        return ContainmentReport(points=0, max_distance=0.0, bound=bound, violations=0, passed=True)
    gap, _ = cKDTree(trace.final).query(S.points[members])
    violations = int(np.sum(gap > bound))
    return ContainmentReport(
        points=int(members.size), max_distance=float(gap.max()), bound=bound,
        violations=violations, passed=violations == 0,
    )
