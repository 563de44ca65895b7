import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import List, Optional, Sequence, Tuple

import numpy as np

from rlab.analysis.flatness import alpha
from rlab.geometry.core import (
    AffinePlane,
    SpatialIndex,
    as_vec,
    local_hausdorff_many,
    unit,
)
from rlab.geometry.measure import DiscreteSurface, _ball_or_raise, average_normal, center_of_mass
from rlab.models.config import ScaleLadder
from rlab.models.reports import (
    CCBPDocument,
    CCBPVerification,
    ConditionResult,
    LevelDocument,
    PlaneBoundRecord,
    PlaneBoundReport,
    PlaneDocument,
)
from rlab.utils.errors import (
    DegenerateNormal,
    EmptyBall,
    EpsilonExceeded,
    PreconditionViolated,
    ResolutionExceeded,
)
from rlab.utils.parallel import parallel_map

logger = logging.getLogger(__name__)

# fixed multiples of r_k
NET_SEPARATION = 4.0 / 3.0
REFINE_RADIUS = 1.0 / 6.0
COVER_RADIUS = 1.5
NESTING_RADIUS = 2.0
PLANE_RADIUS = 120.0
SAME_SCALE_PAIR = 100.0
SAME_SCALE_BALL = 100.0
ADJACENT_PAIR = 2.0
ADJACENT_BALL = 20.0

MIN_AVERAGE_NORMAL = 0.1
DEFAULT_EPS_TARGET = 0.05
_COMPAT_CONDITIONS = ("same_scale", "adjacent_scale", "sigma0_planes", "sigma0_distance")


@dataclass(frozen=True, eq=False)
class NetLevel:
    k: int
    r: float
    net: np.ndarray             # indices x̃_jk into the surface
    refined: np.ndarray         # x_jk
    refined_index: np.ndarray

    @cached_property
    def index(self) -> SpatialIndex:
        return SpatialIndex(self.refined)

    @property
    def size(self) -> int:
        return self.refined.shape[0]


@dataclass(frozen=True, eq=False)
class MultiscaleNet:
    ladder: ScaleLadder
    region_center: np.ndarray
    region_radius: float
    origin_index: int
    levels: List[NetLevel]


@dataclass(frozen=True, eq=False)
class CCBP:
    """Coherent collection of balls and planes; P_jk passes through refined point j of level k."""

    sigma0: AffinePlane
    net: MultiscaleNet
    normals: List[np.ndarray]
    achieved_eps: float
    eps_target: float = DEFAULT_EPS_TARGET
    base_index: int = 0
    plane_radius: List[float] = field(default_factory=list)
    clamped: List[bool] = field(default_factory=list)
    lhs: List[np.ndarray] = field(default_factory=list)
    boundary: List[np.ndarray] = field(default_factory=list)

    @property
    def depth(self) -> int:
        return len(self.net.levels) - 1

    def level(self, k: int) -> NetLevel:
        return self.net.levels[k]

    def plane(self, k: int, j: int) -> AffinePlane:
        return AffinePlane(self.net.levels[k].refined[j], self.normals[k][j])

    def with_plane(self, k: int, j: int, normal=None, shift: float = 0.0) -> "CCBP":
        """Copy with P_jk re-oriented and/or its point x_jk moved by `shift` along the normal."""
        normals = [n.copy() for n in self.normals]
        if normal is not None:
            normals[k][j] = unit(normal)
        levels = list(self.net.levels)
        if shift:
            level = levels[k]
            refined = level.refined.copy()
            refined[j] = refined[j] + shift * normals[k][j]
            levels[k] = NetLevel(k=level.k, r=level.r, net=level.net, refined=refined,
                                 refined_index=level.refined_index)
        sigma0 = self.sigma0
        if k == 0 and j == self.base_index:
            sigma0 = AffinePlane(levels[0].refined[j], normals[0][j])
        return replace(self, normals=normals, sigma0=sigma0, net=replace(self.net, levels=levels))


# ==================== Nets ====================


def _greedy_net(S: DiscreteSurface, order: np.ndarray, separation: float) -> np.ndarray:
    blocked = np.zeros(S.n_points, dtype=bool)
    chosen = []
    for i in order:
        if blocked[i]:
            continue
        chosen.append(int(i))
        blocked[S.index.range_query(S.points[i], separation)] = True
    return np.array(chosen, dtype=np.intp)


def region_members(S: DiscreteSurface, region_center, region_radius: float) -> np.ndarray:
    members = S.ball_indices(region_center, region_radius)
    if members.size == 0:
        raise EmptyBall(
            "region contains no sample points",
            {"center": as_vec(region_center).tolist(), "radius": float(region_radius)},
        )
    return members


def build_net(S: DiscreteSurface, region_center, region_radius: float, ladder: ScaleLadder) -> MultiscaleNet:
    """Greedy maximal (4/3)r_k-separated nets of S ∩ region, origin point first at every level."""
    if ladder.finest < S.h_min:
        raise ResolutionExceeded(
            "deepest scale is below the sample resolution",
            {"r_J": ladder.finest, "h_min": S.h_min},
        )
    center = as_vec(region_center)
    members = region_members(S, center, region_radius)
    origin = int(members[np.argmin(np.linalg.norm(S.points[members] - center, axis=1))])
    order = np.concatenate([[origin], members[members != origin]])
    levels = []
    for k, r in enumerate(ladder.levels()):
        chosen = _greedy_net(S, order, NET_SEPARATION * r)
        levels.append(NetLevel(k=k, r=r, net=chosen, refined=S.points[chosen].copy(), refined_index=chosen.copy()))
        logger.info(f"net level {k}: r={r:.4g}, {chosen.size} points")
    net = MultiscaleNet(ladder=ladder, region_center=center, region_radius=float(region_radius),
                        origin_index=origin, levels=levels)
    failed = [c for c in net_conditions(net, S) if not c.passed and c.name in ("separation", "coverage")]
    if failed:
        raise PreconditionViolated("net construction broke its own invariants", {"failed": [c.name for c in failed]})
    return net


def _min_pair_distance(points: np.ndarray) -> Tuple[float, Optional[Tuple[int, int]]]:
    if points.shape[0] < 2:
        return math.inf, None
    index = SpatialIndex(points)
    dist, nearest = index.nearest(points, k=2)
    i = int(np.argmin(dist[:, 1]))
    return float(dist[i, 1]), (i, int(nearest[i, 1]))


def _condition(name, value, threshold, kind, location=None, checked=0, excluded=0) -> ConditionResult:
    if kind == "max":
        passed = bool(value <= threshold)
    else:
        passed = bool(value >= threshold)
    finite = bool(np.isfinite(value))
    return ConditionResult(
        name=name, value=float(value) if finite else None, finite=finite, threshold=float(threshold),
        kind=kind, passed=passed, location=location, checked=int(checked), excluded=int(excluded),
    )


def net_conditions(net: MultiscaleNet, S: Optional[DiscreteSurface] = None) -> List[ConditionResult]:
    """Separation, refinement, nesting and coverage invariants, each as a worst-case ratio."""
    results = []
    worst = {"separation": (math.inf, None), "refinement": (0.0, None), "refined_separation": (math.inf, None),
             "nesting": (0.0, None), "coverage": (0.0, None)}
    for level in net.levels:
        net_pts = None if S is None else S.points[level.net]
        if net_pts is not None:
            d, pair = _min_pair_distance(net_pts)
            ratio = d / (NET_SEPARATION * level.r)
            if ratio < worst["separation"][0]:
                worst["separation"] = (ratio, {"level": level.k, "pair": pair})
            shift = np.linalg.norm(level.refined - net_pts, axis=1) / (REFINE_RADIUS * level.r)
            if shift.size and shift.max() > worst["refinement"][0]:
                worst["refinement"] = (float(shift.max()), {"level": level.k, "j": int(np.argmax(shift))})
        d, pair = _min_pair_distance(level.refined)
        ratio = d / level.r
        if ratio < worst["refined_separation"][0]:
            worst["refined_separation"] = (ratio, {"level": level.k, "pair": pair})
        if level.k > 0:
            coarse = net.levels[level.k - 1]
            gap, _ = coarse.index.nearest(level.refined)
            ratio = np.atleast_1d(gap) / coarse.r
            if ratio.size and ratio.max() > worst["nesting"][0]:
                worst["nesting"] = (float(ratio.max()), {"level": level.k, "j": int(np.argmax(ratio))})
        if S is not None:
            members = S.ball_indices(net.region_center, net.region_radius)
            gap, _ = level.index.nearest(S.points[members])
            ratio = np.atleast_1d(gap) / level.r
            if ratio.size and ratio.max() > worst["coverage"][0]:
                worst["coverage"] = (float(ratio.max()), {"level": level.k, "point": int(members[np.argmax(ratio)])})
    limits = {
        "separation": (1.0, "min"),
        "refinement": (1.0, "max"),
        "refined_separation": (1.0, "min"),
        "nesting": (NESTING_RADIUS, "max"),
        "coverage": (COVER_RADIUS, "max"),
    }
    for name, (value, location) in worst.items():
        if S is None and name in ("separation", "refinement", "coverage"):
            continue
        threshold, kind = limits[name]
        results.append(_condition(name, value, threshold, kind, location))
    return results


def boundary_flags(net: MultiscaleNet) -> List[np.ndarray]:
    """Level-k points farther than 2 r_{k-1} from every level-(k-1) point."""
    flags = [np.zeros(net.levels[0].size, dtype=bool)]
    for level in net.levels[1:]:
        coarse = net.levels[level.k - 1]
        gap, _ = coarse.index.nearest(level.refined)
        flags.append(np.atleast_1d(gap) > NESTING_RADIUS * coarse.r)
    return flags


# ==================== Planes ====================


def poincare_plane(S: DiscreteSurface, x_tilde, r: float) -> Tuple[AffinePlane, float]:
    """Plane through the centre of mass of B_r(x̃) with normal ν_{x̃,2r}, plus ⨍ d(y,P′)/r."""
    nu = average_normal(S, x_tilde, 2 * r)
    length = float(np.linalg.norm(nu))
    if length <= MIN_AVERAGE_NORMAL:
        raise DegenerateNormal(
            "average normal too short to orient a plane",
            {"center": as_vec(x_tilde).tolist(), "radius": 2 * r, "norm": length},
        )
    plane = AffinePlane(center_of_mass(S, x_tilde, r), nu / length)
    idx = _ball_or_raise(S, x_tilde, r)
    dist = np.abs((S.points[idx] - plane.base) @ plane.normal)
    lhs = float(np.average(dist, weights=S.weights[idx]) / r)
    return plane, lhs


def refine_index(S: DiscreteSurface, x_tilde, r_k: float, P_prime: AffinePlane) -> int:
    idx = _ball_or_raise(S, x_tilde, REFINE_RADIUS * r_k)
    dist = np.abs((S.points[idx] - P_prime.base) @ P_prime.normal)
    return int(idx[int(np.argmin(dist))])


def refine_point(S: DiscreteSurface, x_tilde, r_k: float, P_prime: AffinePlane) -> Tuple[np.ndarray, AffinePlane]:
    """Sample point in B_{r_k/6}(x̃) closest to P′, and P′ translated through it."""
    i = refine_index(S, x_tilde, r_k, P_prime)
    x = S.points[i].copy()
    return x, P_prime.translated_to(x)


def plane_radius_for(r_k: float, region_radius: float) -> Tuple[float, bool]:
    """Plane radius 120 r_k, cut so the 2ρ normal-averaging ball never exceeds region_radius."""
    radius = PLANE_RADIUS * r_k
    limit = 0.5 * region_radius
    if radius > limit:
        return limit, True
    return radius, False


# ==================== Compatibility ====================


def _directed_max(values_a: np.ndarray, values_b: np.ndarray) -> np.ndarray:
    stacked = np.vstack([values_a, values_b])
    stacked = np.where(np.isnan(stacked), np.inf, stacked)
    return stacked.max(axis=0)


def _locator(blocks):
    table = np.vstack(blocks) if blocks else np.empty((0, 3), dtype=np.intp)

    def locate(i: int) -> dict:
        k, a, b = (int(v) for v in table[i])
        return {"level": k, "i": a, "j": b}

    return locate


def _worst(name, values, locate, eps, checked, excluded) -> ConditionResult:
    if values.size == 0:
        return _condition(name, 0.0, eps, "max", None, 0, excluded)
    i = int(np.argmax(values))
    return _condition(name, float(values[i]), eps, "max", locate(i), checked, excluded)


def compatibility_conditions(
    levels: Sequence[NetLevel],
    normals: Sequence[np.ndarray],
    sigma0: AffinePlane,
    boundary: Sequence[np.ndarray],
    eps: float,
    r0: float,
) -> List[ConditionResult]:
    """Same-scale, adjacent-scale and Σ₀ conditions, evaluated in closed form over all required pairs."""
    same_vals, same_loc, adj_vals, adj_loc = [], [], [], []
    same_checked = adj_checked = excluded = 0
    for level in levels:
        k, r = level.k, level.r
        pts, nrm = level.refined, normals[k]
        pairs = level.index.pairs_within(SAME_SCALE_PAIR * r)
        if pairs.size:
            keep = ~(boundary[k][pairs[:, 0]] | boundary[k][pairs[:, 1]])
            excluded += int((~keep).sum())
            pairs = pairs[keep]
        if pairs.size:
            a, b = pairs[:, 0], pairs[:, 1]
            ball = SAME_SCALE_BALL * r
            values = _directed_max(
                local_hausdorff_many(pts[a], nrm[a], pts[b], nrm[b], pts[a], ball),
                local_hausdorff_many(pts[b], nrm[b], pts[a], nrm[a], pts[b], ball),
            )
            same_vals.append(values)
            same_loc.append(np.column_stack([np.full(len(a), k), a, b]))
            same_checked += pairs.shape[0]
        if k + 1 < len(levels):
            fine = levels[k + 1]
            rows, cols = fine.index.pairs_with(pts, ADJACENT_PAIR * r)
            keep = ~(boundary[k][rows] | boundary[k + 1][cols])
            excluded += int((~keep).sum())
            rows, cols = rows[keep], cols[keep]
            if rows.size:
                fpts, fnrm = fine.refined, normals[k + 1]
                values = local_hausdorff_many(pts[rows], nrm[rows], fpts[cols], fnrm[cols], pts[rows], ADJACENT_BALL * r)
                adj_vals.append(np.where(np.isnan(values), np.inf, values))
                adj_loc.append(np.column_stack([np.full(rows.size, k), rows, cols]))
                adj_checked += rows.size

    same = np.concatenate(same_vals) if same_vals else np.empty(0)
    adjacent = np.concatenate(adj_vals) if adj_vals else np.empty(0)
    top = levels[0]
    m = top.size
    sigma_vals = local_hausdorff_many(
        top.refined, normals[0], np.tile(sigma0.base, (m, 1)), np.tile(sigma0.normal, (m, 1)),
        top.refined, SAME_SCALE_BALL * r0,
    )
    sigma_vals = np.where(np.isnan(sigma_vals), np.inf, sigma_vals)
    offsets = np.abs((top.refined - sigma0.base) @ sigma0.normal) / (SAME_SCALE_BALL * r0)
    return [
        _worst("same_scale", same, _locator(same_loc), eps, same_checked, excluded),
        _worst("adjacent_scale", adjacent, _locator(adj_loc), eps, adj_checked, 0),
        _worst("sigma0_planes", sigma_vals, lambda i: {"level": 0, "j": i}, eps, m, 0),
        _worst("sigma0_distance", offsets, lambda i: {"level": 0, "j": i}, eps, m, 0),
    ]


def _achieved(conditions: Sequence[ConditionResult]) -> Tuple[float, Optional[dict]]:
    worst, where = 0.0, None
    for c in conditions:
        if c.name not in _COMPAT_CONDITIONS:
            continue
        value = math.inf if not c.finite else c.value
        if value > worst or where is None:
            worst, where = value, {"condition": c.name, **(c.location or {}), "value": c.value}
    return worst, where


# ==================== Build / verify ====================


def build_ccbp(
    S: DiscreteSurface,
    region_center,
    region_radius: float,
    ladder: ScaleLadder,
    eps_target: float = DEFAULT_EPS_TARGET,
    threads: Optional[int] = None,
) -> CCBP:
    """Nets, Poincaré planes, recentred planes and Σ₀; raises EpsilonExceeded above the target."""
    S.require_normals()
    net = build_net(S, region_center, region_radius, ladder)
    normals, refined_levels, lhs, radii, clamped = [], [], [], [], []
    for level in net.levels:
        rho, was_clamped = plane_radius_for(level.r, region_radius)
        if was_clamped:
            logger.warning(f"level {level.k}: plane radius clamped to {rho:.4g} (region radius {region_radius:.4g})")

        def fit(i: int):
            x_tilde = S.points[i]
            plane, value = poincare_plane(S, x_tilde, rho)
            j = refine_index(S, x_tilde, level.r, plane)
            return j, plane.normal, value

        fitted = parallel_map(fit, list(level.net), threads)
        refined_index = np.array([j for j, _, _ in fitted], dtype=np.intp)
        refined_levels.append(
            NetLevel(k=level.k, r=level.r, net=level.net, refined=S.points[refined_index].copy(),
                     refined_index=refined_index)
        )
        normals.append(np.array([n for _, n, _ in fitted]))
        lhs.append(np.array([v for _, _, v in fitted]))
        radii.append(rho)
        clamped.append(was_clamped)
    net = replace(net, levels=refined_levels)
    sigma0 = AffinePlane(refined_levels[0].refined[0], normals[0][0])
    boundary = boundary_flags(net)
    flagged = int(sum(b.sum() for b in boundary))
    if flagged:
        logger.warning(f"{flagged} net points fall outside the nesting radius and are excluded")
    conditions = compatibility_conditions(refined_levels, normals, sigma0, boundary, eps_target, ladder.scale(0))
    achieved, worst = _achieved(conditions)
    logger.info(f"CCBP built: depth {ladder.depth}, achieved eps {achieved:.4g} (target {eps_target})")
    if achieved > eps_target:
        raise EpsilonExceeded(achieved, worst)
    return CCBP(
        sigma0=sigma0, net=net, normals=normals, achieved_eps=achieved, eps_target=eps_target,
        base_index=0, plane_radius=radii, clamped=clamped, lhs=lhs, boundary=boundary,
    )


def verify_ccbp(c: CCBP, S: Optional[DiscreteSurface] = None) -> CCBPVerification:
    """Recompute every net and compatibility condition of `c` from its stored geometry."""
    conditions = net_conditions(c.net, S)
    boundary = boundary_flags(c.net)
    conditions += compatibility_conditions(
        c.net.levels, c.normals, c.sigma0, boundary, c.eps_target, c.net.ladder.scale(0)
    )
    through = max(
        (float(np.max(np.abs(np.linalg.norm(n, axis=1) - 1.0))) for n in c.normals if n.size),
        default=0.0,
    )
    conditions.append(_condition("unit_normals", through, 1e-12, "max"))
    achieved, worst = _achieved(conditions)
    failures = [cond.name for cond in conditions if not cond.passed]
    return CCBPVerification(
        conditions=conditions,
        failures=failures,
        passed=not failures,
        achieved_eps=achieved if math.isfinite(achieved) else None,
        worst=worst,
    )


def check_plane_bound(S: DiscreteSurface, c: CCBP, C_P: float, threads: Optional[int] = None) -> PlaneBoundReport:
    """lhs ≤ 4·C_P·α(x̃, 2ρ) at every net point, with a flag where ρ is near the resolution."""
    records = []
    for level, rho in zip(c.net.levels, c.plane_radius):

        def measure(pos: int) -> PlaneBoundRecord:
            x_tilde = S.points[level.net[pos]]
            a = alpha(S, x_tilde, 2 * rho)
            value = float(c.lhs[level.k][pos])
            bound = 4.0 * C_P * a
            return PlaneBoundRecord(
                level=level.k, j=int(pos), lhs=value, alpha=a, bound=bound if math.isfinite(bound) else None,
                passed=bool(value <= bound + 1e-12), resolution_flag=bool(rho < 10 * S.h_min),
            )

        records.extend(parallel_map(measure, range(level.net.size), threads))
    passed = sum(rec.passed for rec in records)
    return PlaneBoundReport(
        c_p=C_P if math.isfinite(C_P) else None,
        records=records,
        fraction_passed=passed / len(records) if records else 1.0,
        unflagged_failures=sum(not rec.passed and not rec.resolution_flag for rec in records),
    )


# ==================== Serialization ====================


def ccbp_to_document(c: CCBP) -> CCBPDocument:
    levels = []
    for level, normals, rho, clamped, flags in zip(
        c.net.levels, c.normals, c.plane_radius or [None] * len(c.normals),
        c.clamped or [False] * len(c.normals), c.boundary or [None] * len(c.normals),
    ):
        levels.append(
            LevelDocument(
                k=level.k, r=level.r, net=level.net.tolist(), refined_index=level.refined_index.tolist(),
                refined=level.refined.tolist(), normals=normals.tolist(), plane_radius=rho,
                clamped=clamped, boundary=[] if flags is None else np.flatnonzero(flags).tolist(),
            )
        )
    return CCBPDocument(
        ladder=c.net.ladder,
        region_center=c.net.region_center.tolist(),
        region_radius=c.net.region_radius,
        origin_index=c.net.origin_index,
        base_index=c.base_index,
        eps_target=c.eps_target,
        achieved_eps=c.achieved_eps if math.isfinite(c.achieved_eps) else None,
        sigma0=PlaneDocument(base=c.sigma0.base.tolist(), normal=c.sigma0.normal.tolist()),
        levels=levels,
    )


def ccbp_from_document(doc: CCBPDocument) -> CCBP:
    levels, normals, boundary = [], [], []
    for level in doc.levels:
        levels.append(
            NetLevel(k=level.k, r=level.r, net=np.array(level.net, dtype=np.intp),
                     refined=np.array(level.refined, dtype=float),
                     refined_index=np.array(level.refined_index, dtype=np.intp))
        )
        normals.append(np.array(level.normals, dtype=float))
        flags = np.zeros(len(level.net), dtype=bool)
        flags[level.boundary] = True
        boundary.append(flags)
    net = MultiscaleNet(ladder=doc.ladder, region_center=np.array(doc.region_center),
                        region_radius=doc.region_radius, origin_index=doc.origin_index, levels=levels)
    return CCBP(
        sigma0=AffinePlane(doc.sigma0.base, doc.sigma0.normal),
        net=net,
        normals=normals,
        achieved_eps=math.inf if doc.achieved_eps is None else doc.achieved_eps,
        eps_target=doc.eps_target,
        base_index=doc.base_index,
        plane_radius=[lv.plane_radius for lv in doc.levels],
        clamped=[lv.clamped for lv in doc.levels],
        boundary=boundary,
    )
