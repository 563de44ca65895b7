import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize

from rlab.geometry.core import AffinePlane, as_vec, tangent_basis
from rlab.geometry.measure import DiscreteSurface, _ball_or_raise, average_normal
from rlab.models.config import ScaleLadder
from rlab.models.reports import (
    AlphaHypothesisReport,
    DyadicEquivalenceReport,
    DyadicEquivalenceRecord,
    NormalBoundRecord,
    NormalBoundReport,
)
from rlab.utils.errors import ResolutionExceeded
from rlab.utils.parallel import parallel_map

logger = logging.getLogger(__name__)

LEMMA_NORMAL_FLOOR = 0.5
DEFAULT_QUAD_POINTS = 32
_DEGENERATE = 1e-14


@dataclass(frozen=True)
class FlatnessRecord:
    x: np.ndarray
    r: float
    alpha: float
    beta1: float
    beta_inf: float
    best_plane: AffinePlane


@dataclass(frozen=True)
class DyadicSum:
    total: float
    terms: List[Tuple[float, float]]
    skipped_levels: int


def alpha(S: DiscreteSurface, x, r: float) -> float:
    """L² oscillation of the unit normal around its average on B_r(x)."""
    normals = S.require_normals()
    idx = _ball_or_raise(S, x, r)
    w = S.weights[idx]
    nu = normals[idx]
    mean = np.average(nu, axis=0, weights=w)
    spread = np.average(np.sum((nu - mean) ** 2, axis=1), weights=w)
    return float(math.sqrt(max(spread, 0.0)))


def carleson_dyadic_sum(S: DiscreteSurface, x, L: ScaleLadder) -> DyadicSum:
    """Σ_{j=1..J} α²(x, r_j), skipping levels below the sample resolution."""
    terms, skipped = [], 0
    for r in L.dyadic_radii():
        if r < S.h_min:
            skipped += 1
            continue
        terms.append((r, alpha(S, x, r) ** 2))
    if skipped:
        logger.debug(f"dyadic sum skipped {skipped} sub-resolution levels")
    return DyadicSum(total=float(sum(t for _, t in terms)), terms=terms, skipped_levels=skipped)


def carleson_integral(
    S: DiscreteSurface,
    x,
    r_max: float,
    quad_points: int = DEFAULT_QUAD_POINTS,
    r_min: Optional[float] = None,
) -> float:
    """Log-uniform midpoint rule for ∫ α²(x,r) dr/r over [max(h_min, r_min), r_max]."""
    lower = S.h_min if r_min is None else max(r_min, S.h_min)
    if lower <= 0 or r_max <= lower:
        raise ResolutionExceeded(
            "integration range is empty at this sample resolution",
            {"r_min": float(lower), "r_max": float(r_max)},
        )
    edges = np.geomspace(lower, r_max, quad_points + 1)
    mids = np.sqrt(edges[:-1] * edges[1:])
    step = math.log(r_max / lower) / quad_points
    return float(sum(alpha(S, x, r) ** 2 for r in mids) * step)


def check_dyadic_equivalence(
    S: DiscreteSurface,
    probes: Sequence[int],
    L: ScaleLadder,
    quad_points: int = DEFAULT_QUAD_POINTS,
    constant: float = 5.0,
    threads: Optional[int] = None,
) -> DyadicEquivalenceReport:
    """Compare the dyadic α² sum with the integral over the interval its terms cover."""
    upper = L.scale(0)
    lower = max(S.h_min, L.scale(L.depth))

    def measure(i: int) -> DyadicEquivalenceRecord:
        x = S.points[i]
        dyadic = carleson_dyadic_sum(S, x, L).total
        integral = carleson_integral(S, x, upper, quad_points, r_min=lower)
        degenerate = dyadic < _DEGENERATE and integral < _DEGENERATE
        if degenerate:
            ratio = 1.0
        elif integral < _DEGENERATE:
            ratio = math.inf
        else:
            ratio = dyadic / integral
        return DyadicEquivalenceRecord(
            x_index=int(i), dyadic=dyadic, integral=integral, ratio=ratio, degenerate=degenerate
        )

    records = parallel_map(measure, list(probes), threads)
    ratios = [rec.ratio for rec in records]
    violations = [rec.x_index for rec in records if rec.ratio > constant]
    return DyadicEquivalenceReport(
        records=records,
        ratio_min=min(ratios) if ratios else math.nan,
        ratio_max=max(ratios) if ratios else math.nan,
        constant=constant,
        violations=violations,
    )


def check_normal_lower_bound(
    S: DiscreteSurface,
    probes: Sequence[int],
    radii: Sequence[float],
    eps1_sq: float = 0.01,
    quad_points: int = DEFAULT_QUAD_POINTS,
    threads: Optional[int] = None,
) -> NormalBoundReport:
    """|ν_{x,r}| per probe and radius, checked against 1/2 inside the small-Carleson regime."""
    S.require_normals()
    kept = sorted(r for r in radii if r >= S.h_min)
    r_max = max(radii)

    def measure(i: int):
        x = S.points[i]
        integral = carleson_integral(S, x, r_max, quad_points)
        values = [(r, float(np.linalg.norm(average_normal(S, x, r)))) for r in kept]
        return integral, values

    results = parallel_map(measure, list(probes), threads)
    surface_integral = max((integral for integral, _ in results), default=0.0)
    in_regime = surface_integral <= eps1_sq
    records, violations = [], []
    for i, (integral, values) in zip(probes, results):
        for r, value in values:
            rec = NormalBoundRecord(x_index=int(i), r=r, norm=value, carleson_integral=integral)
            records.append(rec)
            if in_regime and value < LEMMA_NORMAL_FLOOR:
                violations.append(rec)
    low = sum(rec.norm < LEMMA_NORMAL_FLOOR for rec in records)
    if not in_regime and low:
        logger.info(f"{low} averages below 1/2 outside the small-Carleson regime (integral {surface_integral:.4g})")
    return NormalBoundReport(
        records=records,
        violations=violations,
        in_regime=in_regime,
        surface_integral=surface_integral,
        eps1_sq=eps1_sq,
        min_norm=min((rec.norm for rec in records), default=math.nan),
        out_of_regime_low=0 if in_regime else int(low),
    )


def weighted_median(values: np.ndarray, weights: np.ndarray) -> float:
    order = np.argsort(values, kind="stable")
    cumulative = np.cumsum(weights[order])
    pos = int(np.searchsorted(cumulative, 0.5 * cumulative[-1]))
    return float(values[order][min(pos, len(order) - 1)])


def pca_normal(points: np.ndarray, weights: np.ndarray, about=None) -> np.ndarray:
    """Direction of least weighted second moment around `about` (default: weighted mean)."""
    center = np.average(points, axis=0, weights=weights) if about is None else as_vec(about)
    centered = points - center
    moment = (centered * weights[:, None]).T @ centered
    _, vectors = np.linalg.eigh(moment)
    return vectors[:, 0]


def _refine_normal(objective: Callable[[np.ndarray], float], start: np.ndarray) -> Tuple[np.ndarray, float]:
    """Nelder-Mead over the tangent chart u(θ) = normalize(start + θ·T); keeps the start if better."""
    basis = tangent_basis(start)

    def chart(theta):
        u = start + theta @ basis
        return u / np.linalg.norm(u)

    best_u, best_val = start, objective(start)
    result = minimize(
        lambda theta: objective(chart(theta)),
        np.zeros(basis.shape[0]),
        method="Nelder-Mead",
        options={"xatol": 1e-11, "fatol": 1e-15, "maxiter": 4000, "maxfev": 8000},
    )
    candidate = chart(result.x)
    value = objective(candidate)
    if value < best_val:
        best_u, best_val = candidate, value
    return best_u, best_val


def beta1_at_plane(S: DiscreteSurface, x, r: float, plane: AffinePlane) -> float:
    """(1/r^n) ∫_{B_r(x)} d(y, P)/r dμ for one plane."""
    idx = _ball_or_raise(S, x, r)
    dist = np.abs((S.points[idx] - plane.base) @ plane.normal)
    return float(np.dot(S.weights[idx], dist) / r ** (S.dim_n + 1))


def beta1(S: DiscreteSurface, x, r: float) -> Tuple[float, AffinePlane]:
    """Approximate L¹ Jones number; weighted-PCA start, weighted-median offset, local refinement."""
    x = as_vec(x)
    idx = _ball_or_raise(S, x, r)
    local = S.points[idx] - x
    w = S.weights[idx]
    scale = 1.0 / r ** (S.dim_n + 1)

    def offset_for(u):
        return weighted_median(local @ u, w)

    def objective(u):
        heights = local @ u
        return float(np.dot(w, np.abs(heights - weighted_median(heights, w))) * scale)

    start = pca_normal(local, w)
    u, value = _refine_normal(objective, start)
    base = x + offset_for(u) * u
    return value, AffinePlane(base, u / np.linalg.norm(u))


def minimax_plane(points: np.ndarray, anchor, r: float, starts: Iterable[np.ndarray] = ()) -> Tuple[float, np.ndarray]:
    """Plane through `anchor` minimizing max |<y - anchor, u>| / r; returns (value, normal)."""
    anchor = as_vec(anchor)
    local = points - anchor
    if local.shape[0] == 0:
        return 0.0, np.eye(anchor.shape[0])[-1]
    uniform = np.ones(local.shape[0])

    def objective(u):
        return float(np.max(np.abs(local @ u)) / r)

    candidates = [pca_normal(local, uniform), pca_normal(local, uniform, about=np.zeros_like(anchor))]
    candidates += [s / np.linalg.norm(s) for s in starts if np.linalg.norm(s) > 0]
    start = min(candidates, key=objective)
    u, value = _refine_normal(objective, start)
    return value, u / np.linalg.norm(u)


def beta_inf(S: DiscreteSurface, x, r: float) -> Tuple[float, AffinePlane]:
    """Approximate sup-form Jones number over planes through x (sample points only)."""
    x = as_vec(x)
    idx = _ball_or_raise(S, x, r)
    starts = []
    if S.has_normals:
        starts.append(np.average(S.normals[idx], axis=0, weights=S.weights[idx]))
    value, u = minimax_plane(S.points[idx], x, r, starts)
    return value, AffinePlane(x, u)


def flatness_record(S: DiscreteSurface, x, r: float) -> FlatnessRecord:
    b1, plane = beta1(S, x, r)
    binf, _ = beta_inf(S, x, r)
    return FlatnessRecord(x=as_vec(x), r=float(r), alpha=alpha(S, x, r), beta1=b1, beta_inf=binf, best_plane=plane)


def flatness_profile(S: DiscreteSurface, x, radii: Sequence[float]) -> List[FlatnessRecord]:
    return [flatness_record(S, x, r) for r in radii if r >= S.h_min]


def alpha_scale_comparison(S: DiscreteSurface, x, r: float, L: ScaleLadder) -> Tuple[int, float]:
    """Ladder level j with r_{j+1} < r <= r_j and the measured C in α²(x,r) <= C α²(x,r_j)."""
    j = max(int(math.floor(math.log(L.r0 / r) / math.log(L.ratio))), 0)
    while L.scale(j) < r and j > 0:
        j -= 1
    coarse = alpha(S, x, L.scale(j)) ** 2
    fine = alpha(S, x, r) ** 2
    if coarse < _DEGENERATE:
        return j, 1.0 if fine < _DEGENERATE else math.inf
    return j, fine / coarse


def check_alpha_hypothesis(
    S: DiscreteSurface,
    probes: Sequence[int],
    L: ScaleLadder,
    eps0: float,
    threads: Optional[int] = None,
) -> AlphaHypothesisReport:
    """Uniform smallness of α on the ladder plus a uniform bound on the dyadic α² sums."""

    def measure(i: int):
        x = S.points[i]
        values = [alpha(S, x, r) for r in L.dyadic_radii() if r >= S.h_min]
        return max(values, default=0.0), sum(v * v for v in values)

    results = parallel_map(measure, list(probes), threads)
    alpha_max = max((a for a, _ in results), default=0.0)
    sum_max = max((s for _, s in results), default=0.0)
    return AlphaHypothesisReport(
        alpha_max=alpha_max, dyadic_sum_max=sum_max, eps0=eps0, holds=alpha_max < eps0, probes=len(results)
    )


def beta1_square_sum(S: DiscreteSurface, x, L: ScaleLadder) -> float:
    """J₁(x) = Σ_j β₁²(x, r_j) over resolvable ladder radii (diagnostic)."""
    return float(sum(beta1(S, x, r)[0] ** 2 for r in L.dyadic_radii() if r >= S.h_min))
