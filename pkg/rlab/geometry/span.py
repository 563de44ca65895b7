import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import qr, solve_triangular

from rlab.geometry.core import AffinePlane, as_vec, orthonormalize, project_to_plane
from rlab.geometry.measure import DiscreteSurface, center_of_mass
from rlab.models.reports import CalibrationReport, EffectiveSpanCheck
from rlab.utils.errors import (
    HypothesisViolated,
    NoEscapePoint,
    PreconditionViolated,
    SpanSeparationLost,
)
from rlab.utils.parallel import parallel_map

logger = logging.getLogger(__name__)

ESCAPE_FACTOR = 11.0
SEPARATION_FACTOR = 5.0
ORTHONORMAL_TOL = 1e-12
RESIDUAL_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class Subspace:
    """Affine subspace origin + span(basis) of dimension k <= n - 1 in R^{n+1}."""

    origin: np.ndarray
    basis: np.ndarray

    def __post_init__(self):
        origin = as_vec(self.origin)
        d = origin.shape[0]
        basis = np.asarray(self.basis, dtype=float).reshape(-1, d)
        if basis.shape[0] > d - 2:
            raise PreconditionViolated(
                f"subspace dimension {basis.shape[0]} exceeds n - 1 = {d - 2}",
                {"k": int(basis.shape[0]), "ambient_dim": d},
            )
        gram = basis @ basis.T
        if basis.shape[0] and np.max(np.abs(gram - np.eye(basis.shape[0]))) > ORTHONORMAL_TOL:
            raise PreconditionViolated("subspace basis is not orthonormal")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "basis", basis)

    @classmethod
    def spanned(cls, origin, directions: Sequence) -> "Subspace":
        origin = as_vec(origin)
        return cls(origin, orthonormalize(list(directions), origin.shape[0]))

    @property
    def k(self) -> int:
        return self.basis.shape[0]


@dataclass(frozen=True, eq=False)
class EffectiveSpan:
    center: np.ndarray          # x̃
    r_k: float
    r: float
    plane: AffinePlane
    indices: List[int]
    points: np.ndarray          # y_0..y_n
    masses: np.ndarray          # p(y_l), centers of mass of B_r(y_l)
    projections: np.ndarray     # q_0..q_n on the plane


def dist_to_subspace(y, V: Subspace):
    """Distance from a point (or each row of an array) to V."""
    diff = np.asarray(y, dtype=float) - V.origin
    along = (diff @ V.basis.T) @ V.basis
    return np.linalg.norm(diff - along, axis=-1)


def escape_index(S: DiscreteSurface, V: Subspace, x0, r0: float, c0: float) -> Tuple[int, float]:
    """Index of the sample point in B_{r0}(x0) farthest from V, provided it clears 11·c0·r0."""
    if not 0 < c0 <= 0.5:
        raise PreconditionViolated(f"c0 must lie in (0, 1/2], got {c0}")
    if not 0 < r0 < 1:
        raise PreconditionViolated(f"r0 must lie in (0, 1), got {r0}")
    x0 = as_vec(x0)
    r = c0 * r0
    candidates = S.ball_indices(x0, r0)
    if candidates.size:
        dist = dist_to_subspace(S.points[candidates], V)
        inside = np.linalg.norm(S.points[candidates] - x0, axis=1) + r <= 2 * r0
        ok = (dist >= ESCAPE_FACTOR * r) & inside
        if np.any(ok):
            # candidates are ascending, so argmax picks the lowest index among ties
            masked = np.where(ok, dist, -np.inf)
            return int(candidates[int(np.argmax(masked))]), r
    raise NoEscapePoint(
        "no sample point escapes the subspace neighbourhood",
        {"c0": c0, "r0": r0, "k": V.k, "candidates": int(candidates.size)},
    )


def escape_point(S: DiscreteSurface, V: Subspace, x0, r0: float, c0: float) -> Tuple[np.ndarray, float]:
    i, r = escape_index(S, V, x0, r0, c0)
    return S.points[i].copy(), r


def random_subspace(origin, k: int, rng: np.random.Generator) -> Subspace:
    origin = as_vec(origin)
    return Subspace.spanned(origin, rng.standard_normal((k, origin.shape[0])))


def calibrate_c0(
    S: DiscreteSurface,
    probes: Sequence[int],
    r0: float,
    trials: int = 4,
    seed: int = 0,
    max_power: int = 10,
    threads: Optional[int] = None,
) -> CalibrationReport:
    """Largest c0 = 2^-m for which every probe escapes every drawn subspace."""
    rng = np.random.default_rng(seed)
    n = S.dim_n
    cases = [
        (int(i), random_subspace(S.points[i], k, rng))
        for i in probes
        for k in range(n)
        for _ in range(trials)
    ]
    grid = [2.0**-m for m in range(1, max_power + 1)]
    failures = []
    for c0 in grid:

        def attempt(case):
            i, V = case
            try:
                escape_index(S, V, S.points[i], r0, c0)
                return True
            except NoEscapePoint:
                return False

        failed = sum(not ok for ok in parallel_map(attempt, cases, threads))
        failures.append(failed)
        if failed == 0:
            logger.info(f"calibrated c0 = {c0} over {len(cases)} probe/subspace cases")
            return CalibrationReport(c0=c0, found=True, grid=grid, failures=failures, cases=len(cases))
    logger.warning(f"no c0 down to {grid[-1]} succeeded for every case")
    return CalibrationReport(c0=grid[-1], found=False, grid=grid, failures=failures, cases=len(cases))


def coefficient_bound(n: int, k0: float, K0: float) -> float:
    """K1 = √n · K0^(n-1) · (n-1)! / k0^n."""
    return math.sqrt(n) * K0 ** (n - 1) * math.factorial(n - 1) / k0**n


def gs_decompose(u, v, R: float, k0: float, K0: float) -> np.ndarray:
    """Coefficients of v in the basis u_1..u_n, after checking the separation hypotheses."""
    U = np.atleast_2d(np.asarray(u, dtype=float))
    v = as_vec(v)
    norms = np.linalg.norm(U, axis=1)
    too_long = np.flatnonzero(norms > K0 * R)
    if too_long.size:
        j = int(too_long[0])
        raise HypothesisViolated(
            "vector longer than K0·R", {"hypothesis": "upper_norm", "j": j + 1, "norm": float(norms[j])}
        )
    if norms[0] < k0 * R:
        raise HypothesisViolated(
            "first vector shorter than k0·R", {"hypothesis": "lower_norm", "j": 1, "norm": float(norms[0])}
        )
    # |diag(T)| is the distance of u_j to span(u_1..u_{j-1})
    Q, T = qr(U.T, mode="economic")
    gaps = np.abs(np.diag(T))
    close = np.flatnonzero(gaps[1:] < k0 * R)
    if close.size:
        j = int(close[0]) + 1
        raise HypothesisViolated(
            "vector inside the k0·R neighbourhood of the previous span",
            {"hypothesis": "separation", "j": j + 1, "distance": float(gaps[j])},
        )
    beta = solve_triangular(T, Q.T @ v)
    residual = float(np.linalg.norm(v - U.T @ beta))
    if residual > RESIDUAL_TOL * max(float(np.linalg.norm(v)), R):
        raise HypothesisViolated("v is not in the span of u", {"hypothesis": "span", "residual": residual})
    return beta


def build_effective_span(S: DiscreteSurface, x_tilde, r_k: float, P: AffinePlane, c0: float) -> EffectiveSpan:
    """n + 1 well separated balls around x̃ whose mass centers project to a frame of P."""
    x_tilde = as_vec(x_tilde)
    r = c0 * r_k
    start = S.index.nearest(x_tilde)[1]
    indices = [int(start)]
    masses = [center_of_mass(S, S.points[start], r)]
    projections = [project_to_plane(masses[0], P)]
    for level in range(1, S.dim_n + 1):
        q0 = projections[0]
        V = Subspace.spanned(q0, [q - q0 for q in projections[1:]])
        i, _ = escape_index(S, V, x_tilde, r_k, c0)
        mass = center_of_mass(S, S.points[i], r)
        q = project_to_plane(mass, P)
        gap = float(dist_to_subspace(q, V))
        if gap < SEPARATION_FACTOR * r:
            raise SpanSeparationLost(
                "projected mass centre fell inside the 5r neighbourhood",
                {"level": level, "distance": gap, "required": SEPARATION_FACTOR * r},
            )
        indices.append(i)
        masses.append(mass)
        projections.append(q)
    return EffectiveSpan(
        center=x_tilde,
        r_k=float(r_k),
        r=float(r),
        plane=P,
        indices=indices,
        points=S.points[indices].copy(),
        masses=np.array(masses),
        projections=np.array(projections),
    )


def check_effective_span(E: EffectiveSpan) -> EffectiveSpanCheck:
    """Recompute the separation and containment conditions of an effective span."""
    q0 = E.projections[0]
    margins = []
    for level in range(1, E.projections.shape[0]):
        V = Subspace.spanned(q0, [q - q0 for q in E.projections[1:level]])
        margins.append(float(dist_to_subspace(E.projections[level], V)) / (SEPARATION_FACTOR * E.r))
    reach = np.linalg.norm(E.points - E.center, axis=1) + E.r
    contained = bool(np.all(reach <= 2 * E.r_k))
    diffs = E.projections[1:] - q0
    rank = int(np.linalg.matrix_rank(diffs, tol=1e-8 * max(E.r, 1e-300))) if diffs.size else 0
    return EffectiveSpanCheck(
        separation_margins=margins,
        contained=contained,
        rank=rank,
        ok=contained and all(m >= 1.0 for m in margins),
    )
