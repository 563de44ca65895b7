import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from rlab.geometry.core import tangent_basis, unit
from rlab.geometry.measure import DiscreteSurface, _ball_or_raise, average_normal
from rlab.models.reports import (
    GradientDominationReport,
    KeithRecord,
    KeithReport,
    LipProfile,
    PoincareRecord,
    PoincareReport,
    TangentProfile,
)
from rlab.utils.errors import NoNeighbors, NotLipschitz, PreconditionViolated
from rlab.utils.parallel import parallel_map

logger = logging.getLogger(__name__)

ZERO_RHS = 1e-12
LIPSCHITZ_SLACK = 1e-12


# ==================== Test functions ====================


class TestFunction:
    """Closed-form scalar field on R^{n+1} with its ambient gradient."""

    __test__ = False
    name = "function"

    def value(self, Y) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, Y) -> np.ndarray:
        raise NotImplementedError

    @property
    def lipschitz(self) -> float:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class LinearForm(TestFunction):
    a: np.ndarray
    name: str = "linear"

    def value(self, Y):
        return np.asarray(Y, dtype=float) @ self.a

    def gradient(self, Y):
        Y = np.asarray(Y, dtype=float)
        return np.broadcast_to(self.a, Y.shape).copy()

    @property
    def lipschitz(self) -> float:
        return float(np.linalg.norm(self.a))


@dataclass(frozen=True, eq=False)
class DistanceToPoint(TestFunction):
    p: np.ndarray
    name: str = "distance"

    def value(self, Y):
        return np.linalg.norm(np.asarray(Y, dtype=float) - self.p, axis=-1)

    def gradient(self, Y):
        diff = np.asarray(Y, dtype=float) - self.p
        return diff / np.linalg.norm(diff, axis=-1, keepdims=True)

    @property
    def lipschitz(self) -> float:
        return 1.0


@dataclass(frozen=True, eq=False)
class GaussianBump(TestFunction):
    center: np.ndarray
    width: float = 0.5
    name: str = "bump"

    def value(self, Y):
        diff = np.asarray(Y, dtype=float) - self.center
        return np.exp(-np.sum(diff**2, axis=-1) / (2 * self.width**2))

    def gradient(self, Y):
        diff = np.asarray(Y, dtype=float) - self.center
        return -diff / self.width**2 * self.value(Y)[..., None]

    @property
    def lipschitz(self) -> float:
        return 1.0 / (self.width * math.sqrt(math.e))


@dataclass(frozen=True, eq=False)
class TrigonometricSum(TestFunction):
    frequencies: np.ndarray     # (modes, d)
    amplitudes: np.ndarray
    phases: np.ndarray
    name: str = "trig"

    def __post_init__(self):
        if len(self.amplitudes) > 5:
            raise PreconditionViolated("trigonometric test sums use at most 5 modes")

    def value(self, Y):
        arg = np.asarray(Y, dtype=float) @ self.frequencies.T + self.phases
        return np.sin(arg) @ self.amplitudes

    def gradient(self, Y):
        arg = np.asarray(Y, dtype=float) @ self.frequencies.T + self.phases
        return (np.cos(arg) * self.amplitudes) @ self.frequencies

    @property
    def lipschitz(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) * np.linalg.norm(self.frequencies, axis=1)))


@dataclass(frozen=True, eq=False)
class SmoothStep(TestFunction):
    """tanh across a direction; constant on hyperplanes orthogonal to it."""

    direction: np.ndarray
    offset: float = 0.0
    width: float = 0.01
    name: str = "step"

    def value(self, Y):
        return np.tanh((np.asarray(Y, dtype=float) @ self.direction - self.offset) / self.width)

    def gradient(self, Y):
        t = (np.asarray(Y, dtype=float) @ self.direction - self.offset) / self.width
        return (1.0 / np.cosh(t) ** 2 / self.width)[..., None] * self.direction

    @property
    def lipschitz(self) -> float:
        return 1.0 / self.width


def default_family(d: int, seed: int = 0, count: int = 6) -> List[TestFunction]:
    """Deterministic mix of linear, distance, bump, trigonometric and step functions."""
    rng = np.random.default_rng(seed)
    family: List[TestFunction] = []
    while len(family) < count:
        direction = unit(rng.standard_normal(d))
        makers = [
            lambda: LinearForm(np.eye(d)[len(family) % d]),
            lambda: LinearForm(direction),
            lambda: DistanceToPoint(3.0 * unit(rng.standard_normal(d))),
            lambda: GaussianBump(0.2 * rng.standard_normal(d), 0.5),
            lambda: TrigonometricSum(
                rng.uniform(-3, 3, size=(3, d)), rng.uniform(0.2, 1.0, size=3), rng.uniform(0, 2 * np.pi, size=3)
            ),
            lambda: SmoothStep(direction, 0.0, 0.5),
        ]
        family.append(makers[len(family) % len(makers)]())
    return family


def axis_steps(d: int, width: float = 0.01) -> List[TestFunction]:
    """Sharp steps across each coordinate axis; they separate parallel sheets with zero tangential gradient."""
    return [SmoothStep(np.eye(d)[i], 0.0, width, name=f"step_e{i}") for i in range(d)]


# ==================== Gradients and extensions ====================


def tangential_gradients(S: DiscreteSurface, f: TestFunction, indices=None) -> np.ndarray:
    normals = S.require_normals()
    idx = np.arange(S.n_points) if indices is None else np.asarray(indices, dtype=np.intp)
    g = f.gradient(S.points[idx])
    nu = normals[idx]
    return g - np.einsum("ij,ij->i", g, nu)[:, None] * nu


def tangential_gradient(S: DiscreteSurface, f: TestFunction, y_index: int) -> np.ndarray:
    """∇f(y) − ⟨∇f(y), ν(y)⟩ν(y)."""
    return tangential_gradients(S, f, [y_index])[0]


def check_lipschitz(points: np.ndarray, values: np.ndarray, L: float, chunk: int = 256) -> None:
    for start in range(0, points.shape[0], chunk):
        block = points[start:start + chunk]
        dist = np.linalg.norm(block[:, None, :] - points[None, :, :], axis=2)
        jump = np.abs(values[start:start + chunk, None] - values[None, :])
        bad = jump > L * dist + LIPSCHITZ_SLACK
        if np.any(bad):
            a, b = np.argwhere(bad)[0]
            raise NotLipschitz(
                f"values are not {L}-Lipschitz on the subset",
                {"pair": [int(start + a), int(b)], "jump": float(jump[a, b]), "distance": float(dist[a, b])},
            )


def mcshane_extend(S: DiscreteSurface, subset, f_values, y, L: float):
    """min_a f(a) + L|y − a| over the subset; works on one point or an array of points."""
    A = S.points[np.asarray(subset, dtype=np.intp)]
    values = np.asarray(f_values, dtype=float)
    check_lipschitz(A, values, L)
    Y = np.asarray(y, dtype=float)
    single = Y.ndim == 1
    Y = np.atleast_2d(Y)
    out = np.min(values[None, :] + L * np.linalg.norm(Y[:, None, :] - A[None, :, :], axis=2), axis=1)
    return float(out[0]) if single else out


def lip_local(S: DiscreteSurface, f_values, x_index: int, radii: Sequence[float]) -> LipProfile:
    """Largest difference quotient at x over shrinking balls; the smallest radius carries the estimate."""
    values = np.asarray(f_values, dtype=float)
    x = S.points[x_index]
    radii = sorted((float(r) for r in radii), reverse=True)
    profile = []
    for r in radii:
        idx = S.ball_indices(x, r)
        idx = idx[idx != x_index]
        if idx.size == 0:
            profile.append(None)
            continue
        quotient = np.abs(values[idx] - values[x_index]) / np.linalg.norm(S.points[idx] - x, axis=1)
        profile.append(float(quotient.max()))
    if profile[-1] is None:
        raise NoNeighbors("no neighbours inside the smallest radius", {"x_index": int(x_index), "radius": radii[-1]})
    return LipProfile(x_index=int(x_index), radii=radii, values=profile, value=profile[-1])


def lip_field(S: DiscreteSurface, f_values, radius: float) -> np.ndarray:
    """Lip f surrogate at every sample: largest quotient over neighbours closer than `radius`."""
    values = np.asarray(f_values, dtype=float)
    pairs = S.index.pairs_within(radius)
    out = np.zeros(S.n_points)
    if pairs.size:
        a, b = pairs[:, 0], pairs[:, 1]
        dist = np.linalg.norm(S.points[a] - S.points[b], axis=1)
        keep = dist > 0
        q = np.abs(values[a] - values[b])[keep] / dist[keep]
        np.maximum.at(out, a[keep], q)
        np.maximum.at(out, b[keep], q)
    return out


# ==================== Audits ====================


def poincare_audit(
    S: DiscreteSurface,
    functions: Sequence[TestFunction],
    probes: Sequence[int],
    radii: Sequence[float],
    tolerance: float = 1e-9,
    threads: Optional[int] = None,
) -> PoincareReport:
    """⨍|f − f_B| against r·(⨍_{2B}|∇^M f|²)^{1/2}; C_P is the worst ratio found over the family."""
    kept = [float(r) for r in radii if r >= S.h_min]
    records: List[PoincareRecord] = []
    for f in functions:
        values = f.value(S.points)
        grad_sq = np.sum(tangential_gradients(S, f) ** 2, axis=1)

        def measure(job) -> PoincareRecord:
            i, r = job
            x = S.points[i]
            inner = _ball_or_raise(S, x, r)
            w = S.weights[inner]
            mean = np.average(values[inner], weights=w)
            lhs = float(np.average(np.abs(values[inner] - mean), weights=w))
            outer = _ball_or_raise(S, x, 2 * r)
            rhs = float(r * math.sqrt(np.average(grad_sq[outer], weights=S.weights[outer])))
            hard = rhs <= ZERO_RHS and lhs > tolerance
            skipped = rhs <= ZERO_RHS and not hard
            ratio = lhs / rhs if rhs > ZERO_RHS else None
            return PoincareRecord(
                function=f.name, x_index=int(i), r=r, lhs=lhs, rhs_core=rhs,
                ratio=ratio, hard_failure=hard, skipped=skipped,
            )

        records.extend(parallel_map(measure, [(int(i), r) for i in probes for r in kept], threads))
    hard = [rec for rec in records if rec.hard_failure]
    ratios = [rec for rec in records if rec.ratio is not None]
    worst = max(ratios, key=lambda rec: rec.ratio) if ratios else None
    if hard:
        worst = max(hard, key=lambda rec: rec.lhs)
        c_p = math.inf
        logger.warning(f"{len(hard)} Poincaré records with vanishing gradient term and lhs > {tolerance}")
    else:
        c_p = worst.ratio if worst else 0.0
    return PoincareReport(
        c_p=c_p if math.isfinite(c_p) else None,
        c_p_finite=math.isfinite(c_p),
        worst=worst,
        records=records,
        hard_failures=len(hard),
        functions=[f.name for f in functions],
    )


def keith_form_audit(
    S: DiscreteSurface,
    f_values,
    balls: Sequence[Tuple[int, float]],
    C_P: float,
    lip_radius: Optional[float] = None,
    slack: float = 0.05,
) -> KeithReport:
    """⨍_B|f − f_B| ≤ κ₁·diam(B)·(⨍_{2B}(Lip f)²)^{1/2} with κ₁ = C_P/2."""
    values = np.asarray(f_values, dtype=float)
    lip = lip_field(S, values, lip_radius or S.h_min)
    kappa1 = C_P / 2
    records = []
    for i, r in balls:
        x = S.points[i]
        inner = _ball_or_raise(S, x, r)
        w = S.weights[inner]
        lhs = float(np.average(np.abs(values[inner] - np.average(values[inner], weights=w)), weights=w))
        outer = _ball_or_raise(S, x, 2 * r)
        core = float(2 * r * math.sqrt(np.average(lip[outer] ** 2, weights=S.weights[outer])))
        if core > ZERO_RHS:
            ratio = lhs / core
            violated = ratio > kappa1 * (1 + slack)
        else:
            ratio = None
            violated = lhs > ZERO_RHS
        records.append(KeithRecord(x_index=int(i), r=float(r), lhs=lhs, rhs_core=core, ratio=ratio, violated=violated))
    finite = [rec.ratio for rec in records if rec.ratio is not None]
    return KeithReport(
        kappa1=kappa1 if math.isfinite(kappa1) else None,
        worst_ratio=max(finite) if finite else None,
        records=records,
        violations=sum(rec.violated for rec in records),
    )


def check_gradient_domination(S: DiscreteSurface, x, r: float) -> GradientDominationReport:
    """|∇^M f(y)| ≤ 2|ν_{x,2r} − ν(y)| for f = ⟨·, ν_{x,2r}⟩ at every sample of B_{2r}(x)."""
    nu_bar = average_normal(S, x, 2 * r)
    idx = _ball_or_raise(S, x, 2 * r)
    grads = tangential_gradients(S, LinearForm(nu_bar), idx)
    lhs = np.linalg.norm(grads, axis=1)
    rhs = 2 * np.linalg.norm(nu_bar - S.normals[idx], axis=1)
    violations = int(np.sum(lhs > rhs + 1e-12))
    return GradientDominationReport(points=int(idx.size), violations=violations, max_gradient=float(lhs.max()))


def tangent_approximation_profile(
    S: DiscreteSurface, x_index: int, h_values: Sequence[float], tau=None
) -> TangentProfile:
    """Distance from x + hτ to the sample for shrinking h; d/h should shrink on smooth surfaces."""
    x = S.points[x_index]
    if tau is None:
        tau = tangent_basis(S.require_normals()[x_index])[0]
    tau = unit(tau)
    if S.has_normals and abs(float(tau @ S.normals[x_index])) > 1e-9:
        raise PreconditionViolated("direction is not tangent at the sample point")
    h_values = sorted((float(h) for h in h_values), reverse=True)
    dist, _ = S.index.nearest(x + np.outer(h_values, tau))
    dist = np.atleast_1d(dist)
    ratios = [float(d / h) for d, h in zip(dist, h_values)]
    return TangentProfile(x_index=int(x_index), h=h_values, distances=dist.tolist(), ratios=ratios)
