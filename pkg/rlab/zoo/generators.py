import json
import logging
import math
from typing import Callable, Tuple

import numpy as np
from pydantic import ValidationError
from scipy.special import gamma as gamma_fn

from rlab.geometry.measure import DiscreteSurface, disk_volume
from rlab.models.zoo_spec import ExpectedProperties, ZooSpec
from rlab.utils.errors import BadSpec

logger = logging.getLogger(__name__)

AREA_QUADRATURE = 4096


def make_spec(**params) -> ZooSpec:
    """ZooSpec from keyword parameters, with validation failures reported as BadSpec."""
    try:
        return ZooSpec(**params)
    except ValidationError as e:
        raise BadSpec("invalid zoo spec", {"errors": json.loads(e.json(include_url=False))})


def _check(spec: ZooSpec) -> None:
    if spec.shape == "graph-multiscale" and spec.gamma <= 0:
        raise BadSpec("graph-multiscale needs gamma > 0 (use snowflake-like for gamma = 0)")
    if spec.shape == "holed-plane":
        if spec.hole_radius >= spec.extent:
            raise BadSpec("hole does not fit inside the parameter square",
                          {"hole_radius": spec.hole_radius, "extent": spec.extent})
        if spec.hole_center is not None and len(spec.hole_center) != spec.n:
            raise BadSpec(f"hole centre needs {spec.n} coordinates")
        if spec.hole_radius > 0.2 * 2 * spec.extent:
            logger.warning("hole radius above 0.2 of the region; Ahlfors regularity may degrade near the hole")
    if spec.shape == "two-sheet" and spec.samples < 2:
        raise BadSpec("two-sheet needs at least two samples")


def jittered_grid(count: int, n: int, extent: float, rng: np.random.Generator) -> Tuple[np.ndarray, float]:
    """Stratified jittered sample of [-extent, extent]^n with g^n ≈ count cells; returns points and cell volume."""
    g = max(int(round(count ** (1.0 / n))), 1)
    cells = np.stack(np.meshgrid(*([np.arange(g)] * n), indexing="ij"), axis=-1).reshape(-1, n)
    u = (cells + rng.uniform(size=cells.shape)) / g
    return -extent + 2 * extent * u, (2 * extent / g) ** n


# ==================== Height functions ====================


def _sin_height(spec: ZooSpec, rng: np.random.Generator) -> Callable:
    a, ell = spec.amplitude, spec.wavelength

    def height(t):
        value = a * np.sin(t[:, 0] / ell)
        grad = np.zeros_like(t)
        grad[:, 0] = a / ell * np.cos(t[:, 0] / ell)
        return value, grad

    return height


def _lacunary_height(spec: ZooSpec, rng: np.random.Generator, alternate: bool) -> Callable:
    a, ell, lam, gam = spec.amplitude, spec.wavelength, spec.lacunarity, spec.gamma
    phases = rng.uniform(0, 2 * np.pi, size=spec.levels)

    def height(t):
        value = np.zeros(t.shape[0])
        grad = np.zeros_like(t)
        for m in range(1, spec.levels + 1):
            axis = (m - 1) % min(t.shape[1], 2) if alternate else 0
            amp = a * lam ** (-m * (1 + gam))
            freq = lam**m / ell
            arg = freq * t[:, axis] + phases[m - 1]
            value += amp * np.sin(arg)
            grad[:, axis] += amp * freq * np.cos(arg)
        return value, grad

    return height


def _graph(spec: ZooSpec, height: Callable, t: np.ndarray, cell: float) -> DiscreteSurface:
    value, grad = height(t)
    stretch = np.sqrt(1.0 + np.sum(grad**2, axis=1))
    # + 0.0 folds -0.0 into 0.0 so zero amplitude reproduces the flat sample exactly
    points = np.column_stack([t, value + 0.0])
    normals = np.column_stack([-grad + 0.0, np.ones(t.shape[0])]) / stretch[:, None]
    return DiscreteSurface(points, cell * stretch, spec.n, normals)


def _plane(spec: ZooSpec, rng: np.random.Generator) -> DiscreteSurface:
    t, cell = jittered_grid(spec.samples, spec.n, spec.extent, rng)
    return _graph(spec, lambda s: (np.zeros(s.shape[0]), np.zeros_like(s)), t, cell)


def _sphere(spec: ZooSpec, rng: np.random.Generator) -> DiscreteSurface:
    R, d = spec.radius, spec.n + 1
    area = sphere_area(spec.n) * R**spec.n
    if spec.n == 2:
        # equal-area strata in (height, angle)
        g_z = max(int(round(math.sqrt(spec.samples / math.pi))), 1)
        g_phi = max(int(round(spec.samples / g_z)), 1)
        i, j = np.meshgrid(np.arange(g_z), np.arange(g_phi), indexing="ij")
        z = -R + (i.ravel() + rng.uniform(size=i.size)) * 2 * R / g_z
        phi = (j.ravel() + rng.uniform(size=j.size)) * 2 * np.pi / g_phi
        rho = np.sqrt(np.clip(R**2 - z**2, 0.0, None))
        points = np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])
    else:
        points = rng.standard_normal((spec.samples, d))
        points = R * points / np.linalg.norm(points, axis=1, keepdims=True)
    normals = points / np.linalg.norm(points, axis=1, keepdims=True)
    weights = np.full(points.shape[0], area / points.shape[0])
    return DiscreteSurface(points, weights, spec.n, normals)


def _two_sheet(spec: ZooSpec, rng: np.random.Generator) -> DiscreteSurface:
    t, cell = jittered_grid(spec.samples // 2, spec.n, spec.extent, rng)
    m = t.shape[0]
    half = spec.separation / 2
    e = np.zeros(spec.n + 1)
    e[-1] = 1.0
    points = np.vstack([np.column_stack([t, np.full(m, half)]), np.column_stack([t, np.full(m, -half)])])
    normals = np.vstack([np.tile(e, (m, 1)), np.tile(-e, (m, 1))])
    return DiscreteSurface(points, np.full(2 * m, cell), spec.n, normals)


def _holed_plane(spec: ZooSpec, rng: np.random.Generator) -> DiscreteSurface:
    t, cell = jittered_grid(spec.samples, spec.n, spec.extent, rng)
    center = np.zeros(spec.n) if spec.hole_center is None else np.asarray(spec.hole_center, dtype=float)
    keep = np.linalg.norm(t - center, axis=1) >= spec.hole_radius
    t = t[keep]
    area = (2 * spec.extent) ** spec.n - disk_volume(spec.n) * spec.hole_radius**spec.n
    normals = np.tile(np.eye(spec.n + 1)[-1], (t.shape[0], 1))
    points = np.column_stack([t, np.zeros(t.shape[0])])
    return DiscreteSurface(points, np.full(t.shape[0], area / t.shape[0]), spec.n, normals)


def generate(spec: ZooSpec) -> DiscreteSurface:
    """Deterministic sample of the corpus surface described by `spec`."""
    _check(spec)
    rng = np.random.default_rng(spec.seed)
    if spec.shape == "plane":
        S = _plane(spec, rng)
    elif spec.shape == "sphere":
        S = _sphere(spec, rng)
    elif spec.shape == "two-sheet":
        S = _two_sheet(spec, rng)
    elif spec.shape == "holed-plane":
        S = _holed_plane(spec, rng)
    else:
        t, cell = jittered_grid(spec.samples, spec.n, spec.extent, rng)
        if spec.shape == "graph-sin":
            height = _sin_height(spec, rng)
        else:
            height = _lacunary_height(spec, rng, alternate=spec.shape == "graph-multiscale")
        S = _graph(spec, height, t, cell)
    logger.info(f"Generated {spec.shape} surface: {S.n_points} points, n={spec.n}, seed={spec.seed}")
    return S


# ==================== Expectations ====================


def sphere_area(n: int) -> float:
    """H^n measure of the unit n-sphere."""
    return 2 * math.pi ** ((n + 1) / 2) / gamma_fn((n + 1) / 2)


def _graph_area(spec: ZooSpec) -> float:
    rng = np.random.default_rng(spec.seed)
    # the lacunary phases are drawn after the jitter; replay both to get the same surface
    jittered_grid(spec.samples, spec.n, spec.extent, rng)
    if spec.shape == "graph-sin":
        height = _sin_height(spec, rng)
    else:
        height = _lacunary_height(spec, rng, alternate=spec.shape == "graph-multiscale")
    dims = 2 if spec.shape == "graph-multiscale" and spec.n >= 2 else 1
    top = 1.0 / spec.wavelength
    if spec.shape != "graph-sin":
        top *= spec.lacunarity**spec.levels
    # at least 16 nodes per finest period
    per_axis = int(16 * top * 2 * spec.extent / (2 * np.pi)) + 1
    q = max(AREA_QUADRATURE, per_axis) if dims == 1 else max(AREA_QUADRATURE // 4, min(per_axis, 4096))
    axis = -spec.extent + (np.arange(q) + 0.5) * (2 * spec.extent / q)
    mesh = np.stack(np.meshgrid(*([axis] * dims), indexing="ij"), axis=-1).reshape(-1, dims)
    t = np.zeros((mesh.shape[0], spec.n))
    t[:, :dims] = mesh
    _, grad = height(t)
    stretch = np.sqrt(1.0 + np.sum(grad**2, axis=1))
    return float(stretch.mean() * (2 * spec.extent) ** spec.n)


def describe(spec: ZooSpec) -> ExpectedProperties:
    """Machine-readable expectations for a corpus member."""
    _check(spec)
    flat_area = (2 * spec.extent) ** spec.n
    if spec.shape == "plane":
        return ExpectedProperties(shape=spec.shape, carleson=0.0, carleson_dyadic_growth="none", kappa=1.0,
                                  alpha_exponent=None, total_area=flat_area)
    if spec.shape == "sphere":
        return ExpectedProperties(shape=spec.shape, kappa=math.pi / 2, alpha_exponent=1.0,
                                  total_area=sphere_area(spec.n) * spec.radius**spec.n)
    if spec.shape == "two-sheet":
        return ExpectedProperties(shape=spec.shape, carleson_finite=False, carleson_dyadic_growth="linear",
                                  quasiconvex=False, connected=False, alpha_at_spanning_scales=1.0,
                                  total_area=2 * flat_area)
    if spec.shape == "holed-plane":
        return ExpectedProperties(shape=spec.shape, carleson=0.0, carleson_dyadic_growth="none",
                                  alpha_exponent=None,
                                  total_area=flat_area - disk_volume(spec.n) * spec.hole_radius**spec.n)
    area = _graph_area(spec)
    if spec.shape == "graph-sin":
        flat = spec.amplitude == 0
        return ExpectedProperties(shape=spec.shape, carleson=0.0 if flat else None,
                                  carleson_dyadic_growth="none" if flat else "bounded",
                                  kappa=1.0 if flat else None, alpha_exponent=None if flat else 1.0,
                                  total_area=area)
    if spec.shape == "graph-multiscale":
        return ExpectedProperties(shape=spec.shape, alpha_exponent=None, total_area=area)
    self_similar = spec.gamma == 0
    return ExpectedProperties(
        shape=spec.shape,
        carleson_finite=not self_similar,
        carleson_dyadic_growth="linear" if self_similar else "bounded",
        alpha_exponent=0.0 if self_similar else spec.gamma,
        total_area=area,
    )
