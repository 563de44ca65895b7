import math

import numpy as np
import pytest

from rlab.geometry.core import AffinePlane
from rlab.geometry.measure import draw_probes
from rlab.geometry.span import (
    Subspace,
    build_effective_span,
    calibrate_c0,
    check_effective_span,
    coefficient_bound,
    dist_to_subspace,
    escape_index,
    gs_decompose,
)
from rlab.utils.errors import HypothesisViolated, NoEscapePoint, PreconditionViolated


def test_coefficient_bound_formula():
    assert coefficient_bound(2, 0.1, 1.0) == pytest.approx(math.sqrt(2) / 0.01)
    assert coefficient_bound(3, 0.5, 2.0) == pytest.approx(math.sqrt(3) * 4 * 2 / 0.125)


def test_orthogonal_frame_gives_unit_coefficient():
    beta = gs_decompose(2.0 * np.eye(3), [2.0, 0.0, 0.0], R=2.0, k0=0.5, K0=1.0)
    np.testing.assert_allclose(beta, [1.0, 0.0, 0.0], atol=1e-15)


def admissible(U, k0):
    if np.linalg.norm(U[0]) < k0 + 1e-9:
        return False
    gaps = np.abs(np.diag(np.linalg.qr(U.T)[1]))
    return bool(np.all(gaps[1:] >= k0 + 1e-9))


@pytest.mark.parametrize("n", [2, 3])
def test_coefficient_bound_holds_on_random_frames(n):
    rng = np.random.default_rng(100 + n)
    k0, K0, R = 0.1, 1.0, 1.0
    bound = coefficient_bound(n, k0, K0)
    accepted = 0
    while accepted < 1_000:
        U = rng.uniform(-1, 1, size=(n, n)) / math.sqrt(n)
        if not admissible(U, k0):
            continue
        accepted += 1
        v = U.T @ rng.uniform(-1, 1, size=n)
        beta = gs_decompose(U, v, R, k0, K0)
        assert np.linalg.norm(v - U.T @ beta) <= 1e-9 * max(np.linalg.norm(v), R)
        assert np.max(np.abs(beta)) <= bound * np.linalg.norm(v) / R


@pytest.mark.parametrize(
    "U, v, hypothesis",
    [
        ([[2.0, 0.0], [0.0, 1.0]], [1.0, 0.0], "upper_norm"),
        ([[0.05, 0.0], [0.0, 1.0]], [1.0, 0.0], "lower_norm"),
        ([[0.5, 0.0], [0.5, 0.01]], [1.0, 0.0], "separation"),
        ([[1.0, 0.0]], [0.0, 1.0], "span"),
    ],
)
def test_hypothesis_violations(U, v, hypothesis):
    with pytest.raises(HypothesisViolated) as info:
        gs_decompose(U, v, R=1.0, k0=0.1, K0=1.0)
    assert info.value.detail["hypothesis"] == hypothesis


def test_subspace_dimension_limit():
    with pytest.raises(PreconditionViolated):
        Subspace(np.zeros(3), np.eye(3)[:2])
    with pytest.raises(PreconditionViolated):
        Subspace(np.zeros(4), [[1.0, 1.0, 0.0, 0.0]])


def test_dist_to_subspace():
    V = Subspace(np.zeros(4), [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]])
    assert dist_to_subspace([5.0, -2.0, 3.0, 4.0], V) == pytest.approx(5.0)


def test_escape_point_on_plane(plane, origin):
    V = Subspace(origin, np.zeros((0, 3)))
    i, r = escape_index(plane, V, origin, 0.3, 1 / 32)
    assert r == pytest.approx(0.3 / 32)
    assert np.linalg.norm(plane.points[i]) >= 11 * r
    with pytest.raises(NoEscapePoint):
        escape_index(plane, V, origin, 0.3, 0.1)
    with pytest.raises(PreconditionViolated):
        escape_index(plane, V, origin, 0.3, 0.6)
    with pytest.raises(PreconditionViolated):
        escape_index(plane, V, origin, 1.5, 0.1)


def test_calibrate_c0_on_plane(plane, origin):
    probes = draw_probes(plane, 4, seed=0, center=origin, radius=0.1)
    report = calibrate_c0(plane, probes, 0.3, trials=2, seed=0)
    assert report.found
    assert report.c0 <= 1 / 11
    assert report.failures[-1] == 0
    assert report.cases == 4 * 2 * 2


def test_effective_span_on_plane(plane, origin):
    P = AffinePlane(origin, [0.0, 0.0, 1.0])
    span = build_effective_span(plane, origin, 0.3, P, 1 / 32)
    check = check_effective_span(span)
    assert check.ok
    assert check.rank == 2
    assert len(span.indices) == 3
    assert np.all(np.abs(span.projections[:, 2]) < 1e-12)


def test_effective_span_on_sphere(sphere):
    x = sphere.points[sphere.index.nearest([0.0, 0.0, 1.0])[1]]
    P = AffinePlane.through(x, x)
    span = build_effective_span(sphere, x, 0.3, P, 1 / 32)
    assert span.indices[0] == sphere.index.nearest(x)[1]
    check = check_effective_span(span)
    assert check.ok
    assert check.rank == 2
    q0 = span.projections[0]
    for level in (1, 2):
        V = Subspace.spanned(q0, [q - q0 for q in span.projections[1:level]])
        assert dist_to_subspace(span.projections[level], V) >= 5 * span.r
        assert np.linalg.norm(span.points[level] - x) < 0.3
    # every projection lies in P
    np.testing.assert_allclose((span.projections - P.base) @ P.normal, 0.0, atol=1e-12)
