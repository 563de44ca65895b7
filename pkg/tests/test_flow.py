from dataclasses import replace

import numpy as np
import pytest

from rlab.construction.ccbp import NetLevel, build_ccbp
from rlab.construction.flow import (
    PHI,
    bilip_criterion,
    bilip_estimate,
    containment_audit,
    epsilon_prime,
    flow_summary,
    partition_weights,
    reifenberg_audit,
    run_flow,
    sigma_k,
    support_check,
    trace_columns,
    trace_rows,
)
from rlab.models.config import ScaleLadder
from rlab.utils.errors import DegeneratePair, FlowDiverged, PreconditionViolated, ResolutionExceeded
from rlab.zoo.generators import generate, make_spec

LADDER = ScaleLadder(r0=0.2, ratio=2.0, depth=2)


@pytest.fixture(scope="module")
def plane_ccbp(plane):
    return build_ccbp(plane, np.zeros(3), 0.4, LADDER)


@pytest.fixture(scope="module")
def plane_trace(plane_ccbp):
    return run_flow(plane_ccbp)


def test_bump_profile():
    np.testing.assert_allclose(PHI(np.array([0.0, 4.0, 8.0, 9.0, 10.0, 12.0])), [1, 1, 1, 0.5, 0, 0])
    t = np.linspace(8, 10, 201)
    assert np.all(np.diff(PHI(t)) <= 0)


def test_partition_of_unity_near_the_net(plane_ccbp):
    weights = partition_weights(plane_ccbp, 1, [0.01, -0.02, 0.0])
    assert sum(weights.values()) == pytest.approx(1.0)
    assert partition_weights(plane_ccbp, 1, [5.0, 5.0, 0.0]) == {}


def test_sigma_projects_onto_the_plane(plane_ccbp):
    y = np.array([0.02, 0.03, 0.004])
    np.testing.assert_allclose(sigma_k(plane_ccbp, 1, y), [0.02, 0.03, 0.0], atol=1e-15)


def test_sigma_fixes_points_far_away(plane_ccbp):
    Y = np.array([[3.0, 0.0, 0.1], [0.0, -4.0, 0.2], [0.0, 0.0, 0.01]])
    check = support_check(plane_ccbp, 2, Y)
    assert check.passed
    assert check.outside == 2


def test_epsilon_prime_levels(plane_ccbp):
    with pytest.raises(PreconditionViolated):
        epsilon_prime(plane_ccbp, 0, [0.0, 0.0, 0.0])
    assert epsilon_prime(plane_ccbp, 1, [0.0, 0.0, 0.0]) == pytest.approx(0.0, abs=1e-12)
    assert epsilon_prime(plane_ccbp, 2, [50.0, 0.0, 0.0]) == 0.0


def test_flow_is_identity_on_a_plane(plane_trace):
    assert plane_trace.depth == 2
    assert np.max(np.abs(plane_trace.final - plane_trace.grid)) < 1e-9
    assert plane_trace.grid_spacing == pytest.approx(0.05 / 4)
    assert bilip_criterion(plane_trace) == pytest.approx(0.0, abs=1e-18)


def test_plane_flow_is_an_isometry(plane_trace):
    estimate = bilip_estimate(plane_trace, max_pairs=100_000)
    assert estimate.k_lower <= 1 + 1e-6
    summary = flow_summary(plane_trace, estimate)
    assert summary.step_bound_ok
    assert summary.max_displacement < 1e-9
    assert summary.grid_points == plane_trace.grid.shape[0]


def test_flow_depth_must_fit(plane_ccbp):
    with pytest.raises(PreconditionViolated):
        run_flow(plane_ccbp, depth=5)
    with pytest.raises(PreconditionViolated):
        run_flow(plane_ccbp, depth=0)


def test_reifenberg_audit_on_plane_image(plane_trace):
    centers = plane_trace.interior(0.1)
    report = reifenberg_audit(plane_trace.final, [0.1], spacing=plane_trace.grid_spacing,
                              centers=centers, max_centers=32)
    assert report.worst < 1e-6
    assert len(report.records) == 32


def test_reifenberg_audit_sees_a_hole(plane_trace):
    pts = plane_trace.final
    keep = np.linalg.norm(pts[:, :2] - [0.05, 0.0], axis=1) > 0.04
    center = int(np.argmin(np.linalg.norm(pts[keep], axis=1)))
    report = reifenberg_audit(pts[keep], [0.1], spacing=plane_trace.grid_spacing, centers=[center])
    assert report.worst_record.hole > 0.2
    assert report.worst_record.flatness < 1e-6


def test_reifenberg_radius_below_spacing(plane_trace):
    with pytest.raises(ResolutionExceeded):
        reifenberg_audit(plane_trace.final, [plane_trace.grid_spacing / 2], spacing=plane_trace.grid_spacing)


def test_containment_on_plane(plane, plane_trace):
    report = containment_audit(plane, plane_trace, np.zeros(3), 0.4)
    assert report.passed
    assert report.max_distance <= plane_trace.grid_spacing


def test_wavy_flow_moves_points(wavy):
    c = build_ccbp(wavy, np.zeros(3), 0.4, LADDER)
    trace = run_flow(c, grid_spacing=0.025)
    assert bilip_criterion(trace) > 0
    assert np.max(np.abs(trace.final - trace.grid)) > 0
    assert all(step <= 1.5 for step in trace.step_ratio)
    estimate = bilip_estimate(trace, max_pairs=50_000)
    assert 1.0 <= estimate.k_lower < 1.5


def test_partition_weights_split_evenly_between_twin_points(plane_ccbp):
    twins = np.array([[-0.9, 0.0, 0.0], [0.9, 0.0, 0.0]])
    level = NetLevel(k=0, r=0.2, net=np.array([0, 1]), refined=twins, refined_index=np.array([0, 1]))
    c = replace(plane_ccbp, net=replace(plane_ccbp.net, levels=[level]))
    weights = partition_weights(c, 0, [0.0, 0.0, 0.0])
    assert weights == {0: pytest.approx(0.5), 1: pytest.approx(0.5)}
    assert partition_weights(c, 0, [0.0, 0.0, 1.0]) == {0: pytest.approx(0.5), 1: pytest.approx(0.5)}
    # 8 r from one twin and 17 r from the other
    assert partition_weights(c, 0, [2.5, 0.0, 0.0]) == {1: pytest.approx(1.0)}


def test_epsilon_prime_of_one_offset_plane(plane_ccbp):
    delta = 0.004
    shifted = plane_ccbp.with_plane(1, 1, shift=delta)
    y = shifted.level(1).refined[1]
    r_1 = shifted.level(1).r
    assert epsilon_prime(shifted, 1, y) == pytest.approx(delta / (100 * r_1), rel=1e-3)
    assert epsilon_prime(shifted, 2, [50.0, 0.0, 0.0]) == 0.0


def test_level_step_above_bound_diverges(plane_ccbp):
    assert plane_ccbp.level(0).size >= 2
    lifted = plane_ccbp
    for j in range(1, plane_ccbp.level(0).size):
        lifted = lifted.with_plane(0, j, shift=1.0)
    with pytest.raises(FlowDiverged) as info:
        run_flow(lifted, grid_spacing=0.05)
    detail = info.value.to_dict()
    assert detail["level"] == 0
    assert detail["bound"] == "step"
    assert 1.5 * 0.2 < detail["displacement"] <= 10 * 0.2
    assert info.value.exit_code == 3

    trace = run_flow(lifted, grid_spacing=0.05, depth=1, strict=False)
    assert trace.step_ratio[0] > 1.5
    assert not flow_summary(trace, bilip_estimate(trace)).step_bound_ok


def test_collapsed_image_is_a_degenerate_pair(plane_trace):
    grid = plane_trace.grid[:50]
    collapsed = grid.copy()
    collapsed[7] = collapsed[3]
    trace = replace(plane_trace, grid=grid, params=plane_trace.params[:50], images=[grid, collapsed])
    with pytest.raises(DegeneratePair) as info:
        bilip_estimate(trace)
    assert sorted(info.value.to_dict()["pair"]) == [3, 7]


def test_trace_rows_follow_the_columns(plane_trace):
    columns = trace_columns(plane_trace)
    rows = trace_rows(plane_trace)
    assert columns[:3] == ["z0", "z1", "z2"]
    assert columns[-3:] == ["f2_0", "f2_1", "f2_2"]
    assert rows.shape == (plane_trace.grid.shape[0], len(columns))
    np.testing.assert_array_equal(rows[:, -3:], plane_trace.final)


def test_level_records_accumulate(plane_trace):
    summary = flow_summary(plane_trace, bilip_estimate(plane_trace, max_pairs=10_000))
    assert [rec.level for rec in summary.levels] == [0, 1, 2]
    assert [rec.step_ratio for rec in summary.levels[:-1]] == plane_trace.step_ratio
    assert summary.levels[-1].step_ratio is None
    assert summary.levels[-1].n_cumulative == pytest.approx(summary.n_criterion)


def test_reifenberg_hole_sees_points_lifted_off_the_plane(plane_trace):
    pts = plane_trace.final.copy()
    lifted = np.linalg.norm(pts[:, :2] - [0.05, 0.0], axis=1) < 0.04
    pts[lifted, 2] += 0.08
    center = int(np.argmin(np.linalg.norm(pts, axis=1)))
    report = reifenberg_audit(pts, [0.1], spacing=plane_trace.grid_spacing, centers=[center])
    # the lifted cap still covers the disk once projected, but not in space
    assert report.worst_record.hole > 0.1


SLOPES = [0.005, 0.01, 0.02, 0.04]


@pytest.fixture(scope="module")
def slope_sweep():
    """(achieved ε, N, K_lower) for a·sin(t/ℓ) graphs at increasing a/ℓ, same jitter, depth 4."""
    ladder = ScaleLadder(r0=0.2, ratio=1.5, depth=4)
    rows = []
    for slope in SLOPES:
        S = generate(make_spec(shape="graph-sin", n=2, samples=20_000, seed=6, amplitude=0.1 * slope, wavelength=0.1))
        c = build_ccbp(S, np.zeros(3), 0.4, ladder, eps_target=1.0)
        trace = run_flow(c, grid_spacing=0.02)
        rows.append((c.achieved_eps, bilip_criterion(trace), bilip_estimate(trace).k_lower))
    return rows


def test_sweep_degrades_monotonically(slope_sweep):
    eps, n, k = (np.array(column) for column in zip(*slope_sweep))
    assert np.all(np.diff(eps) > 0)
    assert np.all(np.diff(n) > 0)
    assert np.all(np.diff(k) > 0)


def test_sweep_criterion_scales_quadratically(slope_sweep):
    n_low, n_high = slope_sweep[1][1], slope_sweep[3][1]
    assert 0 < n_high <= 16.5 * n_low
