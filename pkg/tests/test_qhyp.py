import math

import numpy as np
import pytest

from harnacklab.errors import DisconnectedDomainError, GeometryError, InsufficientRangeError
from harnacklab.geometry import BallObstacle, Domain, SegmentObstacle
from harnacklab.qhyp import (
    QhGraph,
    SsResult,
    SsSweep,
    good_set_check,
    hitting_angles,
    qh_distance,
    qhbc_fit,
    ss_integral,
    ss_sweep,
    stencil_offsets,
)

THIN_SLIT = Domain(2, (SegmentObstacle((-0.9, 0.0), (0.0, 0.0)),))


def test_stencil_offsets():
    assert sorted(stencil_offsets(1)) == [(0, 1), (1, -1), (1, 0), (1, 1)]
    offsets = stencil_offsets(3)
    assert len(offsets) == 16
    assert (1, 0) in offsets and (2, 2) not in offsets and (0, -1) not in offsets
    with pytest.raises(ValueError):
        stencil_offsets(0)


def test_graph_only_in_the_plane():
    with pytest.raises(GeometryError):
        QhGraph(Domain(3), 0.1)


def test_distance_on_the_disc(disc):
    result = qh_distance(disc, (0.0, 0.0), (0.5, 0.0), 1 / 64)
    assert result.value == pytest.approx(math.log(2.0), rel=0.03)
    assert result.error == pytest.approx(abs(result.value - result.coarse))


def test_distance_is_symmetric_and_zero_on_the_diagonal(disc):
    a, b = (0.1, 0.2), (-0.3, 0.05)
    assert qh_distance(disc, a, b, 1 / 16).value == qh_distance(disc, b, a, 1 / 16).value
    assert qh_distance(disc, a, a, 1 / 16).value == 0.0


def test_distance_across_a_separating_slit():
    split = Domain(2, (SegmentObstacle((-1.0, 0.0), (1.0, 0.0)),))
    with pytest.raises(DisconnectedDomainError):
        qh_distance(split, (0.0, 0.5), (0.0, -0.5), 1 / 16)


def test_ball_fit(disc):
    fit = qhbc_fit(QhGraph(disc, 1 / 128))
    assert 0.95 <= fit.C1 <= 1.1
    assert abs(fit.C2) <= 0.2
    assert fit.max_violation <= 0.1
    assert fit.d0 == pytest.approx(1.0)


def test_fit_needs_range(disc):
    graph = QhGraph(disc, 1 / 16)
    with pytest.raises(InsufficientRangeError):
        qhbc_fit(graph, x0=(0.0, 0.0), samples=[(0.1, 0.0), (0.2, 0.0), (0.3, 0.0), (0.4, 0.0), (0.5, 0.0)])
    single = qhbc_fit(graph, x0=(0.0, 0.0), samples=[(0.5, 0.0)])
    assert single.C1 == 0.0 and single.n_samples == 1


def test_ss_integral_on_the_disc(disc):
    area = ss_integral(disc, (0.0, 0.0), 0.0, 1 / 32)
    assert area.refined == pytest.approx(math.pi, rel=0.03)
    half = ss_integral(disc, (0.0, 0.0), 0.5, 1 / 32)
    assert not half.diverged
    assert half.refined == pytest.approx(8 * math.pi / 3, rel=0.1)
    assert ss_integral(disc, (0.0, 0.0), 2.0, 1 / 32).diverged


def test_ss_sweep_rejects_negative_tau(disc):
    with pytest.raises(ValueError):
        ss_sweep(disc, (0.0, 0.0), 1 / 16, taus=(-0.5,))


def test_largest_stable_tau():
    sweep = SsSweep(
        [SsResult(0.1, 1.0, 1.05, False), SsResult(0.5, 2.0, 2.5, False), SsResult(0.9, 3.0, math.inf, True)]
    )
    assert sweep.largest_stable_tau == 0.1
    assert SsSweep([]).largest_stable_tau is None


def test_hitting_angles_of_the_thin_slit():
    angles = hitting_angles(THIN_SLIT, 0.5, 0.1)
    expected = math.pi - math.asin(0.1)
    assert angles.theta1 == pytest.approx(expected, abs=1e-6)
    assert angles.theta2 == pytest.approx(-expected, abs=1e-6)


def test_hitting_angles_without_obstacles(disc):
    assert hitting_angles(disc, 0.5, 0.1) is None
    with pytest.raises(ValueError):
        hitting_angles(THIN_SLIT, 1.5, 0.1)
    with pytest.raises(GeometryError):
        good_set_check(disc, 0.5, 0.1)


def test_thin_slit_is_good():
    report = good_set_check(THIN_SLIT, 0.5, 0.1)
    assert report.is_good, report.notes
    assert report.root1[1] == pytest.approx(0.0)
    c1, c2 = report.constants(1)
    assert 0 < c1 <= 3.0 and math.isfinite(c2)


def test_graph_distance_satisfies_the_triangle_inequality():
    graph = QhGraph(THIN_SLIT, 1 / 32)
    nodes = np.random.default_rng(9).choice(graph.n_nodes, size=12, replace=False)
    table = np.array([graph.distances_from(graph.points[i])[nodes] for i in nodes])
    assert np.allclose(np.diag(table), 0.0)
    assert np.allclose(table, table.T, rtol=1e-12)
    for a in range(len(nodes)):
        for b in range(len(nodes)):
            assert np.all(table[a] <= table[a, b] + table[b] + 1e-9)


def test_graph_distance_dominates_the_log_distance_ratio(disc):
    graph = QhGraph(disc, 1 / 32)
    nodes = np.random.default_rng(4).choice(graph.n_nodes, size=30, replace=False)
    ratio = np.abs(np.log(graph.d[nodes][:, None] / graph.d[nodes][None, :]))
    table = np.array([graph.distances_from(graph.points[i])[nodes] for i in nodes])
    assert np.all(table >= 0.95 * ratio - 1e-12)


def test_ss_integral_grows_with_tau(disc):
    sweep = ss_sweep(disc, (0.0, 0.0), 1 / 16, taus=(0.0, 0.25, 0.5, 0.75))
    values = [r.value for r in sweep.results]
    refined = [r.refined for r in sweep.results]
    assert values == sorted(values) and refined == sorted(refined)


def test_tangency_cusp_is_not_good():
    thick = SegmentObstacle((-0.9, 0.0), (0.0, 0.0), 0.02)
    cusp = BallObstacle((-0.49, 0.04), 0.02)
    report = good_set_check(Domain(2, (thick, cusp)), 0.5, 0.1, 256, 3, 3.0)
    assert not report.is_good
