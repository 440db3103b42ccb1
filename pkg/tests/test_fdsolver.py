import math
from unittest.mock import patch

import numpy as np
import pytest

from harnacklab.errors import ConvergenceError, GeometryError
from harnacklab.fdsolver import (
    NODE_INTERIOR,
    NODE_OBSTACLE,
    NODE_OUTER,
    ArcTarget,
    ConeTarget,
    FunctionTarget,
    SphereTarget,
    dump_solution,
    harmonic_measure_fd,
    harmonic_measure_fd_with_error,
    prolong,
    rasterize,
    solve_dirichlet,
)
from harnacklab.geometry import BallObstacle, ConeSpec, Domain, SegmentObstacle


def test_rasterize_classifies_nodes():
    dom = Domain(2, (BallObstacle((0.5, 0.0), 0.1),))
    rd = rasterize(dom, SphereTarget(), 0.1)
    centre = rd.shape[0] // 2
    assert rd.mask[centre, centre] == NODE_INTERIOR
    assert rd.mask[centre + 5, centre] == NODE_OBSTACLE
    assert rd.mask[0, 0] == NODE_OUTER
    assert rd.boundary_data[0, 0] == 1.0
    assert rd.boundary_data[centre + 5, centre] == 0.0


def test_cone_target_values():
    target = ConeTarget(ConeSpec(math.pi / 4))
    values = target.values(np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]]))
    assert values.tolist() == [1.0, 0.0, 0.0]


def test_arc_target_validates():
    with pytest.raises(ValueError):
        ArcTarget(1.0, 0.5)
    with pytest.raises(GeometryError):
        ArcTarget(0.0, 1.0).values(np.zeros((1, 3)))


def test_linear_data_is_reproduced_exactly(disc):
    rd = rasterize(disc, FunctionTarget(lambda p: p[:, 0], project=False), 1 / 32)
    sol = solve_dirichlet(rd, tol=1e-12)
    assert sol.evaluate((0.3, 0.2)) == pytest.approx(0.3, abs=1e-8)
    assert np.allclose(sol.evaluate(np.array([[0.1, 0.0], [-0.4, 0.3]])), [0.1, -0.4], atol=1e-8)


def test_arc_measure_from_the_centre(disc):
    value = harmonic_measure_fd(disc, ArcTarget(math.pi / 4, 3 * math.pi / 4), (0.0, 0.0), 1 / 64)
    assert value == pytest.approx(0.25, abs=0.02)


def test_grid_halving_error_estimate(slit_domain):
    est = harmonic_measure_fd_with_error(slit_domain, SphereTarget(), np.array([[0.25, 0.0], [0.2, 0.15]]), 1 / 32)
    assert est.value.shape == (2,)
    assert np.all((est.value > 0) & (est.value < 1))
    assert np.all(np.isfinite(est.error))
    assert np.allclose(np.abs(est.value - est.coarse), est.error)


def test_queries_must_keep_clear_of_the_obstacle(slit_domain):
    sol = solve_dirichlet(rasterize(slit_domain, SphereTarget(), 1 / 32))
    with pytest.raises(GeometryError):
        sol.evaluate((-0.5, 0.01))
    with pytest.raises(GeometryError):
        sol.evaluate((1.5, 0.0))


def test_supported_dimensions():
    with pytest.raises(ValueError):
        rasterize(Domain(3), SphereTarget(), 0.01)
    with pytest.raises(GeometryError):
        rasterize(Domain(4), SphereTarget(), 0.25)
    with pytest.raises(ValueError):
        rasterize(Domain(2), SphereTarget(), 0.0)


def test_three_dimensional_constant_data():
    value = harmonic_measure_fd(Domain(3), SphereTarget(), (0.0, 0.0, 0.0), 1 / 8)
    assert value == pytest.approx(1.0, abs=1e-6)


def test_unconverged_relaxation_raises(disc):
    rd = rasterize(disc, SphereTarget(), 1 / 16)
    with patch("harnacklab.fdsolver.MAX_SWEEPS", 25):
        with pytest.raises(ConvergenceError) as info:
            solve_dirichlet(rd, tol=1e-30)
    assert info.value.iterations == 25


def test_dump_solution(tmp_path, disc):
    sol = solve_dirichlet(rasterize(disc, SphereTarget(), 1 / 8))
    bin_path, header_path = dump_solution(sol, str(tmp_path / "fields" / "disc"))
    data = np.fromfile(bin_path, dtype="<f8").reshape(sol.values.shape)
    assert np.array_equal(data, sol.values)
    header = open(header_path).read().splitlines()
    assert header[0] == "dimension 2"
    assert header[1] == "shape " + " ".join(str(n) for n in sol.raster.shape)


def test_discrete_maximum_principle(slit_domain):
    rd = rasterize(slit_domain, FunctionTarget(lambda p: np.sin(3 * p[:, 0]) + p[:, 1]), 1 / 32)
    sol = solve_dirichlet(rd, tol=1e-12)
    data = rd.boundary_data[~rd.interior]
    inside = sol.values[rd.interior]
    assert inside.min() >= data.min() - 1e-9
    assert inside.max() <= data.max() + 1e-9


def test_obstacles_only_count_inside_the_ball():
    dom = Domain(2, (SegmentObstacle((-1.5, 0.0), (-0.5, 0.0)),))
    rd = rasterize(dom, SphereTarget(), 1 / 16)
    centre = rd.shape[0] // 2
    assert rd.mask[0, centre] == NODE_OUTER
    assert rd.boundary_data[0, centre] == 1.0
    assert rd.mask[centre - 12, centre] == NODE_OBSTACLE


def test_coarse_start_reaches_the_same_solution(slit_domain):
    rough = solve_dirichlet(rasterize(slit_domain, SphereTarget(), 1 / 16), tol=1e-12)
    rd = rasterize(slit_domain, SphereTarget(), 1 / 32)
    cold = solve_dirichlet(rd, tol=1e-12)
    warm = solve_dirichlet(rd, tol=1e-12, initial=prolong(rough, rd))
    assert warm.sweeps <= cold.sweeps
    assert np.allclose(warm.values, cold.values, atol=1e-8)
