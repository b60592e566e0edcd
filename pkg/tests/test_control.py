import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from carnot_sf.algebra import dilate, free_step_two, heisenberg, multiply
from carnot_sf.control import (
    ControlSignal,
    average,
    blowdown_samples,
    develop,
    dilate_control,
    dilated_curve,
    endpoint,
    from_function,
    l2_distance,
    resample,
)

H1 = heisenberg(1)


def test_develop_matches_sequential_products():
    A = free_step_two(3)
    rng = np.random.default_rng(0)
    u = ControlSignal(0.1, rng.standard_normal((50, 3)))
    start = A.point(rng.standard_normal(3), rng.standard_normal(3))
    traj = develop(A, start, u)
    g = start
    for k in range(u.count):
        g = multiply(A, g, A.point(u.dt * u.samples[k]))
        assert_allclose(traj.point(k + 1).as_array(), g.as_array(), atol=1e-12)
    assert traj.end.allclose(endpoint(A, start, u), atol=0)


def test_circle_closes_with_polygon_area():
    # n unit-speed chords of length dt close into a regular n-gon whose signed
    # area n dt^2 / (4 tan(pi/n)) is exactly the developed vertical coordinate
    n = 1000
    dt = 2 * np.pi / n
    u = from_function(lambda t: np.column_stack([np.cos(t), np.sin(t)]), 2 * np.pi, dt)
    end = develop(H1, H1.identity(), u).end
    assert_allclose(end.x, [0.0, 0.0], atol=1e-12)
    assert_allclose(end.z[0], n * dt**2 / (4 * np.tan(np.pi / n)), rtol=1e-12)
    assert abs(end.z[0] - np.pi) < 2 * dt**2


def test_straight_line_has_no_vertical_part():
    u = ControlSignal(0.5, np.tile([0.6, 0.8], (40, 1)))
    traj = develop(H1, H1.identity(), u)
    assert_allclose(traj.end.x, [12.0, 16.0])
    assert abs(traj.end.z[0]) < 1e-12


def test_dilated_controls_trace_dilated_curves():
    A = free_step_two(3)
    rng = np.random.default_rng(1)
    u = ControlSignal(0.02, rng.standard_normal((300, 3)))
    start = A.point(rng.standard_normal(3), rng.standard_normal(3))
    gamma = develop(A, start, u)
    for lam in (0.25, 3.0, 16.0):
        v = dilate_control(u, lam)
        assert v.dt == u.dt / lam and v.T == pytest.approx(u.T / lam)
        curve = dilated_curve(A, start, u, lam)
        for k in range(0, 301, 25):
            assert_allclose(curve.point(k).as_array(),
                            dilate(A, 1 / lam, gamma.point(k)).as_array(), atol=1e-12)
    with pytest.raises(ValueError):
        dilate_control(u, 0.0)


def test_average_is_exact():
    u = ControlSignal(1.0, [[1.0], [3.0], [-2.0]])
    assert_allclose(average(u, 0.5, 1.5), [2.0])
    assert_allclose(average(u, 0.0, 3.0), [2.0 / 3.0])
    assert_allclose(average(u, 2.25, 2.75), [-2.0])
    for window in ((1.0, 1.0), (2.0, 1.0), (-1.0, 1.0), (0.0, 3.5)):
        with pytest.raises(ValueError):
            average(u, *window)


@given(st.floats(0.0, 9.9), st.floats(0.01, 10.0))
@settings(max_examples=50)
def test_average_matches_fine_quadrature(t0, width):
    t1 = min(t0 + width, 10.0)
    if t1 <= t0:
        return
    rng = np.random.default_rng(3)
    u = ControlSignal(0.1, rng.standard_normal((100, 2)))
    fine = resample(u, 0.001)
    k0, k1 = int(round(t0 / 0.001)), int(round(t1 / 0.001))
    if k1 <= k0:
        return
    ref = fine.samples[k0:k1].mean(axis=0)
    assert_allclose(average(u, k0 * 0.001, k1 * 0.001), ref, atol=1e-9)


def test_blowdown_samples():
    u = ControlSignal(0.1, np.arange(100.0)[:, None])
    out = blowdown_samples(u, [1.0, 2.0, 5.0], 2.0)
    # u_lam on [0, 2] reads u on [0, 2 lam]
    assert [s.count for s in out] == [20, 40, 100]
    assert all(s.T == pytest.approx(2.0) for s in out)
    assert_allclose(out[1].samples[:, 0], np.arange(40.0))
    with pytest.raises(ValueError):
        blowdown_samples(u, [6.0], 2.0)


def test_l2_distance_is_exact_across_grids():
    u = ControlSignal(0.5, [[0.0], [1.0]])
    v = ControlSignal(1.0 / 3.0, [[1.0], [1.0], [1.0]])
    # |u - v|^2 is 1 on [0, 0.5) and 0 on [0.5, 1)
    assert l2_distance(u, v, 0.0, 1.0) == pytest.approx(np.sqrt(0.5))
    with pytest.raises(ValueError):
        l2_distance(u, v, 0.0, 2.0)


def test_control_validation():
    with pytest.raises(ValueError):
        ControlSignal(0.0, [[1.0]])
    with pytest.raises(ValueError):
        ControlSignal(0.1, [[np.inf]])
    with pytest.raises(ValueError):
        from_function(lambda t: t, 1.0, 0.3)
    with pytest.raises(ValueError):
        develop(H1, H1.identity(), ControlSignal(0.1, np.ones((3, 3))))


def test_unit_speed_and_length():
    from carnot_sf.norms import LInf

    u = from_function(lambda t: np.column_stack([np.ones_like(t), np.cos(t)]), 4 * np.pi, np.pi / 64)
    assert u.is_unit_speed(LInf(2))
    assert u.length(LInf(2)) == pytest.approx(4 * np.pi)


def test_csv_exports(tmp_path):
    u = ControlSignal(0.5, [[1.0, 2.0], [3.0, 4.0]])
    traj = develop(H1, H1.identity(), u)
    u.to_csv(tmp_path / "u.csv")
    traj.to_csv(tmp_path / "out" / "traj.csv")
    rows = list(csv.reader((tmp_path / "u.csv").open()))
    assert rows[0] == ["t", "u_1", "u_2"] and rows[2] == ["0.5", "3.0", "4.0"]
    rows = list(csv.reader((tmp_path / "out" / "traj.csv").open()))
    assert rows[0] == ["t", "x_1", "x_2", "z_1"] and len(rows) == 4
    assert float(rows[-1][3]) == traj.end.z[0]
