import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coordsynth.model import Mechanism, Node, Truss, ZeroLengthError, lengths, problem_from_dict
from coordsynth.position import (LinearRestrictions, RayConstraint, build_restrictions,
                                 configuration_signs, minimum_distance_pose, solve_deformed_position)
from coordsynth.synthesis import evaluate_fitness_coords

from conftest import FOURBAR_TARGETS

TRIANGLE = Mechanism((Node(0), Node(1), Node(2)), (Truss(0, 0, 1), Truss(1, 1, 2), Truss(2, 2, 0)))
BAR = Mechanism((Node(0, fixed=True), Node(1)), (Truss(0, 0, 1),))


def rigid(xy, theta, shift):
    c, s = math.cos(theta), math.sin(theta)
    return np.asarray(xy) @ np.array([[c, -s], [s, c]]).T + shift


def _ray_problem(angle):
    return problem_from_dict(dict(
        nodes=[dict(id=0, x=0.0, y=0.0, fixed=True), dict(id=1, x=1.0, y=0.2)],
        trusses=[dict(id=0, k=0, l=1)],
        precision_points=[dict(pins=[], rays=[{"from": 0, "to": 1, "angle": angle}])]))


class TestBuildRestrictions:
    def test_fourbar_point0(self, fourbar):
        r = build_restrictions(fourbar, fourbar.x0, fourbar.points[0])
        assert len(r) == 6
        assert r.pins[0] == -5.7114 and r.pins[1] == 2.5202  # A
        assert r.pins[6] == -2.0260 and r.pins[7] == -3.2762  # D
        assert (r.pins[8], r.pins[9]) == FOURBAR_TARGETS[0]  # E on its first target
        assert r.tracked == frozenset({0, 1, 6, 7})

    def test_empty(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            p = problem_from_dict(dict(nodes=[dict(id=0, x=0.0, y=0.0), dict(id=1, x=1.0, y=0.0)],
                                       trusses=[dict(id=0, k=0, l=1)], precision_points=[dict(pins=[])]))
        assert len(build_restrictions(p, p.x0, p.points[0])) == 0

    def test_horizontal_ray(self):
        p = _ray_problem(0.0)
        r = build_restrictions(p, p.x0, p.points[0])
        assert r.rays == (RayConstraint(0, 1, 0.0),)
        a, b = r.rays[0].coefficients
        assert a == 0.0 and b == 1.0  # y_B - y_A = 0
        par = r.parametrize()
        xy = par.coords(np.array([3.0])).reshape(-1, 2)
        np.testing.assert_array_equal(xy, [[0, 0], [3, 0]])

    @given(st.floats(-math.pi, math.pi))
    def test_ray_satisfied(self, angle):
        p = _ray_problem(angle)
        par = build_restrictions(p, p.x0, p.points[0]).parametrize()
        x, y = par.coords(np.array([0.7]))[2:]
        assert abs(-math.sin(angle) * x + math.cos(angle) * y) < 1e-12

    def test_ray_origin_must_be_pinned(self):
        r = LinearRestrictions(2, {}, frozenset(), (RayConstraint(0, 1, 0.3),))
        with pytest.raises(ValueError, match="not pinned"):
            r.parametrize()

    def test_without_targets(self, fourbar):
        r = build_restrictions(fourbar, fourbar.x0, fourbar.points[0]).without_targets()
        assert sorted(r.pins) == [0, 1, 6, 7]


class TestSolveDeformedPosition:
    def test_fully_pinned_bar(self):
        r = LinearRestrictions(2, {0: 0.0, 1: 0.0, 2: 2.0, 3: 0.0})
        st_ = solve_deformed_position(BAR, [1.0], r, np.array([[0.0, 0.0], [1.0, 0.0]]))
        assert st_.energy == 1.0 and st_.iterations == 0 and st_.converged
        np.testing.assert_array_equal(st_.xy, [[0, 0], [2, 0]])

    def test_fourbar_point_energies_sum(self, fourbar):
        F, states = evaluate_fitness_coords(fourbar, fourbar.x0)
        assert sum(s.energy for s in states) == F
        assert F == pytest.approx(17.2888, abs=0.01)
        assert F == pytest.approx(17.28926519, rel=1e-8)
        L = lengths(fourbar.mechanism, fourbar.x0)
        r = build_restrictions(fourbar, fourbar.x0, fourbar.points[0])
        s0 = solve_deformed_position(fourbar.mechanism, L, r, fourbar.x0)
        assert s0.energy == pytest.approx(states[0].energy, rel=1e-10)

    def test_congruent_triangle(self):
        tri = np.array([[0.0, 0.0], [3.0, 0.0], [1.0, 2.0]])
        L = lengths(TRIANGLE, tri)
        moved = rigid(tri, 0.7, [5.0, -1.0])
        r = LinearRestrictions(3, {i: float(v) for i, v in enumerate(moved.reshape(-1))})
        assert solve_deformed_position(TRIANGLE, L, r, tri).energy < 1e-24

    def test_pins_exact(self, fourbar):
        L = lengths(fourbar.mechanism, fourbar.x0)
        r = build_restrictions(fourbar, fourbar.x0, fourbar.points[4])
        s = solve_deformed_position(fourbar.mechanism, L, r, fourbar.x0)
        flat = s.xy.reshape(-1)
        for idx, val in r.pins.items():
            assert flat[idx] == val

    def test_energy_non_increasing(self, fourbar):
        L = lengths(fourbar.mechanism, fourbar.x0)
        for point in fourbar.points:
            r = build_restrictions(fourbar, fourbar.x0, point)
            s = solve_deformed_position(fourbar.mechanism, L, r, fourbar.x0)
            assert s.converged
            assert np.all(np.diff(s.energy_history) <= 0)
            # a rounding-level stall is accepted up to 1e3 * tol
            assert s.gradient_norm < 1e-7 * (1 + s.energy)

    def test_reachable_point(self):
        # free triangle vertex pinned to a spot the rigid triangle can reach
        tri = np.array([[0.0, 0.0], [3.0, 0.0], [1.0, 2.0]])
        L = lengths(TRIANGLE, tri)
        target = rigid(tri, 0.4, [0.0, 0.0])[2]
        r = LinearRestrictions(3, {0: 0.0, 1: 0.0, 4: float(target[0]), 5: float(target[1])})
        s = solve_deformed_position(TRIANGLE, L, r, tri)
        assert s.energy < 1e-12 * (1 + np.sum(L**2))

    def test_non_convergence_reported(self, fourbar):
        L = lengths(fourbar.mechanism, fourbar.x0)
        r = build_restrictions(fourbar, fourbar.x0, fourbar.points[8])
        s = solve_deformed_position(fourbar.mechanism, L, r, fourbar.x0, max_iter=1)
        assert not s.converged and s.iterations == 1

    def test_bad_lengths(self):
        with pytest.raises(ValueError):
            solve_deformed_position(BAR, [0.0], LinearRestrictions(2, {0: 0.0, 1: 0.0}), np.eye(2))

    def test_collapsed_start(self):
        r = LinearRestrictions(2, {0: 0.0, 1: 0.0})
        with pytest.raises(ZeroLengthError):
            solve_deformed_position(BAR, [1.0], r, np.zeros((2, 2)))

    @given(st.floats(-math.pi, math.pi), st.floats(-10, 10), st.floats(-10, 10))
    def test_rigid_motion_equivariance(self, theta, tx, ty):
        from coordsynth import bundled_problem
        p = bundled_problem("fourbar")
        L = lengths(p.mechanism, p.x0)
        r = build_restrictions(p, p.x0, p.points[3])
        base = solve_deformed_position(p.mechanism, L, r, p.x0)
        moved = rigid(p.x0.xy, theta, [tx, ty])
        pins = dict(r.pins)
        for node in range(5):
            if 2 * node in pins:
                pins[2 * node], pins[2 * node + 1] = map(float, rigid([[pins[2 * node], pins[2 * node + 1]]],
                                                                      theta, [tx, ty])[0])
        r2 = LinearRestrictions(5, pins, r.tracked)
        s2 = solve_deformed_position(p.mechanism, L, r2, moved)
        assert s2.energy == pytest.approx(base.energy, rel=1e-10)


class TestMinimumDistancePose:
    def test_closest_point_on_circle(self):
        r = LinearRestrictions(2, {0: 0.0, 1: 0.0}, frozenset({0, 1}))
        pose, d = minimum_distance_pose(BAR, [1.0], r, 1, (2.0, 0.0), np.array([[0.0, 0.0], [0.0, 1.0]]))
        assert d == pytest.approx(1.0, abs=1e-6)
        np.testing.assert_allclose(pose.xy[1], [1.0, 0.0], atol=1e-6)

    def test_reachable_target(self):
        r = LinearRestrictions(2, {0: 0.0, 1: 0.0}, frozenset({0, 1}))
        target = (math.cos(2.0), math.sin(2.0))
        _, d = minimum_distance_pose(BAR, [1.0], r, 1, target, np.array([[0.0, 0.0], [1.0, 0.0]]))
        assert d < 1e-4

    def test_rigid_lengths(self, fourbar):
        L = lengths(fourbar.mechanism, fourbar.x0)
        _, states = evaluate_fitness_coords(fourbar, fourbar.x0)
        for point, s in zip(fourbar.points, states):
            r = build_restrictions(fourbar, fourbar.x0, point).without_targets()
            pose, d = minimum_distance_pose(fourbar.mechanism, L, r, 4, FOURBAR_TARGETS[point.index], s.xy)
            assert pose.converged
            np.testing.assert_allclose(pose.deformed_lengths, L, rtol=1e-6)
            assert d == pytest.approx(np.hypot(*(pose.xy[4] - FOURBAR_TARGETS[point.index])), rel=1e-12)

    def test_matches_stiffer_reference(self, fourbar):
        L = lengths(fourbar.mechanism, fourbar.x0)
        _, states = evaluate_fitness_coords(fourbar, fourbar.x0)
        r = build_restrictions(fourbar, fourbar.x0, fourbar.points[5]).without_targets()
        pose, d = minimum_distance_pose(fourbar.mechanism, L, r, 4, FOURBAR_TARGETS[5], states[5].xy)
        ref, d_ref = minimum_distance_pose(fourbar.mechanism, L, r, 4, FOURBAR_TARGETS[5], pose.xy,
                                           weights=(1e10,))
        assert d == pytest.approx(d_ref, rel=1e-4)


def test_configuration_signs(fourbar):
    s = configuration_signs(fourbar.mechanism, fourbar.x0.xy)
    assert s.size > 0 and set(np.unique(s)) <= {-1.0, 1.0}
    mirrored = fourbar.x0.xy * [1.0, -1.0]
    np.testing.assert_array_equal(configuration_signs(fourbar.mechanism, mirrored), -s)
