import math
import warnings
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coordsynth import bundled_problem
from coordsynth.checks import check_coordinate_gradient, check_dimension_gradient, fd_jacobian
from coordsynth.linalg import factor
from coordsynth.model import lengths, problem_from_dict
from coordsynth.synthesis import (FitnessTrace, TraceRecord, dim_gradient, dim_hessian, evaluate_fitness_coords,
                                  evaluate_fitness_dims, optimize, optimize_coordinates, optimize_dimensions,
                                  synthesis_gradient_coords, synthesis_hessian_coords)

from conftest import single_truss


def fake_states(lij):
    return [SimpleNamespace(deformed_lengths=np.atleast_1d(np.asarray(l, dtype=float))) for l in lij]


def rigid(xy, theta, shift):
    c, s = math.cos(theta), math.sin(theta)
    return np.asarray(xy) @ np.array([[c, -s], [s, c]]).T + shift


def moved_problem(problem, theta, shift):
    """Apply one rigid motion to x0, the pin targets and the ray angles."""
    from coordsynth.model import problem_to_dict
    doc = problem_to_dict(problem)
    for node in doc["nodes"]:
        node["x"], node["y"] = map(float, rigid([[node["x"], node["y"]]], theta, shift)[0])
    for point in doc["precision_points"]:
        for pin in point["pins"]:
            pin["x"], pin["y"] = map(float, rigid([[pin["x"], pin["y"]]], theta, shift)[0])
        for ray in point.get("rays", []):
            ray["angle"] = ray["angle"] + theta
    return problem_from_dict(doc)


@pytest.fixture(scope="module")
def circle3_result():
    p = bundled_problem("truss_circle3")
    return p, optimize(p)


class TestFitness:
    def test_fourbar_initial(self, fourbar):
        F, states = evaluate_fitness_coords(fourbar, fourbar.x0)
        assert F == pytest.approx(17.2888, abs=0.01)
        assert len(states) == 9 and all(s.converged for s in states)

    def test_reachable_by_rigid_motion(self):
        tri = np.array([[0.0, 0.0], [3.0, 0.0], [1.0, 2.0]])
        points = []
        for a in (0.3, 1.1, 2.0):
            xy = rigid(tri, a, [1.0, -0.5])
            points.append(dict(pins=[dict(node=n, x=float(xy[n, 0]), y=float(xy[n, 1])) for n in range(3)]))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            p = problem_from_dict(dict(nodes=[dict(id=i, x=float(x), y=float(y)) for i, (x, y) in enumerate(tri)],
                                       trusses=[dict(id=0, k=0, l=1), dict(id=1, k=1, l=2), dict(id=2, k=2, l=0)],
                                       precision_points=points))
        F, _ = evaluate_fitness_coords(p, p.x0)
        assert F < 1e-12

    def test_fully_pinned_truss(self):
        p = single_truss(points=[[(1, 2.0, 0.0)]])
        F, states = evaluate_fitness_coords(p, p.x0)
        assert F == 1.0 and states[0].iterations == 0

    def test_dims_equals_coords(self, fourbar):
        F, _ = evaluate_fitness_coords(fourbar, fourbar.x0)
        Fd, _ = evaluate_fitness_dims(fourbar, lengths(fourbar.mechanism, fourbar.x0), fourbar.x0)
        assert Fd == F

    def test_dims_rejects_bad_lengths(self, fourbar):
        from coordsynth.model import ProblemError
        with pytest.raises(ProblemError):
            evaluate_fitness_dims(fourbar, np.ones(3))
        with pytest.raises(ProblemError):
            evaluate_fitness_dims(fourbar, -np.ones(5))

    def test_dims_reachable_zero(self):
        p = single_truss(points=[[(1, 0.0, 1.0)], [(1, -1.0, 0.0)]])
        F, _ = evaluate_fitness_dims(p, [1.0])
        assert F < 1e-20

    def test_warm_start_matches(self, fourbar):
        F, states = evaluate_fitness_coords(fourbar, fourbar.x0)
        F2, _ = evaluate_fitness_coords(fourbar, fourbar.x0, warm=states)
        assert F2 == pytest.approx(F, rel=1e-10)

    @given(st.floats(-math.pi, math.pi), st.floats(-5, 5), st.floats(-5, 5))
    @settings(max_examples=10)
    def test_rigid_motion_invariance(self, theta, tx, ty):
        p = bundled_problem("fourbar")
        F, _ = evaluate_fitness_coords(p, p.x0)
        q = moved_problem(p, theta, [tx, ty])
        G, _ = evaluate_fitness_coords(q, q.x0)
        assert abs(G - F) <= 1e-10 * F


class TestCoordinateGradient:
    def test_stationary_at_exact_optimum(self, circle3_result):
        p, r = circle3_result
        g = synthesis_gradient_coords(p, r.x0, r.states)
        assert np.max(np.abs(g)) < 1e-8

    def test_fd_fourbar(self, fourbar, rng):
        xy = fourbar.x0.xy + 0.02 * rng.standard_normal((5, 2))
        assert check_coordinate_gradient(fourbar, xy).error < 1e-5

    def test_fd_butterfly(self, butterfly):
        assert check_coordinate_gradient(butterfly).error < 1e-5

    def test_chain_rule_with_pinned_fixed_nodes(self, fourbar_restricted):
        p = fourbar_restricted
        mech = p.mechanism
        F, states = evaluate_fitness_coords(p, p.x0)
        g = synthesis_gradient_coords(p, p.x0, states)
        xy = p.x0.xy
        L = lengths(mech, xy)
        J = np.zeros((mech.n_trusses, 2 * mech.n_nodes))
        for j, (k, l) in enumerate(mech.endpoints()):
            u = (xy[k] - xy[l]) / L[j]
            J[j, 2 * k:2 * k + 2] = u
            J[j, 2 * l:2 * l + 2] = -u
        oracle = (J.T @ dim_gradient(L, states))[p.design_mask()]
        assert np.max(np.abs(g - oracle)) <= 1e-8 * np.max(np.abs(oracle))


class TestCoordinateHessian:
    def test_single_free_truss_undeformed(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            p = single_truss(k=(0.3, -1.0), l=(2.0, 0.5), fixed=(False, False),
                             points=[[(0, 0.3, -1.0), (1, 2.0, 0.5)]])
            _, states = evaluate_fitness_coords(p, p.x0)
        H = synthesis_hessian_coords(p, p.x0, states)
        d = np.array([0.3 - 2.0, -1.0 - 0.5])
        M = 2.0 / (d @ d) * np.outer(d, d)
        np.testing.assert_allclose(H, np.block([[M, -M], [-M, M]]), atol=1e-14)

    def test_symmetric(self, fourbar, butterfly):
        for p in (fourbar, butterfly):
            _, states = evaluate_fitness_coords(p, p.x0)
            H = synthesis_hessian_coords(p, p.x0, states)
            assert np.max(np.abs(H - H.T)) <= 1e-12 * np.max(np.abs(H))

    def test_fourbar_shape(self, fourbar):
        _, states = evaluate_fitness_coords(fourbar, fourbar.x0)
        assert synthesis_hessian_coords(fourbar, fourbar.x0, states).shape == (10, 10)

    def test_rank_deficient_at_exact_optimum(self, circle3_result):
        # fitness stays zero while the free node turns about the ground pivot
        p, r = circle3_result
        H = synthesis_hessian_coords(p, r.x0, r.states)
        assert factor(H).inertia[2] >= 1
        mask = p.design_mask()
        base = r.x0.flat()

        def grad(v):
            flat = base.copy()
            flat[mask] = v
            xy = flat.reshape(-1, 2)
            _, states = evaluate_fitness_coords(p, xy, warm=r.states, tol=1e-13)
            return synthesis_gradient_coords(p, xy, states)

        H_fd = fd_jacobian(grad, base[mask], 1e-5)
        w = np.linalg.svd(0.5 * (H_fd + H_fd.T), compute_uv=False)
        assert np.sum(w < 1e-6 * w[0]) >= 1


class TestDimensions:
    def test_gradient_zero_when_undeformed(self):
        assert np.all(dim_gradient([1.0, 2.0], fake_states([[1.0, 2.0], [1.0, 2.0]])) == 0.0)

    def test_gradient_example(self):
        assert dim_gradient([1.0], fake_states([1.0, 2.0, 3.0]))[0] == -6.0

    def test_hessian_diagonal(self):
        np.testing.assert_array_equal(dim_hessian([1.0, 2.0], fake_states([[1, 1]] * 3)), 6.0 * np.eye(2))

    def test_gradient_fd(self, fourbar, rng):
        L = lengths(fourbar.mechanism, fourbar.x0) * (1 + 0.01 * rng.standard_normal(5))
        assert check_dimension_gradient(fourbar, L).error < 1e-5

    def test_unit_step_is_mean(self):
        L = np.array([5.0])
        states = fake_states([1.0, 2.0, 3.0])
        step = -np.linalg.solve(dim_hessian(L, states), dim_gradient(L, states))
        assert (L + step)[0] == 2.0

    def test_mean_length_optimum(self):
        # three pinned spans 1, 2, 3: the optimal length is their mean
        p = single_truss(points=[[(1, s, 0.0)] for s in (1.0, 2.0, 3.0)],
                         options=dict(formulation="dimensions", optimize_fixed_nodes=False))
        r = optimize(p)
        assert r.dimensions[0] == pytest.approx(2.0, abs=1e-12)
        assert r.fitness == pytest.approx(2.0, abs=1e-12)

    def test_warns_when_fixed_nodes_free(self, fourbar):
        with pytest.warns(UserWarning, match="fixed nodes"):
            optimize_dimensions(fourbar, max_iter=2)


class TestOptimize:
    def test_circle3(self, circle3_result):
        _, r = circle3_result
        assert r.fitness < 1e-20 and r.iterations <= 20
        np.testing.assert_allclose(r.x0.xy[0], [1.0, 2.0], atol=1e-8)

    def test_trace_strictly_decreasing(self, circle3_result, fourbar):
        _, r = circle3_result
        assert r.trace.is_strictly_decreasing()
        r2 = optimize_coordinates(fourbar, max_iter=15)
        assert r2.trace.is_strictly_decreasing()
        assert r2.termination == "max-iter" and r2.iterations == 15

    def test_reevaluate(self, fourbar):
        r = optimize_coordinates(fourbar, max_iter=10)
        assert r.reevaluate(fourbar) == pytest.approx(r.fitness, rel=1e-10)
        rd = optimize_dimensions(fourbar.with_options(optimize_fixed_nodes=False), max_iter=10)
        assert rd.reevaluate(fourbar) == pytest.approx(rd.fitness, rel=1e-10)

    def test_exactly_feasible_dims(self):
        p = single_truss(points=[[(1, 0.0, 1.5)], [(1, -1.5, 0.0)]],
                         options=dict(formulation="dimensions", optimize_fixed_nodes=False))
        r = optimize(p)
        assert r.fitness < 1e-12 and r.dimensions[0] == pytest.approx(1.5)

    def test_no_design_variables(self):
        p = single_truss(points=[[(1, 2.0, 0.0)]], options=dict(pinned=[dict(node=1, axis="x"),
                                                                         dict(node=1, axis="y")],
                                                                optimize_fixed_nodes=False))
        r = optimize(p)
        assert r.termination == "converged" and r.iterations == 0 and r.fitness == 1.0

    def test_deterministic(self, circle3_result):
        p, r = circle3_result
        assert optimize(p).trace.to_csv() == r.trace.to_csv()

    def test_callback(self):
        seen = []
        optimize(bundled_problem("truss_circle3"), callback=lambda it, x, F: seen.append((it, F)))
        assert [i for i, _ in seen] == list(range(1, len(seen) + 1))


class TestTrace:
    def test_csv(self):
        t = FitnessTrace()
        t.append(TraceRecord(0, 1.0 / 3.0, 2.0, 0.0, True, 0.5))
        t.append(TraceRecord(1, 0.25, 1.0, 0.1, False, 0.7))
        assert t.to_csv() == ("iteration,fitness,gradient_norm,step_norm,accepted,config_changes\n"
                              "0,0.333333333,2,0,1,0\n1,0.25,1,0.1,0,0\n")
        assert t.fitness().tolist() == [1.0 / 3.0]
        assert t.is_strictly_decreasing()
