"""Finite-difference verification of the analytic derivatives."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .model import SynthesisProblem, bounding_diagonal
from .position import INNER_TOL
from .synthesis import (dim_gradient, evaluate_fitness_coords, evaluate_fitness_dims,
                        synthesis_gradient_coords)

FD_REL_STEP = 1e-6


def relative_error(a, b, floor: float = 0.0) -> float:
    """``max|a - b| / max(max|a|, max|b|, floor)``; zero when both vanish."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.size == 0:
        return 0.0
    scale = max(float(np.max(np.abs(a))), float(np.max(np.abs(b))), floor)
    diff = float(np.max(np.abs(a - b)))
    return 0.0 if diff == 0.0 else diff / max(scale, 1e-300)


def central_difference(fun, x, h):
    """Central-difference gradient of scalar ``fun`` at ``x`` with step ``h``."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fun(x + e) - fun(x - e)) / (2.0 * h)
    return g


def fd_jacobian(fun, x, h):
    """Central-difference Jacobian of vector ``fun``; column ``i`` is ``d fun / d x_i``."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((np.asarray(fun(x + e)) - np.asarray(fun(x - e))) / (2.0 * h))
    return np.column_stack(cols) if cols else np.zeros((0, 0))


@dataclass(frozen=True)
class GradientCheck:
    analytic: np.ndarray
    numeric: np.ndarray
    error: float


def check_coordinate_gradient(problem: SynthesisProblem, xy=None, rel_step: float = FD_REL_STEP,
                              inner_tol: float = INNER_TOL) -> GradientCheck:
    """Analytic fitness gradient at ``xy`` against central differences.

    Every probe re-solves the inner problems, warm-started from the states at
    ``xy``.
    """
    xy = problem.x0.xy if xy is None else np.asarray(xy, dtype=float).reshape(-1, 2)
    mask = problem.design_mask()
    base = xy.reshape(-1)
    _, states = evaluate_fitness_coords(problem, xy, tol=inner_tol)
    g = synthesis_gradient_coords(problem, xy, states)
    h = rel_step * max(bounding_diagonal(xy), 1.0)

    def F(v):
        flat = base.copy()
        flat[mask] = v
        return evaluate_fitness_coords(problem, flat.reshape(-1, 2), states, tol=inner_tol)[0]

    num = central_difference(F, base[mask], h)
    return GradientCheck(g, num, relative_error(g, num))


def check_dimension_gradient(problem: SynthesisProblem, L, rel_step: float = FD_REL_STEP,
                             inner_tol: float = INNER_TOL) -> GradientCheck:
    L = np.asarray(L, dtype=float)
    _, states = evaluate_fitness_dims(problem, L, problem.x0, tol=inner_tol)
    g = dim_gradient(L, states)
    h = rel_step * max(float(L.max()), 1.0)
    num = central_difference(lambda v: evaluate_fitness_dims(problem, v, problem.x0, states,
                                                             tol=inner_tol)[0], L, h)
    return GradientCheck(g, num, relative_error(g, num))


# -- element level -----------------------------------------------------------

def random_element(rng: np.random.Generator, P: int = 3):
    """Random element geometry: ``(x0, [x_i], selector)`` in the local layout.

    Fixed endpoints of the deformed deltas coincide with their ``x0``
    positions, as they do in a solved problem.
    """
    x0 = rng.uniform(-2.0, 2.0, 4)
    while np.hypot(x0[0] - x0[2], x0[1] - x0[3]) < 0.2:
        x0 = rng.uniform(-2.0, 2.0, 4)
    fk, fl = bool(rng.integers(2)), bool(rng.integers(2))
    xis = []
    for _ in range(P):
        xi = x0 + rng.uniform(-1.0, 1.0, 4)
        if fk:
            xi[:2] = x0[:2]
        if fl:
            xi[2:] = x0[2:]
        while np.hypot(xi[0] - xi[2], xi[1] - xi[3]) < 0.2:
            xi = xi + rng.uniform(-1.0, 1.0, 4) * np.array([not fk, not fk, not fl, not fl])
        xis.append(xi)
    return x0, xis, kernels.fixed_selector(fk, fl)


def _d(x):
    return kernels.delta(x[:2], x[2:])


def element_hessian_errors(rng: np.random.Generator, h: float = 1e-6):
    """Relative FD errors ``(outer, inner, boundary)`` of the element Hessians on one random element.

    The boundary check differentiates the outer plus coupling gradient of one
    precision point with the fixed coordinates of ``x_i`` tracking ``x0`` and
    the rest of ``x_i`` frozen.
    """
    x0, xis, sel = random_element(rng)
    xi = xis[0]
    lij = [np.linalg.norm(_d(x)[:2]) for x in xis]

    H = kernels.outer_element_hessian(_d(x0), lij)
    num = fd_jacobian(lambda x: kernels.outer_element_gradient(_d(x), lij), x0, h)
    e_outer = relative_error(H, num)

    L = float(rng.uniform(0.3, 3.0))
    H = kernels.inner_element_hessian(L, _d(xi))
    num = fd_jacobian(lambda x: kernels.inner_element_gradient(L, _d(x)), xi, h)
    e_inner = relative_error(H, num)

    s = np.diag(sel)
    li = np.linalg.norm(_d(xi)[:2])

    def total_grad(x):
        xt = np.where(s > 0, x, xi)
        return (kernels.outer_element_gradient(_d(x), [np.linalg.norm(_d(xt)[:2])])
                + kernels.bc_element_gradient(sel, _d(x), _d(xt)))

    h_oi, h_io, h_ii = kernels.bc_element_hessian_terms(sel, _d(x0), _d(xi))
    terms = (kernels.outer_element_hessian(_d(x0), [li]), h_oi, h_io, h_ii)
    H = sum(terms)
    num = fd_jacobian(total_grad, x0, h)
    # with both ends fixed the terms cancel exactly; measure against their size
    e_bc = relative_error(H, num, floor=max(float(np.max(np.abs(t))) for t in terms))
    return e_outer, e_inner, e_bc
