"""Outer synthesis loops.

Two formulations share the inner solver:

* coordinates: the design vector is the initial coordinates ``x0`` (ground
  pivots included unless pinned); the undeformed lengths follow from ``x0``
  and the assembly configuration is part of the search.
* dimensions: the design vector is the truss lengths; ``x0`` only supplies
  the assembly used to start the inner solves.

The fitness is the summed minimum deformation energy over all precision
points.  Derivatives are uncoupled: deformed states are frozen while the
gradient and Hessian are built.  The gradient is exact regardless (the inner
states are stationary); the Hessian is an approximation.
"""
from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .linalg import descent_step, factor, line_search
from .model import CoordSet, ProblemError, SynthesisProblem, ZeroLengthError, lengths
from .position import (INNER_MAX_ITER, INNER_TOL, DeformedState, InnerSolveError,
                       build_restrictions, configuration_signs, solve_deformed_position)

logger = logging.getLogger(__name__)

GTOL = 1e-9
FTOL = 1e-14
STALL_WINDOW = 3
MAX_ITER = 200

TERMINATIONS = ("converged", "no-decrease", "max-iter")


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    fitness: float
    gradient_norm: float
    step_norm: float
    accepted: bool
    wall_time: float
    config_changes: int = 0


@dataclass
class FitnessTrace:
    records: list[TraceRecord] = field(default_factory=list)

    def append(self, record: TraceRecord):
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def accepted(self) -> list[TraceRecord]:
        return [r for r in self.records if r.accepted]

    def fitness(self) -> np.ndarray:
        return np.array([r.fitness for r in self.accepted()])

    def is_strictly_decreasing(self) -> bool:
        f = self.fitness()
        return bool(np.all(np.diff(f) < 0))

    COLUMNS = ("iteration", "fitness", "gradient_norm", "step_norm", "accepted", "config_changes")

    def to_csv(self) -> str:
        # wall time is left out so identical runs give identical files
        lines = [",".join(self.COLUMNS)]
        for r in self.records:
            lines.append(f"{r.iteration},{r.fitness:.9g},{r.gradient_norm:.9g},{r.step_norm:.9g},"
                         f"{int(r.accepted)},{r.config_changes}")
        return "\n".join(lines) + "\n"


@dataclass
class SynthesisResult:
    formulation: str
    fitness: float
    trace: FitnessTrace
    states: list[DeformedState]
    termination: str
    x0: CoordSet | None = None
    dimensions: np.ndarray | None = None
    assembly: CoordSet | None = None

    @property
    def iterations(self) -> int:
        return sum(1 for r in self.trace.records[1:] if r.accepted)

    @property
    def initial_fitness(self) -> float:
        return self.trace.records[0].fitness

    def reevaluate(self, problem: SynthesisProblem) -> float:
        """Fitness recomputed from the stored final variables."""
        if self.formulation == "coordinates":
            f, _ = evaluate_fitness_coords(problem, self.x0, self.states)
        else:
            f, _ = evaluate_fitness_dims(problem, self.dimensions, self.assembly, self.states)
        return f


# -- fitness ---------------------------------------------------------------

def _xy(x0) -> np.ndarray:
    return (x0.xy if isinstance(x0, CoordSet) else np.asarray(x0, dtype=float)).reshape(-1, 2)


def _solve_points(problem, L, ref_xy, warm, tol, max_iter, strict):
    states = []
    start = ref_xy
    for i, point in enumerate(problem.points):
        restr = build_restrictions(problem, ref_xy, point)
        if warm is not None:
            start = warm[i].xy
        st = solve_deformed_position(problem.mechanism, L, restr, start, tol, max_iter)
        if strict and not st.converged:
            raise InnerSolveError(f"deformed-position solve did not converge "
                                  f"(gradient {st.gradient_norm:.3g})", point.index, st)
        states.append(st)
        start = st.xy
    return float(sum(s.energy for s in states)), states


def evaluate_fitness_coords(problem: SynthesisProblem, x0, warm=None, tol: float = INNER_TOL,
                            max_iter: int = INNER_MAX_ITER, strict: bool = True):
    """Fitness of initial coordinates ``x0``; returns ``(F, states)``.

    ``warm`` is an optional list of states to start each inner solve from.
    Without it the first point starts from ``x0`` and every following point
    from the solution of the one before, so the solves follow the path.
    """
    xy = _xy(x0)
    L = lengths(problem.mechanism, xy)
    return _solve_points(problem, L, xy, warm, tol, max_iter, strict)


def evaluate_fitness_dims(problem: SynthesisProblem, L, assembly_ref=None, warm=None,
                          tol: float = INNER_TOL, max_iter: int = INNER_MAX_ITER, strict: bool = True):
    L = np.asarray(L, dtype=float)
    if L.shape != (problem.mechanism.n_trusses,) or np.any(L <= 0):
        raise ProblemError("dimensions must be one positive length per truss")
    xy = _xy(problem.x0 if assembly_ref is None else assembly_ref)
    return _solve_points(problem, L, xy, warm, tol, max_iter, strict)


# -- derivatives (coordinate formulation) ----------------------------------

def _coordinate_terms(problem: SynthesisProblem, x0, states, hessian: bool):
    mech = problem.mechanism
    xy = _xy(x0)
    ends = mech.endpoints()
    fixed = mech.fixed_mask()
    mask = problem.design_mask()
    dofs = kernels.element_dofs(mech, mask)
    d0s = kernels.deltas(xy, ends)
    dis = [kernels.deltas(s.xy, ends) for s in states]
    lij = np.array([s.deformed_lengths for s in states])  # (P, B)

    grads, hess = [], []
    for j, (k, l) in enumerate(ends):
        d0 = d0s[j]
        g = kernels.outer_element_gradient(d0, lij[:, j])
        H = kernels.outer_element_hessian(d0, lij[:, j]) if hessian else None
        if fixed[k] or fixed[l]:
            sel = kernels.fixed_selector(fixed[k], fixed[l])
            for di in (d[j] for d in dis):
                g = g + kernels.bc_element_gradient(sel, d0, di)
                if hessian:
                    h_oi, h_io, h_ii = kernels.bc_element_hessian_terms(sel, d0, di)
                    H = H + h_oi + h_io + h_ii
        grads.append(g)
        hess.append(H)
    g, H = kernels.assemble(grads, hess if hessian else None, dofs, int(mask.sum()))

    # input-link rays tie the eliminated coordinate to the ground pivot as well
    L = np.linalg.norm(d0s[:, :2], axis=1)
    extra = np.zeros(2 * mech.n_nodes)
    for point, st in zip(problem.points, states):
        if not point.rays:
            continue
        par = build_restrictions(problem, xy, point).parametrize()
        T = par.tracking.copy()
        T[np.diag_indices_from(T)] = 0.0
        _, gi, _ = kernels.inner_energy_terms(L, st.xy, ends, hessian=False)
        extra += T.T @ gi
    return g + extra[mask], H


def synthesis_gradient_coords(problem: SynthesisProblem, x0, states) -> np.ndarray:
    return _coordinate_terms(problem, x0, states, hessian=False)[0]


def synthesis_hessian_coords(problem: SynthesisProblem, x0, states) -> np.ndarray:
    return _coordinate_terms(problem, x0, states, hessian=True)[1]


def dim_gradient(L, states) -> np.ndarray:
    L = np.asarray(L, dtype=float)
    lij = np.array([s.deformed_lengths for s in states])
    return 2.0 * np.sum(L[None, :] - lij, axis=0)


def dim_hessian(L, states) -> np.ndarray:
    return 2.0 * len(states) * np.eye(np.asarray(L).size)


# -- outer loop ------------------------------------------------------------

def _settings(problem, max_iter, gtol):
    opts = problem.options
    if max_iter is None:
        max_iter = opts.max_iterations or MAX_ITER
    if gtol is None:
        gtol = opts.tolerances.get("gtol", GTOL)
    inner_tol = opts.tolerances.get("inner_tol", INNER_TOL)
    ftol = opts.tolerances.get("ftol", FTOL)
    return int(max_iter), float(gtol), float(inner_tol), float(ftol)


def _sqp(x, evaluate, derivatives, max_iter, gtol, ftol, signs=None, callback=None):
    """Shared outer loop; ``evaluate(x, warm) -> (F, states)`` raises on failure."""
    t0 = time.perf_counter()
    F, states = evaluate(x, None)
    trace = FitnessTrace()
    g, H = derivatives(x, states)
    prev_signs = signs(x) if signs else None
    trace.append(TraceRecord(0, F, float(np.max(np.abs(g))) if g.size else 0.0, 0.0, True,
                             time.perf_counter() - t0))
    history = [F]
    reason = "max-iter"
    for it in range(1, max_iter + 1):
        gnorm = float(np.max(np.abs(g))) if g.size else 0.0
        if gnorm < gtol * (1.0 + F):
            reason = "converged"
            break
        p = descent_step(factor(H), g)
        slope = float(p @ g)
        if not slope < 0.0:
            reason = "converged"
            break
        cache = {}

        def phi(alpha):
            try:
                val, st = evaluate(x + alpha * p, states)
            except (InnerSolveError, ZeroLengthError, ProblemError):
                return np.inf
            cache[alpha] = (val, st)
            return val

        ls = line_search(phi, F, slope)
        if not ls.decreased:
            trace.append(TraceRecord(it, F, gnorm, 0.0, False, time.perf_counter() - t0))
            reason = "no-decrease"
            break
        x = x + ls.alpha * p
        F, states = cache[ls.alpha]
        g, H = derivatives(x, states)
        changes = 0
        if signs is not None:
            cur = signs(x)
            changes = int(np.sum(cur != prev_signs))
            if changes:
                logger.info("iteration %d: %d element pairs changed orientation", it, changes)
            prev_signs = cur
        trace.append(TraceRecord(it, F, float(np.max(np.abs(g))) if g.size else 0.0,
                                 float(np.linalg.norm(ls.alpha * p)), True, time.perf_counter() - t0, changes))
        if callback is not None:
            callback(it, x, F)
        history.append(F)
        if len(history) > STALL_WINDOW:
            old = history[-1 - STALL_WINDOW]
            if old - F <= ftol * max(abs(F), np.finfo(float).tiny):
                reason = "converged"
                break
    return x, F, states, trace, reason


def optimize_coordinates(problem: SynthesisProblem, max_iter: int | None = None, gtol: float | None = None,
                         callback=None) -> SynthesisResult:
    """Minimize the fitness over the free initial coordinates."""
    max_iter, gtol, inner_tol, ftol = _settings(problem, max_iter, gtol)
    mask = problem.design_mask()
    base = problem.x0.flat()
    mech = problem.mechanism

    def full(v):
        flat = base.copy()
        flat[mask] = v
        return flat.reshape(-1, 2)

    def evaluate(v, warm):
        return evaluate_fitness_coords(problem, full(v), warm, inner_tol)

    def derivatives(v, states):
        return _coordinate_terms(problem, full(v), states, hessian=True)

    v, F, states, trace, reason = _sqp(base[mask], evaluate, derivatives, max_iter, gtol, ftol,
                                       signs=lambda v: configuration_signs(mech, full(v)),
                                       callback=callback)
    return SynthesisResult("coordinates", F, trace, states, reason,
                           x0=CoordSet.from_array(mech, full(v)), assembly=CoordSet.from_array(mech, full(v)))


def optimize_dimensions(problem: SynthesisProblem, max_iter: int | None = None, gtol: float | None = None,
                        callback=None) -> SynthesisResult:
    """Minimize the fitness over the truss lengths, using ``x0`` as the assembly."""
    if problem.options.optimize_fixed_nodes and problem.mechanism.fixed_ids():
        warnings.warn("the dimension formulation keeps fixed nodes at their initial positions", stacklevel=2)
    max_iter, gtol, inner_tol, ftol = _settings(problem, max_iter, gtol)
    assembly = problem.x0

    def evaluate(L, warm):
        if np.any(L <= 0):
            raise ProblemError("non-positive length")
        return evaluate_fitness_dims(problem, L, assembly, warm, inner_tol)

    def derivatives(L, states):
        return dim_gradient(L, states), dim_hessian(L, states)

    L0 = lengths(problem.mechanism, assembly)
    L, F, states, trace, reason = _sqp(L0, evaluate, derivatives, max_iter, gtol, ftol, callback=callback)
    return SynthesisResult("dimensions", F, trace, states, reason, dimensions=L, assembly=assembly)


def optimize(problem: SynthesisProblem, **kwargs) -> SynthesisResult:
    if problem.options.formulation == "dimensions":
        return optimize_dimensions(problem, **kwargs)
    return optimize_coordinates(problem, **kwargs)
