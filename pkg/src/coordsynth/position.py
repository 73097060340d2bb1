"""Deformed-position problem and rigid minimum-distance pose.

For one precision point the mechanism is treated as a set of elastic trusses:
given undeformed lengths ``L``, the deformed coordinates minimize
``sum_j (L_j - l_j(x))**2`` subject to linear restrictions (ground pivots held
at their initial coordinates, tracer nodes held at their targets, and optional
input-link directions).

Restrictions are eliminated rather than handled with multipliers: the flat
coordinate vector is written as ``x = offset + basis @ z`` with ``z`` the free
parameters, and Newton's method runs on ``z``.
"""
from __future__ import annotations

import copy
import functools
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve

from . import kernels
from .linalg import descent_step, factor, line_search
from .model import (CoordSet, Mechanism, PrecisionPoint, ProblemError,
                    SynthesisProblem, ZeroLengthError, length_floor)

logger = logging.getLogger(__name__)

INNER_TOL = 1e-10
INNER_MAX_ITER = 100
PENALTY_WEIGHTS = (1e2, 1e4, 1e6, 1e8)


class InnerSolveError(RuntimeError):
    def __init__(self, message: str, point: int | None = None, state=None):
        self.point = point
        self.state = state
        super().__init__(message if point is None else f"precision point {point}: {message}")


@dataclass(frozen=True)
class RayConstraint:
    """``-sin(angle) * (x_to - x_from) + cos(angle) * (y_to - y_from) = 0`` (node rows)."""

    frm: int
    to: int
    angle: float

    @property
    def coefficients(self) -> tuple[float, float]:
        return -np.sin(self.angle), np.cos(self.angle)


@dataclass(frozen=True)
class LinearRestrictions:
    """Coordinate pins (flat index -> value) and ray equations.

    ``tracked`` lists the pinned flat indices whose value is an initial
    coordinate (ground pivots): those move with the design variables.
    """

    n_nodes: int
    pins: dict[int, float] = field(default_factory=dict)
    tracked: frozenset[int] = frozenset()
    rays: tuple[RayConstraint, ...] = ()

    def __len__(self) -> int:
        return len(self.pins) + len(self.rays)

    def without_targets(self) -> "LinearRestrictions":
        """Keep ground pins and rays, drop tracer targets."""
        return LinearRestrictions(self.n_nodes, {i: v for i, v in self.pins.items() if i in self.tracked},
                                  self.tracked, self.rays)

    def parametrize(self) -> "Parametrization":
        n2 = 2 * self.n_nodes
        offset = np.zeros(n2)
        eliminated = {}  # flat index -> (kept flat index, slope, source rows)
        for idx, val in self.pins.items():
            offset[idx] = val
        for ray in self.rays:
            fx, fy, tx, ty = 2 * ray.frm, 2 * ray.frm + 1, 2 * ray.to, 2 * ray.to + 1
            if fx not in self.pins or fy not in self.pins:
                raise ProblemError(f"ray origin node row {ray.frm} is not pinned")
            if tx in self.pins or ty in self.pins or tx in eliminated or ty in eliminated:
                raise ProblemError(f"ray target node row {ray.to} is over-constrained")
            a, b = ray.coefficients
            if abs(b) >= abs(a):
                # y_to = y_from + t * (x_to - x_from)
                t = -a / b
                eliminated[ty] = (tx, t, fy, fx)
                offset[ty] = self.pins[fy] - t * self.pins[fx]
            else:
                # x_to = x_from + t * (y_to - y_from)
                t = -b / a
                eliminated[tx] = (ty, t, fx, fy)
                offset[tx] = self.pins[fx] - t * self.pins[fy]
        free = [i for i in range(n2) if i not in self.pins and i not in eliminated]
        basis = np.zeros((n2, len(free)))
        col_of = {}
        for c, i in enumerate(free):
            basis[i, c] = 1.0
            col_of[i] = c
        for dep, (kept, t, _, _) in eliminated.items():
            basis[dep, col_of[kept]] = t

        # d x_i / d x0 with z held constant
        tracking = np.zeros((n2, n2))
        for idx in self.tracked:
            tracking[idx, idx] = 1.0
        for dep, (_, t, same, cross) in eliminated.items():
            # offset = pin[same] - t * pin[cross]
            if same in self.tracked:
                tracking[dep, same] += 1.0
            if cross in self.tracked:
                tracking[dep, cross] -= t
        return Parametrization(offset, basis, np.array(free, dtype=int), tracking)


@dataclass(frozen=True)
class Parametrization:
    offset: np.ndarray
    basis: np.ndarray
    free: np.ndarray
    tracking: np.ndarray

    @property
    def size(self) -> int:
        return self.basis.shape[1]

    def coords(self, z: np.ndarray) -> np.ndarray:
        return self.offset + self.basis @ z

    def params(self, flat: np.ndarray) -> np.ndarray:
        """Free parameters reproducing ``flat`` on the free coordinates."""
        return np.asarray(flat, dtype=float)[self.free]


def build_restrictions(problem: SynthesisProblem, x0: CoordSet | np.ndarray,
                       point: PrecisionPoint) -> LinearRestrictions:
    mech = problem.mechanism
    xy = x0.xy if isinstance(x0, CoordSet) else np.asarray(x0, dtype=float).reshape(-1, 2)
    pins, tracked = {}, set()
    for i, node in enumerate(mech.nodes):
        if node.fixed:
            pins[2 * i], pins[2 * i + 1] = float(xy[i, 0]), float(xy[i, 1])
            tracked.update((2 * i, 2 * i + 1))
    for pin in point.pins:
        i = mech.index(pin.node)
        for idx, val in ((2 * i, pin.x), (2 * i + 1, pin.y)):
            if idx in pins and pins[idx] != val:
                raise ProblemError(f"precision point {point.index}: conflicting pins on node {pin.node}")
            pins[idx] = float(val)
    rays = []
    for ray in point.rays:
        if not mech.node(ray.frm).fixed:
            raise ProblemError(f"precision point {point.index}: ray origin {ray.frm} is not a fixed node")
        rays.append(RayConstraint(mech.index(ray.frm), mech.index(ray.to), float(ray.angle)))
    return LinearRestrictions(mech.n_nodes, pins, frozenset(tracked), tuple(rays))


@dataclass(frozen=True)
class DeformedState:
    xy: np.ndarray
    deformed_lengths: np.ndarray
    energy: float
    converged: bool
    iterations: int
    energy_history: tuple[float, ...] = ()
    gradient_norm: float = 0.0

    def coords(self, mechanism: Mechanism) -> CoordSet:
        return CoordSet.from_array(mechanism, self.xy)

    def length_map(self, mechanism: Mechanism) -> dict[int, float]:
        return {t.id: float(v) for t, v in zip(mechanism.trusses, self.deformed_lengths)}


@dataclass
class _NewtonResult:
    z: np.ndarray
    value: float
    grad_norm: float
    converged: bool
    iterations: int
    history: list


def _newton_step(H: np.ndarray, g: np.ndarray) -> np.ndarray:
    # on a well-conditioned positive-definite Hessian the curvature-corrected
    # step is the plain Newton step; Cholesky is much cheaper for tiny systems
    try:
        C = np.linalg.cholesky(H)
    except np.linalg.LinAlgError:
        C = None
    if C is not None:
        d = np.diag(C)
        if d.min() > 1e-5 * d.max():
            return -cho_solve((C, True), g)
    return descent_step(factor(H), g)


def _newton(fun, z0: np.ndarray, tol: float, max_iter: int) -> _NewtonResult:
    """Minimize ``fun(z, hessian) -> (value, grad, hess)`` from ``z0``.

    ``hessian`` is True for a full evaluation and None when only the value is
    needed (line-search probes).
    """
    z = np.array(z0, dtype=float)
    value, g, H = fun(z, True)
    history = [value]
    it = 0
    while True:
        gnorm = float(np.max(np.abs(g))) if g.size else 0.0
        if gnorm < tol * (1.0 + value):
            return _NewtonResult(z, value, gnorm, True, it, history)
        if it >= max_iter:
            return _NewtonResult(z, value, gnorm, False, it, history)
        p = _newton_step(H, g)
        slope = float(p @ g)
        if not slope < 0.0:
            return _NewtonResult(z, value, gnorm, False, it, history)

        def phi(alpha):
            try:
                return fun(z + alpha * p, None)[0]
            except ZeroLengthError:
                return np.inf

        ls = line_search(phi, value, slope)
        it += 1
        if not ls.decreased:
            # stalled at rounding level; a gradient this small is as converged as it gets
            return _NewtonResult(z, value, gnorm, gnorm < 1e3 * tol * (1.0 + value), it, history)
        z = z + ls.alpha * p
        value, g, H = fun(z, True)
        history.append(value)


@functools.lru_cache(maxsize=32)
def _indices(mechanism: Mechanism) -> kernels.InnerAssembly:
    return kernels.InnerAssembly(mechanism.endpoints(), mechanism.n_nodes)


def _assembly(mechanism: Mechanism, flat: np.ndarray) -> kernels.InnerAssembly:
    asm = copy.copy(_indices(mechanism))
    asm.floor = length_floor(flat)
    return asm


def _state(mechanism, xy, L, res: _NewtonResult) -> DeformedState:
    ends = mechanism.endpoints()
    xy = xy.reshape(-1, 2)
    l = np.linalg.norm(xy[ends[:, 0]] - xy[ends[:, 1]], axis=1)
    return DeformedState(xy.copy(), l, float(np.sum((L - l) ** 2)), res.converged, res.iterations,
                         tuple(res.history), res.grad_norm)


def solve_deformed_position(mechanism: Mechanism, L, restrictions: LinearRestrictions,
                            start: CoordSet | np.ndarray, tol: float = INNER_TOL,
                            max_iter: int = INNER_MAX_ITER) -> DeformedState:
    """Minimum-deformation-energy coordinates under ``restrictions``.

    Non-convergence is reported through ``converged``; a truss collapsing to
    zero length raises ZeroLengthError.
    """
    L = np.asarray(L, dtype=float)
    if np.any(L <= 0):
        raise ProblemError("undeformed lengths must be positive")
    par = restrictions.parametrize()
    start_flat = (start.xy if isinstance(start, CoordSet) else np.asarray(start, dtype=float)).reshape(-1)
    z0 = par.params(start_flat)
    B = par.basis
    asm = _assembly(mechanism, start_flat)

    def fun(z, hessian):
        xy = par.coords(z).reshape(-1, 2)
        if hessian is None:
            return asm.energy(L, xy), None, None
        e, g, H = asm.terms(L, xy, hessian)
        return e, B.T @ g, None if H is None else B.T @ H @ B

    res = _newton(fun, z0, tol, max_iter)
    return _state(mechanism, par.coords(res.z), L, res)


def minimum_distance_pose(mechanism: Mechanism, L, restrictions: LinearRestrictions, tracer: int,
                          target, start: CoordSet | np.ndarray, weights=PENALTY_WEIGHTS,
                          tol: float = INNER_TOL, max_iter: int = INNER_MAX_ITER):
    """Rigid pose that brings node ``tracer`` (an id) closest to ``target``.

    Penalty continuation on ``w * energy + |tracer - target|**2`` over the
    ascending ``weights``.  ``restrictions`` should not pin the tracer.
    Returns ``(DeformedState, distance)``; the state's ``converged`` flag
    reflects the last stage.
    """
    L = np.asarray(L, dtype=float)
    par = restrictions.parametrize()
    row = mechanism.index(tracer)
    target = np.asarray(target, dtype=float)
    start_flat = (start.xy if isinstance(start, CoordSet) else np.asarray(start, dtype=float)).reshape(-1)
    z = par.params(start_flat)
    B = par.basis
    sel = np.zeros(2 * mechanism.n_nodes)
    sel[[2 * row, 2 * row + 1]] = 1.0
    asm = _assembly(mechanism, start_flat)

    res = None
    for w in weights:
        def fun(z, hessian, w=w):
            # divided through by w so the gradient stays O(1) at large weights
            flat = par.coords(z)
            e, g, H = asm.terms(L, flat.reshape(-1, 2), bool(hessian))
            r = flat[2 * row:2 * row + 2] - target
            value = e + float(r @ r) / w
            gf = g.copy()
            gf[2 * row:2 * row + 2] += 2.0 * r / w
            if not hessian:
                return value, B.T @ gf, None
            return value, B.T @ gf, B.T @ (H + (2.0 / w) * np.diag(sel)) @ B

        res = _newton(fun, z, tol, max_iter)
        z = res.z
    flat = par.coords(z)
    state = _state(mechanism, flat, L, res)
    if not res.converged:
        logger.warning("minimum-distance pose did not converge for tracer %s", tracer)
    return state, float(np.linalg.norm(flat[2 * row:2 * row + 2] - target))


def configuration_signs(mechanism: Mechanism, xy: np.ndarray) -> np.ndarray:
    """Sign of the cross product for each pair of trusses sharing a node."""
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    ends = mechanism.endpoints()
    signs = []
    for a in range(len(ends)):
        for b in range(a + 1, len(ends)):
            shared = set(ends[a]) & set(ends[b])
            if len(shared) != 1:
                continue
            s = shared.pop()
            oa = ends[a][0] if ends[a][1] == s else ends[a][1]
            ob = ends[b][0] if ends[b][1] == s else ends[b][1]
            u, v = xy[oa] - xy[s], xy[ob] - xy[s]
            signs.append(np.sign(u[0] * v[1] - u[1] * v[0]))
    return np.array(signs)
