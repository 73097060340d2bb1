"""Truss element energies, gradients and Hessians, and their assembly.

Every element quantity uses the local layout ``(x_k, y_k, x_l, y_l)``.  With
``delta = (x_k - x_l, y_k - y_l, x_l - x_k, y_l - y_k)`` the length gradient is
``delta / length`` and ``d(delta)/dx`` is the constant matrix ``DDELTA``.

Outer terms differentiate the synthesis fitness with respect to the initial
coordinates ``x0`` with the deformed lengths frozen.  Inner terms differentiate
the deformation energy of one precision point with respect to the deformed
coordinates.  Boundary terms account for ground pivots, whose deformed
coordinates are tied to their ``x0`` values; ``selector`` is the diagonal
``(f_k, f_k, f_l, f_l)`` marking which endpoints are fixed.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import Mechanism, ZeroLengthError, length_floor

DDELTA = np.array([
    [1.0, 0.0, -1.0, 0.0],
    [0.0, 1.0, 0.0, -1.0],
    [-1.0, 0.0, 1.0, 0.0],
    [0.0, -1.0, 0.0, 1.0],
])
DDELTA.setflags(write=False)

PINNED = -1


def delta(xk, xl) -> np.ndarray:
    """Return ``(x_k - x_l, y_k - y_l, x_l - x_k, y_l - y_k)``."""
    d = np.asarray(xk, dtype=float) - np.asarray(xl, dtype=float)
    return np.array([d[0], d[1], -d[0], -d[1]])


def _length(d: np.ndarray, truss_id=None) -> float:
    n = float(np.hypot(d[0], d[1]))
    if n == 0.0:
        raise ZeroLengthError(-1 if truss_id is None else truss_id)
    return n


def fixed_selector(fk: bool, fl: bool) -> np.ndarray:
    return np.diag([float(fk), float(fk), float(fl), float(fl)])


def outer_element_gradient(d0: np.ndarray, deformed_lengths: Sequence[float]) -> np.ndarray:
    """Gradient of ``sum_i (L(x0) - l_i)**2`` in x0 with the ``l_i`` frozen."""
    L = _length(d0)
    l = np.asarray(deformed_lengths, dtype=float)
    return 2.0 * (l.size - l.sum() / L) * d0


def outer_element_hessian(d0: np.ndarray, deformed_lengths: Sequence[float]) -> np.ndarray:
    L = _length(d0)
    l = np.asarray(deformed_lengths, dtype=float)
    return (2.0 * (l.size - l.sum() / L) * DDELTA
            + 2.0 * (l.sum() / L**3) * np.outer(d0, d0))


def inner_element_gradient(L: float, di: np.ndarray) -> np.ndarray:
    """Gradient of ``(L - l(x_i))**2`` with respect to the deformed coordinates."""
    l = _length(di)
    return 2.0 * (1.0 - L / l) * di


def inner_element_hessian(L: float, di: np.ndarray) -> np.ndarray:
    l = _length(di)
    return 2.0 * (1.0 - L / l) * DDELTA + 2.0 * (L / l**3) * np.outer(di, di)


def bc_element_gradient(selector: np.ndarray, d0: np.ndarray, di: np.ndarray) -> np.ndarray:
    """Ground-pivot coupling term of the outer gradient for one precision point."""
    L = _length(d0)
    l = _length(di)
    return 2.0 * (1.0 - L / l) * (selector @ di)


def bc_element_hessian_terms(selector: np.ndarray, d0: np.ndarray, di: np.ndarray):
    """Return the three ground-pivot Hessian contributions for one precision point.

    ``(h_outer_inner, h_inner_outer, h_inner_inner)``: the derivative of the
    outer gradient through the tied deformed coordinates, the derivative of the
    coupling gradient through x0 (including the tied part of ``delta_i``), and
    the derivative of the coupling gradient through the tied deformed
    coordinates.  The first two are transposes of each other, so the sum is
    symmetric.
    """
    L = _length(d0)
    l = _length(di)
    sdi = selector @ di
    h_oi = (-2.0 / (L * l)) * np.outer(d0, sdi)
    h_io = (-2.0 / (l * L)) * np.outer(sdi, d0) + 2.0 * (1.0 - L / l) * (selector @ DDELTA @ selector)
    h_ii = 2.0 * (L / l**3) * np.outer(sdi, sdi)
    return h_oi, h_io, h_ii


@dataclass(frozen=True)
class ElementDofs:
    """Global column of each local slot ``(x_k, y_k, x_l, y_l)``; ``PINNED`` drops a slot."""

    columns: tuple[int, int, int, int]

    @classmethod
    def for_truss(cls, k_row: int, l_row: int, column_of: np.ndarray) -> "ElementDofs":
        slots = (2 * k_row, 2 * k_row + 1, 2 * l_row, 2 * l_row + 1)
        return cls(tuple(int(column_of[s]) for s in slots))


def column_map(mask: np.ndarray) -> np.ndarray:
    """Map each flat coordinate to its design column, ``PINNED`` where masked out."""
    cols = np.full(mask.size, PINNED, dtype=int)
    cols[mask] = np.arange(int(mask.sum()))
    return cols


def element_dofs(mechanism: Mechanism, mask: np.ndarray) -> list[ElementDofs]:
    cols = column_map(mask)
    return [ElementDofs.for_truss(k, l, cols) for k, l in mechanism.endpoints()]


def assemble(gradients, hessians, dofs: Sequence[ElementDofs], size: int):
    """Scatter-add element gradients and Hessians into global arrays.

    ``hessians`` may be None to assemble the gradient only.
    """
    g = np.zeros(size)
    H = None if hessians is None else np.zeros((size, size))
    for e, dof in enumerate(dofs):
        cols = np.asarray(dof.columns)
        if np.any(cols >= size) or np.any(cols < PINNED):
            raise IndexError(f"element {e} maps outside a {size}-dof system: {dof.columns}")
        keep = np.flatnonzero(cols != PINNED)
        if keep.size == 0:
            continue
        idx = cols[keep]
        np.add.at(g, idx, np.asarray(gradients[e])[keep])
        if H is not None:
            H[np.ix_(idx, idx)] += np.asarray(hessians[e])[np.ix_(keep, keep)]
    if H is not None:
        H = 0.5 * (H + H.T)
    return g, H


# -- vectorised forms used by the solvers ----------------------------------

def deltas(xy: np.ndarray, ends: np.ndarray) -> np.ndarray:
    """``(B, 4)`` array of element deltas for coordinates ``xy``."""
    d = xy[ends[:, 0]] - xy[ends[:, 1]]
    return np.hstack([d, -d])


def check_lengths(l: np.ndarray, xy: np.ndarray, mechanism: Mechanism | None = None):
    floor = length_floor(xy)
    bad = np.flatnonzero(l < floor)
    if bad.size:
        tid = mechanism.trusses[bad[0]].id if mechanism is not None else int(bad[0])
        raise ZeroLengthError(tid, f"truss {tid} collapsed to zero length")


class InnerAssembly:
    """Precomputed scatter indices for the deformation energy of one mechanism."""

    def __init__(self, ends: np.ndarray, n_nodes: int):
        self.ends = np.asarray(ends, dtype=int)
        self.n = n_nodes
        k, l = self.ends[:, 0], self.ends[:, 1]
        self.slots = np.stack([2 * k, 2 * k + 1, 2 * l, 2 * l + 1], axis=1)
        self.flat_slots = self.slots.reshape(-1)
        self.rows = np.repeat(self.slots, 4, axis=1).reshape(-1)
        self.cols = np.tile(self.slots, (1, 4)).reshape(-1)
        self.floor = 0.0

    def energy(self, L: np.ndarray, xy: np.ndarray) -> float:
        d = xy[self.ends[:, 0]] - xy[self.ends[:, 1]]
        l = np.hypot(d[:, 0], d[:, 1])
        if l.min() < self.floor:
            check_lengths(l, xy)
        return float(np.dot(L - l, L - l))

    def terms(self, L: np.ndarray, xy: np.ndarray, hessian: bool = True):
        """Energy, flat gradient and dense Hessian of ``sum_j (L_j - l_j(xy))**2``."""
        d2 = xy[self.ends[:, 0]] - xy[self.ends[:, 1]]
        d = np.hstack([d2, -d2])
        l = np.hypot(d2[:, 0], d2[:, 1])
        if l.min() < max(self.floor, np.finfo(float).tiny):
            check_lengths(l, xy)
        energy = float(np.dot(L - l, L - l))
        coef = 2.0 * (1.0 - L / l)
        g = np.bincount(self.flat_slots, (coef[:, None] * d).reshape(-1), minlength=2 * self.n)
        if not hessian:
            return energy, g, None
        He = coef[:, None, None] * DDELTA + (2.0 * L / l**3)[:, None, None] * (d[:, :, None] * d[:, None, :])
        n2 = 2 * self.n
        H = np.bincount(self.rows * n2 + self.cols, He.reshape(-1), minlength=n2 * n2).reshape(n2, n2)
        return energy, g, 0.5 * (H + H.T)


def inner_energy_terms(L: np.ndarray, xy: np.ndarray, ends: np.ndarray, hessian: bool = True):
    """Energy, flat gradient and dense Hessian of ``sum_j (L_j - l_j(xy))**2``."""
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    asm = InnerAssembly(ends, xy.shape[0])
    asm.floor = length_floor(xy)
    return asm.terms(np.asarray(L, dtype=float), xy, hessian)
