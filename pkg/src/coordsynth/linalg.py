"""Symmetric indefinite factorization, curvature-corrected steps and line search.

``factor`` computes ``H[perm][:, perm] = L @ D @ L.T`` with complete pivoting:
at every stage the largest diagonal entry of the remaining block is used as a
1x1 pivot unless it is smaller than ``ALPHA`` times the largest off-diagonal
entry, in which case the 2x2 block holding that entry is used.  Stages with a
pivot below ``RANK_RTOL`` times the largest pivot end the factorization; the
remaining block is treated as zero curvature.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import solve_triangular

ALPHA = 0.64
RANK_RTOL = 1e-10
SYMMETRY_RTOL = 1e-10


class NotSymmetricError(ValueError):
    pass


@dataclass(frozen=True)
class IndefiniteFactorization:
    perm: np.ndarray
    L: np.ndarray
    D: np.ndarray
    blocks: tuple[tuple[int, int], ...]  # (start, size) of each nonzero pivot block
    inertia: tuple[int, int, int]  # (positive, negative, zero)

    @property
    def n(self) -> int:
        return self.perm.size

    @property
    def rank(self) -> int:
        return self.n - self.inertia[2]

    def reconstruct(self) -> np.ndarray:
        inv = np.argsort(self.perm)
        M = self.L @ self.D @ self.L.T
        return M[np.ix_(inv, inv)]

    def null_columns(self) -> np.ndarray:
        """Indices (in factored order) of the zero-curvature pivots."""
        used = np.zeros(self.n, dtype=bool)
        for s, m in self.blocks:
            used[s:s + m] = True
        return np.flatnonzero(~used)


def _swap(A, L, perm, i, j, k):
    if i == j:
        return
    A[[i, j], :] = A[[j, i], :]
    A[:, [i, j]] = A[:, [j, i]]
    L[[i, j], :k] = L[[j, i], :k]
    perm[[i, j]] = perm[[j, i]]


def factor(H, alpha: float = ALPHA, rank_rtol: float = RANK_RTOL) -> IndefiniteFactorization:
    """Factor a symmetric (possibly indefinite or singular) matrix."""
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {H.shape}")
    n = H.shape[0]
    scale = float(np.max(np.abs(H))) if n else 0.0
    if n and np.max(np.abs(H - H.T)) > SYMMETRY_RTOL * max(scale, 1e-300):
        raise NotSymmetricError("matrix is not symmetric")

    A = 0.5 * (H + H.T)
    L = np.eye(n)
    D = np.zeros((n, n))
    perm = np.arange(n)
    blocks = []
    biggest = 0.0
    k = 0
    while k < n:
        S = np.abs(A[k:, k:])
        diag = np.diag(S).copy()
        i1 = int(np.argmax(diag))
        mu1 = diag[i1]
        mu0, r, c = 0.0, 0, 0
        if n - k > 1:
            off = S.copy()
            np.fill_diagonal(off, -1.0)
            flat = int(np.argmax(off))
            r, c = divmod(flat, n - k)
            mu0 = off[r, c]
        if biggest == 0.0:
            biggest = max(mu1, mu0)
        if max(mu1, mu0) <= rank_rtol * biggest or biggest == 0.0:
            break

        if mu1 >= alpha * mu0:
            _swap(A, L, perm, k, k + i1, k)
            d = A[k, k]
            col = A[k + 1:, k].copy()
            lk = col / d
            A[k + 1:, k + 1:] -= np.outer(lk, col)
            L[k + 1:, k] = lk
            D[k, k] = d
            blocks.append((k, 1))
            biggest = max(biggest, abs(d))
            A[k + 1:, k] = 0.0
            A[k, k + 1:] = 0.0
            k += 1
        else:
            p, q = k + min(r, c), k + max(r, c)
            _swap(A, L, perm, k, p, k)
            _swap(A, L, perm, k + 1, q, k)
            Dk = A[k:k + 2, k:k + 2].copy()
            W = A[k + 2:, k:k + 2].copy()
            Lb = np.linalg.solve(Dk, W.T).T
            A[k + 2:, k + 2:] -= Lb @ W.T
            L[k + 2:, k:k + 2] = Lb
            D[k:k + 2, k:k + 2] = Dk
            blocks.append((k, 2))
            biggest = max(biggest, float(np.max(np.abs(Dk))))
            A[k + 2:, k:k + 2] = 0.0
            A[k:k + 2, k + 2:] = 0.0
            k += 2

    npos = nneg = 0
    for s, m in blocks:
        ev = np.array([D[s, s]]) if m == 1 else np.linalg.eigvalsh(D[s:s + 2, s:s + 2])
        npos += int(np.sum(ev > 0))
        nneg += int(np.sum(ev < 0))
    nzero = n - npos - nneg
    return IndefiniteFactorization(perm, L, D, tuple(blocks), (npos, nneg, nzero))


def null_space(fact: IndefiniteFactorization) -> np.ndarray:
    """Basis (columns) of the zero-curvature subspace of the factored matrix."""
    cols = fact.null_columns()
    n = fact.n
    if cols.size == 0:
        return np.zeros((n, 0))
    E = np.zeros((n, cols.size))
    E[cols, np.arange(cols.size)] = 1.0
    Y = solve_triangular(fact.L.T, E, lower=False, unit_diagonal=True)
    N = np.empty_like(Y)
    N[fact.perm] = Y
    return N


def _projector(N: np.ndarray):
    if N.shape[1] == 0:
        return lambda v: np.zeros_like(v)
    Q, _ = np.linalg.qr(N)
    return lambda v: Q @ (Q.T @ v)


def descent_step(fact: IndefiniteFactorization, g) -> np.ndarray:
    """Curvature-corrected Newton step for gradient ``g``.

    In the block-diagonal system each direction of positive curvature takes its
    Newton value, each direction of negative curvature takes the Newton value
    with its sign reversed, and zero-curvature directions move along ``-g``
    projected onto the null space.  The result is the minimum-norm solution
    when the system is consistent and always satisfies ``p @ g < 0`` for a
    nonzero ``g``.
    """
    g = np.asarray(g, dtype=float)
    if g.shape != (fact.n,):
        raise ValueError(f"gradient of shape {g.shape} for a {fact.n}x{fact.n} factorization")
    h = solve_triangular(fact.L, g[fact.perm], lower=True, unit_diagonal=True)
    y = np.zeros_like(h)
    for s, m in fact.blocks:
        if m == 1:
            y[s] = -h[s] / abs(fact.D[s, s])
        else:
            lam, Q = np.linalg.eigh(fact.D[s:s + 2, s:s + 2])
            hq = Q.T @ h[s:s + 2]
            y[s:s + 2] = Q @ (-hq / np.abs(lam))
    x = solve_triangular(fact.L.T, y, lower=False, unit_diagonal=True)
    p_range = np.empty_like(x)
    p_range[fact.perm] = x

    project = _projector(null_space(fact))
    g_null = project(g)
    p = p_range - project(p_range) - g_null
    if not p @ g < 0.0:
        # projecting out the null component of p_range can only hurt when g has
        # a null-space part; the unprojected step is a guaranteed descent
        p = p_range - g_null
    return p


@dataclass(frozen=True)
class LineSearchResult:
    alpha: float
    value: float
    evaluations: int
    decreased: bool


def _parabola_min(a0, f0, a1, f1, a2, f2):
    """Abscissa of the vertex of the parabola through three points, or None."""
    den = (a1 - a0) * (f1 - f2) - (a1 - a2) * (f1 - f0)
    if den == 0.0:
        return None
    num = (a1 - a0) ** 2 * (f1 - f2) - (a1 - a2) ** 2 * (f1 - f0)
    return a1 - 0.5 * num / den


def line_search(phi: Callable[[float], float], phi0: float, slope0: float,
                alpha0: float = 1.0, max_evals: int = 30, c1: float = 1e-4,
                shrink: float = 0.5, expand: float = 2.0) -> LineSearchResult:
    """One-dimensional minimization along a descent direction.

    Backtracking from ``alpha0`` until the sufficient-decrease test holds,
    then one quadratic-interpolation refinement.  When the accepted step shows
    no positive curvature to interpolate (the decrease beats the linear
    prediction), the step is expanded instead while ``phi`` keeps falling and
    the bracket is refined by a parabola.

    ``phi`` may return ``inf`` (or nan) for infeasible trial points.  Only
    strict decreases are accepted; on failure ``alpha = 0`` is returned with
    ``decreased = False``.
    """
    if slope0 > 0:
        raise ValueError(f"not a descent direction (slope {slope0})")
    evals = 0

    def call(a):
        nonlocal evals
        evals += 1
        v = phi(a)
        return v if np.isfinite(v) else np.inf

    alpha = alpha0
    best_alpha, best_val = 0.0, phi0
    while evals < max_evals:
        val = call(alpha)
        if val < best_val:
            best_alpha, best_val = alpha, val
        if val < phi0 and val <= phi0 + c1 * alpha * slope0:
            break
        alpha *= shrink
    if best_alpha == 0.0:
        return LineSearchResult(0.0, phi0, evals, False)

    a = best_alpha
    curv = best_val - phi0 - slope0 * a
    a_star = -slope0 * a * a / (2.0 * curv) if curv > 0 else np.inf
    if a_star < 4.0 * a:
        if evals < max_evals and abs(a_star - a) > 1e-3 * a:
            val = call(a_star)
            if val < best_val:
                best_alpha, best_val = a_star, val
        return LineSearchResult(best_alpha, best_val, evals, True)

    # expansion: (lo, best, hi) ends up bracketing a minimum or the budget runs out
    lo, f_lo = 0.0, phi0
    hi, f_hi = None, None
    while evals < max_evals:
        trial = expand * best_alpha
        val = call(trial)
        if val < best_val:
            lo, f_lo = best_alpha, best_val
            best_alpha, best_val = trial, val
        else:
            hi, f_hi = trial, val
            break
    if hi is not None and np.isfinite(f_hi) and evals < max_evals:
        vertex = _parabola_min(lo, f_lo, best_alpha, best_val, hi, f_hi)
        if vertex is not None and lo < vertex < hi and abs(vertex - best_alpha) > 1e-3 * best_alpha:
            val = call(vertex)
            if val < best_val:
                best_alpha, best_val = vertex, val
    return LineSearchResult(best_alpha, best_val, evals, True)
