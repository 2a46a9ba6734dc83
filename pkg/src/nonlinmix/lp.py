"""Small dense linear programs for the MVES row updates.

The row subproblems have few variables (r) and many inequality rows (2N), so
they are solved through their dual, a standard-form LP with only r equality
constraints.  The revised simplex method then works with an r x r basis.
Pivoting uses Dantzig's rule and switches to Bland's rule while pivots are
degenerate, which rules out cycling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError


class LPInfeasible(NumericalError):
    pass


class LPUnbounded(NumericalError):
    pass


@dataclass
class LPResult:
    x: np.ndarray
    value: float
    pivots: int


def _revised_simplex(A, b, cost, basis, tol, max_pivots):
    """Minimize ``cost . y`` s.t. ``A y = b, y >= 0`` from a feasible ``basis``."""
    m, n = A.shape
    basis = list(basis)
    in_basis = np.zeros(n, dtype=bool)
    in_basis[basis] = True
    degenerate_run = 0
    for pivots in range(max_pivots):
        B = A[:, basis]
        yB = np.linalg.solve(B, b)
        lam = np.linalg.solve(B.T, cost[basis])
        reduced = cost - A.T @ lam
        reduced[in_basis] = 0.0
        candidates = np.flatnonzero(reduced < -tol)
        if candidates.size == 0:
            return basis, yB, lam, pivots
        if degenerate_run > 2:
            enter = int(candidates[0])
        else:
            enter = int(candidates[np.argmin(reduced[candidates])])
        d = np.linalg.solve(B, A[:, enter])
        pos = d > tol
        if not np.any(pos):
            raise LPUnbounded("linear program is unbounded")
        ratios = np.full(m, np.inf)
        ratios[pos] = np.maximum(yB[pos], 0.0) / d[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + tol)
        leave = int(min(ties, key=lambda i: basis[i]))
        degenerate_run = degenerate_run + 1 if best <= tol else 0
        in_basis[basis[leave]] = False
        in_basis[enter] = True
        basis[leave] = enter
    raise NumericalError(f"simplex method exceeded {max_pivots} pivots")


def maximize(c, G, h, tol: float = 1e-11, max_pivots: int = 10000) -> LPResult:
    """Solve ``max c.x  s.t.  G x <= h`` with ``x`` free.

    Works on the dual ``min h.y  s.t.  G^T y = c, y >= 0``.  The primal
    optimum is the vector of simplex multipliers at the optimal dual basis.
    """
    c = np.asarray(c, dtype=float)
    G = np.asarray(G, dtype=float)
    h = np.asarray(h, dtype=float)
    n = c.size
    m = G.shape[0]

    A = G.T
    b = c.copy()
    sign = np.where(b < 0, -1.0, 1.0)
    A1 = np.hstack([A * sign[:, None], np.eye(n)])
    b1 = b * sign

    # phase 1: drive the artificials to zero
    cost1 = np.concatenate([np.zeros(m), np.ones(n)])
    basis, yB, _, piv1 = _revised_simplex(A1, b1, cost1, list(range(m, m + n)), tol, max_pivots)
    if yB[np.array(basis) >= m].sum() > 1e-9 * max(1.0, np.abs(b1).max()):
        raise LPUnbounded("primal unbounded (dual infeasible)")

    # swap any zero-level artificial out of the basis
    for pos, var in enumerate(list(basis)):
        if var < m:
            continue
        Binv_row = np.linalg.solve(A1[:, basis].T, np.eye(n)[pos])
        row = Binv_row @ A1[:, :m]
        row[basis] = 0.0
        j = int(np.argmax(np.abs(row)))
        if abs(row[j]) <= tol:
            raise LPInfeasible("constraint matrix G is rank deficient")
        basis[pos] = j

    A2 = A1[:, :m]
    basis, yB, lam, piv2 = _revised_simplex(A2, b1, h, basis, tol, max_pivots)
    # lam solves B^T lam = h_B for the sign-flipped rows
    x = lam * sign
    return LPResult(x, float(c @ x), piv1 + piv2)
