"""Witnesses that the sum-to-one criterion has non-trivial solutions.

If ``A^T d = 1`` for a fully dense ``d``, then ``f_i(x) = d_i phi_i^{-1}(x)``
are invertible and map every mixture column onto a sum of one.  The
constructions below build such a ``d`` for incoherent ``A``: densify a null
space basis by folding its columns pairwise, after augmenting ``A`` with a
row of ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InputError, PreconditionError, StructureError
from .mixture import MixingMatrix, check_incoherence

NULL_CUTOFF = 1e-10  # relative singular value cutoff for the null space
DENSITY_FLOOR = 1e-12  # |d_i| >= DENSITY_FLOOR * ||d||_inf counts as nonzero


@dataclass
class BalancingVector:
    d: np.ndarray
    residual: float  # ||A^T d - 1||_inf
    min_abs_entry: float

    def to_json(self):
        return {"d": self.d.tolist(), "residual": self.residual, "min_abs_entry": self.min_abs_entry}


def _support(v, floor=0.0):
    v = np.asarray(v, dtype=float)
    return np.abs(v) > floor * (np.abs(v).max() if v.size else 0.0)


def dense_span_combination(x, y, floor: float = 0.0) -> np.ndarray:
    """``z = a x + b y`` whose support is the union of both supports.

    ``a = 1/max|x|`` puts ``a x`` in [-1, 1] and ``b = 2/min_{y_j != 0}|y_j|``
    makes every nonzero ``b y_j`` exceed 2 in magnitude, so no cancellation
    is possible.  Entries with ``|y_j| <= floor * max|y|`` are treated as zero
    when choosing ``b``.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise DimensionError(f"length mismatch: {x.size} vs {y.size}")
    sx, sy = _support(x), _support(y, floor)
    if not sx.any() and not sy.any():
        raise InputError("both vectors are zero")
    if not sy.any():
        return x.copy()
    if not sx.any():
        return y.copy()
    a = 1.0 / np.abs(x).max()
    b = 2.0 / np.abs(y[sy]).min()
    return a * x + b * y


def _null_basis(A):
    """Orthonormal basis of the null space of ``A^T`` (columns)."""
    U, sv, _ = np.linalg.svd(A, full_matrices=True)
    rank = int(np.sum(sv > NULL_CUTOFF * sv[0]))
    return U[:, rank:], rank


def dense_nullspace_vector(A) -> np.ndarray:
    """A vector with ``A^T d = 0`` and no zero entry, scaled to ``||d||_inf = 1``."""
    if isinstance(A, MixingMatrix):
        A = A.A
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    m, r = A.shape
    if m <= r:
        raise StructureError(f"need a tall matrix for a nontrivial null space, got {A.shape}")
    if not check_incoherence(A):
        raise PreconditionError("matrix is not incoherent: some e_j lies in its range")
    U, rank = _null_basis(A)
    if rank < r:
        raise StructureError("matrix is rank deficient")
    d = U[:, 0]
    for k in range(1, U.shape[1]):
        d = dense_span_combination(d, U[:, k], floor=DENSITY_FLOOR)
    d = d / np.abs(d).max()
    if np.abs(d).min() < DENSITY_FLOOR:
        raise PreconditionError("could not build a dense null space vector")
    return d


def balancing_vector(A) -> BalancingVector:
    """Fully dense ``d`` with ``A^T d = 1_r``.

    Appending a row of ones keeps ``A`` incoherent; a dense null vector
    ``v`` of the augmented matrix rescaled to ``v[-1] = -1`` then gives
    ``A^T v[:m] = 1``.
    """
    if isinstance(A, MixingMatrix):
        A = A.A
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise DimensionError("A must be a matrix")
    if A.shape[0] < A.shape[1]:
        raise StructureError(f"need a tall matrix, got {A.shape}")
    if not check_incoherence(A):
        raise PreconditionError("matrix is not incoherent: some e_j lies in its range")
    r = A.shape[1]
    v = dense_nullspace_vector(np.vstack([A, np.ones((1, r))]))
    d = -v[:-1] / v[-1]
    # one step of refinement with the minimum-norm correction
    d = d - np.linalg.lstsq(A.T, A.T @ d - 1.0, rcond=None)[0]
    residual = float(np.abs(A.T @ d - 1.0).max())
    return BalancingVector(d, residual, float(np.abs(d).min()))
