"""Minimum-volume enclosing simplex (MVES) factorization.

Data columns are first reduced to their (r-1)-dimensional affine hull.  A
simplex in that space is parameterized by its inverse barycentric map
``(H, g)``: a point ``z`` has coordinates ``H z - g`` (first r-1) and one
minus their sum (last).  Enclosing every data point is a set of linear
constraints on ``(H, g)``, and the simplex volume is proportional to
``1/|det H|``.  Maximizing ``|det H|`` one row at a time (the determinant is
linear in each row through its cofactors) gives two LPs per row.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import lp
from .errors import DimensionError, StructureError

log = logging.getLogger(__name__)

ENCLOSURE_TOL = 1e-6


@dataclass
class ReducedData:
    Z: np.ndarray  # (r-1) x N
    mean: np.ndarray  # length M
    basis: np.ndarray  # M x (r-1), orthonormal columns
    singular_values: Optional[np.ndarray] = None

    def lift(self, Zr: np.ndarray) -> np.ndarray:
        return self.mean[:, None] + self.basis @ Zr

    def project(self, Y: np.ndarray) -> np.ndarray:
        return self.basis.T @ (np.asarray(Y, dtype=float) - self.mean[:, None])


@dataclass
class SimplexFactorization:
    B: np.ndarray  # M x r vertices
    H: np.ndarray  # r x N barycentric coordinates
    volume_proxy: float
    reconstruction_error: float
    converged: bool = True
    iterations: int = 0
    volume_trace: List[float] = field(default_factory=list)
    enclosure_violation: float = 0.0
    warning: Optional[str] = None

    def diagnostics(self) -> dict:
        return {
            "volume_proxy": self.volume_proxy,
            "volume_trace": self.volume_trace,
            "reconstruction_error": self.reconstruction_error,
            "enclosure_violation": self.enclosure_violation,
            "converged": self.converged,
            "iterations": self.iterations,
            "warning": self.warning,
        }


def affine_fit(Y, r: int) -> ReducedData:
    """Project columns of ``Y`` onto their best (r-1)-dimensional affine set."""
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2:
        raise DimensionError("Y must be a matrix")
    M, N = Y.shape
    if r < 2:
        raise DimensionError("rank must be >= 2")
    if N < r:
        raise DimensionError(f"need at least r={r} columns, got {N}")
    if r - 1 > M:
        raise DimensionError(f"rank {r} needs at least {r - 1} rows, got {M}")
    if not np.all(np.isfinite(Y)):
        raise DimensionError("Y has non-finite entries")
    mean = Y.mean(axis=1)
    U, sv, _ = np.linalg.svd(Y - mean[:, None], full_matrices=False)
    basis = U[:, : r - 1]
    Z = basis.T @ (Y - mean[:, None])
    return ReducedData(Z, mean, basis, sv)


def _farthest_points(Z: np.ndarray, r: int) -> List[int]:
    """Pick r columns greedily, each farthest from the affine hull of the
    previous picks (the first is farthest from the centroid)."""
    c = Z.mean(axis=1, keepdims=True)
    idx = [int(np.argmax(np.sum((Z - c) ** 2, axis=0)))]
    for _ in range(1, r):
        base = Z[:, idx[0]][:, None]
        D = Z[:, idx[1:]] - base
        R = Z - base
        if D.shape[1]:
            Q, _ = np.linalg.qr(D)
            R = R - Q @ (Q.T @ R)
        dist = np.sum(R * R, axis=0)
        dist[idx] = -1.0
        idx.append(int(np.argmax(dist)))
    return idx


def _coords(H, g, Z):
    top = H @ Z - g[:, None]
    return np.vstack([top, 1.0 - top.sum(axis=0)])


def _initial_simplex(Z: np.ndarray, r: int):
    """Vertices from farthest points, blown up about their centroid until
    every column is enclosed.  Returns ``(H, g)``."""
    idx = _farthest_points(Z, r)
    V = Z[:, idx]
    for _ in range(2):
        B = V[:, :-1] - V[:, -1:]
        if abs(np.linalg.det(B)) <= 1e-300:
            raise StructureError("data do not span an (r-1)-dimensional simplex")
        H = np.linalg.inv(B)
        g = H @ V[:, -1]
        low = _coords(H, g, Z).min()
        if low >= 0:
            return H, g
        # barycentric coords shrink toward 1/r under scaling t about the centroid
        t = (1.0 - r * low) * (1.0 + 1e-9)
        c = V.mean(axis=1, keepdims=True)
        V = c + t * (V - c)
    return H, g


def _cofactors(H: np.ndarray, i: int) -> np.ndarray:
    """Cofactors along row ``i``: ``det H = cof @ H[i]``."""
    n = H.shape[0]
    if n == 1:
        return np.ones(1)
    cof = np.empty(n)
    rows = [k for k in range(n) if k != i]
    sub = H[rows]
    for j in range(n):
        minor = np.delete(sub, j, axis=1)
        cof[j] = (-1) ** (i + j) * np.linalg.det(minor)
    return cof


def _row_update(H, g, Z, i):
    """Best replacement for row ``i`` of ``(H, g)``; returns (h_i, g_i, det)."""
    n, N = Z.shape
    others = [k for k in range(n) if k != i]
    q = 1.0 - (H[others] @ Z - g[others][:, None]).sum(axis=0)
    ones = np.ones((N, 1))
    G = np.vstack([np.hstack([-Z.T, ones]), np.hstack([Z.T, -ones])])
    h = np.concatenate([np.zeros(N), q])
    cof = _cofactors(H, i)
    c = np.append(cof, 0.0)
    best = None
    for sgn in (1.0, -1.0):
        res = lp.maximize(sgn * c, G, h)
        val = abs(res.value)
        if best is None or val > best[2]:
            best = (res.x[:n], res.x[n], val)
    return best


def recover_sources(B, Y, reduced: Optional[ReducedData] = None):
    """Barycentric coordinates of the columns of ``Y`` w.r.t. vertices ``B``.

    Solves ``[B; 1^T] H = [Y; 1^T]`` (in the reduced coordinates when
    ``reduced`` is given, exactly).  Entries down to -1e-6 are clipped and
    columns renormalized; larger violations are kept and reported.
    Returns ``(H, warning)`` where ``warning`` is None or a message.
    """
    B = np.asarray(B, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if reduced is not None:
        B = reduced.project(B)
        Y = reduced.project(Y)
    r = B.shape[1]
    Ba = np.vstack([B, np.ones((1, r))])
    Ya = np.vstack([Y, np.ones((1, Y.shape[1]))])
    if np.linalg.svd(Ba, compute_uv=False)[-1] <= 1e-12 * np.abs(Ba).max():
        raise StructureError("vertices are affinely dependent")
    H = np.linalg.lstsq(Ba, Ya, rcond=None)[0]
    worst = float(max(0.0, -H.min()))
    warning = None
    if worst > ENCLOSURE_TOL:
        warning = f"barycentric coordinates down to {-worst:.3g}; data not enclosed"
        warnings.warn(warning, RuntimeWarning, stacklevel=2)
    else:
        H = np.clip(H, 0.0, None)
        H /= H.sum(axis=0)
    return H, warning


def mves(Y, r: int, max_iterations: int = 200, tol: float = 1e-8) -> SimplexFactorization:
    """Factor ``Y ~ B H`` with ``H`` column-stochastic and minimal simplex volume.

    Cyclic row updates of the inverse simplex map, two LPs each, until the
    relative volume change over a sweep drops below ``tol``.
    """
    Y = np.asarray(Y, dtype=float)
    red = affine_fit(Y, r)
    sv = red.singular_values
    if len(sv) < r - 1 or sv[r - 2] <= 1e-10 * max(sv[0], 1e-300):
        raise StructureError(f"data affine dimension is below r-1 = {r - 1}")
    Z = red.Z
    # work in a unit-scale frame; volumes below are reported in data units
    scale = np.abs(Z).max()
    Zs = Z / scale
    H, g = _initial_simplex(Zs, r)
    det = abs(np.linalg.det(H))
    trace = [scale ** (r - 1) / det]
    converged = False
    it = 0
    for it in range(1, max_iterations + 1):
        prev = det
        for i in range(r - 1):
            try:
                h_i, g_i, val = _row_update(H, g, Zs, i)
            except lp.NumericalError as exc:
                log.warning("row %d LP failed: %s", i, exc)
                continue
            if val > det:
                H = H.copy()
                g = g.copy()
                H[i], g[i] = h_i, g_i
                det = abs(np.linalg.det(H))
        trace.append(scale ** (r - 1) / det)
        if abs(det - prev) <= tol * prev:
            converged = True
            break
    Bred = np.linalg.inv(H)
    vr = Bred @ g
    V = np.hstack([vr[:, None] + Bred, vr[:, None]]) * scale
    B = red.lift(V)
    Hs, warning = recover_sources(V, Z)
    violation = float(max(0.0, -_coords(H, g, Zs).min()))
    err = np.linalg.norm(Y - B @ Hs) / max(np.linalg.norm(Y), 1e-300)
    return SimplexFactorization(
        B, Hs, float(trace[-1]), float(err), converged, it, [float(v) for v in trace], violation, warning
    )
