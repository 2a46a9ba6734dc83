"""Accuracy metrics and diagnostics.

``aligned_mse`` resolves the row-permutation ambiguity of the recovered
sources.  ``composite_affinity`` checks whether the learned ``f_i`` undo the
true ``phi_i`` up to an affine map, and derives the induced linear map ``W``
that relates the transformed data to the original mixture.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DimensionError, InputError
from .mixture import NonlinearSpec
from .network import NetworkParams, transform

BRUTE_FORCE_MAX_R = 8
W_SINGULAR_TOL = 1e-8
LOG_FLOOR = 1e-300  # log10 of an exact zero MSE is reported as -300


@lru_cache(maxsize=None)
def _permutations(r: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(r))), dtype=np.intp)


def aligned_mse(S_hat, S):
    """``min_P ||P S_hat - S||_F^2 / (r N)`` over row permutations ``P``.

    Returns ``(mse, perm)`` with ``S_hat[perm]`` the best aligned estimate.
    """
    S_hat = np.asarray(S_hat, dtype=float)
    S = np.asarray(S, dtype=float)
    if S_hat.shape != S.shape or S.ndim != 2:
        raise DimensionError(f"shape mismatch: {S_hat.shape} vs {S.shape}")
    r, N = S.shape
    # C[k, l] = squared error of putting estimated row l in place of true row k
    C = np.array([[np.sum((S_hat[l] - S[k]) ** 2) for l in range(r)] for k in range(r)])
    if r <= BRUTE_FORCE_MAX_R:
        P = _permutations(r)
        totals = C[np.arange(r), P].sum(axis=1)
        perm = P[int(np.argmin(totals))]
    else:
        _, perm = linear_sum_assignment(C)
    total = float(C[np.arange(r), perm].sum())
    return total / (r * N), [int(p) for p in perm]


def empirical_cdf(values, log10: bool = False):
    """Points ``(x, F(x))`` of the empirical CDF, ``F = rank / n``.

    With ``log10=True`` the abscissae are ``log10(x)`` (zeros map to -300).
    """
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if v.size == 0:
        raise InputError("empirical_cdf needs at least one value")
    if np.any(np.isnan(v)):
        raise InputError("empirical_cdf got NaN values")
    if log10:
        if np.any(v < 0):
            raise InputError("log10 CDF needs nonnegative values")
        v = np.log10(np.maximum(v, LOG_FLOOR))
    n = v.size
    return [(float(x), (i + 1) / n) for i, x in enumerate(v)]


@dataclass
class AffineCompositeFit:
    slopes: np.ndarray
    intercepts: np.ndarray
    r_squared: np.ndarray
    W: Optional[np.ndarray]
    max_deviation: float

    @property
    def W_defined(self) -> bool:
        return self.W is not None

    def to_json(self):
        return {
            "slopes": self.slopes.tolist(),
            "intercepts": self.intercepts.tolist(),
            "r_squared": self.r_squared.tolist(),
            "W": None if self.W is None else self.W.tolist(),
            "W_defined": self.W_defined,
            "max_deviation": self.max_deviation,
        }


def linear_map_from_affine(slopes, intercepts) -> Optional[np.ndarray]:
    """``W = (I + b 1^T / (1 - 1^T b)) D``, or None when ``1^T b`` is 1."""
    d = np.asarray(slopes, dtype=float)
    b = np.asarray(intercepts, dtype=float)
    denom = 1.0 - b.sum()
    if abs(denom) <= W_SINGULAR_TOL:
        return None
    return (np.eye(d.size) + np.outer(b, np.ones(d.size)) / denom) * d[None, :]


def data_domain(X, phi: NonlinearSpec):
    """Per-feature intervals of the pre-distortion values ``phi_i^{-1}(x)``
    spanned by the rows of ``X``."""
    X = np.asarray(X, dtype=float)
    T = phi.invert(np.column_stack([X.min(axis=1), X.max(axis=1)]))
    return [(float(lo), float(hi)) for lo, hi in T]


def composite_affinity(
    params,
    phi: NonlinearSpec,
    domain: Sequence,
    n_samples: int = 200,
) -> AffineCompositeFit:
    """Least-squares affine fit of ``k_i(t) = f_i(phi_i(t))`` per feature.

    ``domain[i] = (lo, hi)`` is the interval of ``t`` (values before the
    distortion) sampled on an even grid of ``n_samples`` points.  ``params``
    is a ``NetworkParams`` or any callable mapping an ``M x n`` matrix
    row-wise like ``transform``.
    """
    M = len(phi)
    if isinstance(params, NetworkParams):
        if params.n_features != M:
            raise DimensionError(f"params cover {params.n_features} features, phi has {M}")
        net = params
        params = lambda X: transform(net, X)  # noqa: E731
    if len(domain) != M:
        raise DimensionError(f"need {M} domain intervals, got {len(domain)}")
    if n_samples < 10:
        raise InputError("n_samples must be >= 10")
    slopes = np.empty(M)
    intercepts = np.empty(M)
    r2 = np.empty(M)
    worst = 0.0
    T = np.array([np.linspace(lo, hi, n_samples) for lo, hi in domain])
    K = np.asarray(params(phi.apply(T)), dtype=float)
    for i in range(M):
        t, k = T[i], K[i]
        G = np.column_stack([t, np.ones_like(t)])
        (slopes[i], intercepts[i]), *_ = np.linalg.lstsq(G, k, rcond=None)
        fit = G @ np.array([slopes[i], intercepts[i]])
        ss_res = float(np.sum((k - fit) ** 2))
        ss_tot = float(np.sum((k - k.mean()) ** 2))
        if ss_tot > 0:
            r2[i] = min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
        else:
            r2[i] = 1.0 if ss_res == 0 else 0.0
        worst = max(worst, float(np.abs(k - fit).max()))
    W = linear_map_from_affine(slopes, intercepts)
    return AffineCompositeFit(slopes, intercepts, r2, W, worst)


def composite_curves(params, phi: NonlinearSpec, lo: float, hi: float, n: int = 200):
    """Columns ``t, k_1(t), ..., k_M(t)`` on a common grid of ``t``.

    Entries where ``phi_i`` is undefined are NaN.
    """
    if isinstance(params, NetworkParams):
        net = params
        params = lambda X: transform(net, X)  # noqa: E731
    t = np.linspace(lo, hi, n)
    ok = np.array([f.in_domain(t) for f in phi.functions()])
    # placeholder inputs where phi_i is undefined; masked out below
    X = np.array([np.where(m, f(np.where(m, t, f.sample_range[0])), 0.0)
                  for f, m in zip(phi.functions(), ok)])
    K = np.where(ok, np.asarray(params(X), dtype=float), np.nan)
    return np.vstack([t, K]).T


def network_curves(params: NetworkParams, lo: float, hi: float, n: int = 200):
    """Columns ``x, f_1(x), ..., f_M(x)`` on a common grid of ``x``."""
    x = np.linspace(lo, hi, n)
    F = transform(params, np.tile(x, (params.n_features, 1)))
    return np.vstack([x, F]).T


_TRIANGLE = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3.0) / 2.0]])


def simplex_projection_2d(S) -> np.ndarray:
    """Map 3-source simplex columns to the plane (``N x 2``).

    ``e1 -> (0, 0)``, ``e2 -> (1, 0)``, ``e3 -> (1/2, sqrt(3)/2)``.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != 3:
        raise DimensionError(f"need a 3 x N matrix, got shape {S.shape}")
    return S.T @ _TRIANGLE


@dataclass
class TrialReport:
    nonlinearity: str
    trial: int
    seed: int
    mse_proposed: Optional[float]
    mse_baseline: Optional[float]
    fit_cost: Optional[float]
    converged: bool
    error: Optional[str] = None

    def __post_init__(self):
        for name in ("mse_proposed", "mse_baseline"):
            v = getattr(self, name)
            if v is not None and not v >= 0:
                raise InputError(f"{name} must be >= 0, got {v!r}")

    def to_json(self):
        return asdict(self)
