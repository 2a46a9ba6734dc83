"""Monotone one-hidden-layer scalar networks.

Each feature ``i`` gets

    f_i(x) = sum_k alpha_ik * tanh(beta_ik * x + gamma_ik) + delta_ik

with ``alpha, beta > 0``, so ``f_i' > 0`` and every ``f_i`` is invertible.
Fitting drives ``sum_i f_i(x_j(i))`` toward 1 for every data column ``j``.

The flat parameter vector used by the solver is laid out feature by feature,
each block being ``[alpha(K), beta(K), gamma(K), delta(K)]``.  With
``shared=True`` there is a single block used by all features.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InvariantError

POSITIVITY_FLOOR = 1e-6


@dataclass(frozen=True)
class NetworkParams:
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    delta: np.ndarray
    n_features: int
    shared: bool = False

    def __post_init__(self):
        arrs = []
        for name in ("alpha", "beta", "gamma", "delta"):
            a = np.array(getattr(self, name), dtype=float, ndmin=2)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
            arrs.append(a)
        rows = 1 if self.shared else self.n_features
        for a in arrs:
            if a.shape != (rows, arrs[0].shape[1]):
                raise DimensionError(
                    f"parameter blocks must be ({rows}, K); got {[x.shape for x in arrs]}"
                )

    @property
    def K(self) -> int:
        return self.alpha.shape[1]

    @property
    def n_blocks(self) -> int:
        return self.alpha.shape[0]

    @property
    def size(self) -> int:
        return 4 * self.K * self.n_blocks

    def validate(self, floor: float = 0.0):
        """Raise ``InvariantError`` unless every alpha and beta exceeds ``floor``."""
        for name in ("alpha", "beta"):
            a = getattr(self, name)
            if not np.all(np.isfinite(a)) or np.any(a <= floor):
                raise InvariantError(f"{name} must be > {floor}; min is {np.min(a)!r}")
        for name in ("gamma", "delta"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise InvariantError(f"{name} has non-finite entries")
        return self

    def block(self, feature: int) -> int:
        if not 0 <= feature < self.n_features:
            raise DimensionError(f"feature {feature} out of range [0, {self.n_features})")
        return 0 if self.shared else feature

    # -- flat vector conversion ---------------------------------------------

    def to_vector(self) -> np.ndarray:
        return np.stack([self.alpha, self.beta, self.gamma, self.delta], axis=1).ravel()

    @classmethod
    def from_vector(cls, theta, n_features: int, K: int, shared: bool = False) -> "NetworkParams":
        blocks = 1 if shared else n_features
        theta = np.asarray(theta, dtype=float)
        if theta.size != 4 * K * blocks:
            raise DimensionError(f"expected {4 * K * blocks} parameters, got {theta.size}")
        t = theta.reshape(blocks, 4, K)
        return cls(t[:, 0], t[:, 1], t[:, 2], t[:, 3], n_features, shared)

    def lower_bounds(self, floor: float = POSITIVITY_FLOOR) -> np.ndarray:
        lb = np.full((self.n_blocks, 4, self.K), -np.inf)
        lb[:, :2] = floor
        return lb.ravel()

    # -- serialization ------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "K": self.K,
            "shared": self.shared,
            "n_features": self.n_features,
            "features": [
                {
                    "alpha": self.alpha[b].tolist(),
                    "beta": self.beta[b].tolist(),
                    "gamma": self.gamma[b].tolist(),
                    "delta": self.delta[b].tolist(),
                }
                for b in range(self.n_blocks)
            ],
        }

    @classmethod
    def from_json(cls, obj) -> "NetworkParams":
        feats = obj["features"]
        shared = bool(obj.get("shared", False))
        n_features = int(obj.get("n_features", len(feats)))
        return cls(
            [f["alpha"] for f in feats],
            [f["beta"] for f in feats],
            [f["gamma"] for f in feats],
            [f["delta"] for f in feats],
            n_features,
            shared,
        )


def random_params(X: np.ndarray, K: int, rng, shared: bool = False) -> NetworkParams:
    """Initial point for fitting.

    alpha ~ U(0.5, 1.5)/K and beta ~ U(0.5, 1.5)/range(x_i) keep each unit in
    its responsive region; delta = 1/(M K) starts the feature sum near 1.
    """
    X = np.asarray(X, dtype=float)
    M = X.shape[0]
    blocks = 1 if shared else M
    span = np.ptp(X) if shared else np.ptp(X, axis=1)
    span = np.where(np.asarray(span) > 0, span, 1.0).reshape(-1, 1)
    alpha = rng.uniform(0.5, 1.5, (blocks, K)) / K
    beta = rng.uniform(0.5, 1.5, (blocks, K)) / span
    gamma = rng.uniform(-1.0, 1.0, (blocks, K))
    delta = np.full((blocks, K), 1.0 / (M * K))
    return NetworkParams(alpha, beta, gamma, delta, M, shared)


def forward(params: NetworkParams, x, feature: int):
    """Evaluate ``f_feature`` at scalar or array ``x``."""
    params.validate()
    b = params.block(feature)
    x = np.asarray(x, dtype=float)
    u = params.beta[b][:, None] * x.reshape(1, -1) + params.gamma[b][:, None]
    y = params.alpha[b] @ np.tanh(u) + params.delta[b].sum()
    return float(y[0]) if x.ndim == 0 else y.reshape(x.shape)


def derivative(params: NetworkParams, x, feature: int):
    """``f_feature'(x) = sum_k alpha_k beta_k (1 - tanh^2(beta_k x + gamma_k))``."""
    b = params.block(feature)
    x = np.asarray(x, dtype=float)
    t = np.tanh(params.beta[b][:, None] * x.reshape(1, -1) + params.gamma[b][:, None])
    y = (params.alpha[b] * params.beta[b]) @ (1.0 - t * t)
    return float(y[0]) if x.ndim == 0 else y.reshape(x.shape)


def transform(params: NetworkParams, X: np.ndarray) -> np.ndarray:
    """Apply ``f`` row-wise: ``Y[i, j] = f_i(X[i, j])``."""
    X = np.asarray(X, dtype=float)
    if X.shape[0] != params.n_features:
        raise DimensionError(f"params cover {params.n_features} features, X has {X.shape[0]} rows")
    params.validate()
    if params.shared:
        u = params.beta[0][None, :, None] * X[:, None, :] + params.gamma[0][None, :, None]
        return np.einsum("k,ikn->in", params.alpha[0], np.tanh(u)) + params.delta[0].sum()
    u = params.beta[:, :, None] * X[:, None, :] + params.gamma[:, :, None]
    return np.einsum("ik,ikn->in", params.alpha, np.tanh(u)) + params.delta.sum(axis=1)[:, None]


def sum_residual(params: NetworkParams, X: np.ndarray) -> np.ndarray:
    """``r_j = 1 - sum_i f_i(X[i, j])``; the fitting objective is ``mean(r**2)``."""
    return 1.0 - transform(params, X).sum(axis=0)


def objective(params: NetworkParams, X: np.ndarray) -> float:
    r = sum_residual(params, X)
    return float(np.mean(r * r))


def residual_and_jacobian(params: NetworkParams, X: np.ndarray, with_jacobian: bool = True):
    """Residuals and their ``N x P`` Jacobian w.r.t. the flat parameter vector.

    With ``with_jacobian=False`` the second item is None.
    """
    X = np.asarray(X, dtype=float)
    M, N = X.shape
    K = params.K
    if params.shared:
        a, b, c = params.alpha[0], params.beta[0], params.gamma[0]
        t = np.multiply.outer(b, X)  # K x M x N
        t += c[:, None, None]
        np.tanh(t, out=t)
        tsum = t.sum(axis=1)
        r = 1.0 - (a @ tsum + M * params.delta[0].sum())
        if not with_jacobian:
            return r, None
        np.multiply(t, t, out=t)
        np.subtract(1.0, t, out=t)  # t now holds tanh'
        J = np.empty((N, 4, K))
        J[:, 0] = -tsum.T
        J[:, 1] = -(a[:, None] * np.einsum("kin,in->kn", t, X)).T
        J[:, 2] = -(a[:, None] * t.sum(axis=1)).T
        J[:, 3] = -float(M)
        return r, J.reshape(N, -1)

    u = params.beta[:, :, None] * X[:, None, :] + params.gamma[:, :, None]
    t = np.tanh(u)
    r = 1.0 - (np.einsum("ik,ikn->n", params.alpha, t) + params.delta.sum())
    if not with_jacobian:
        return r, None
    dt = 1.0 - t * t
    a = params.alpha[:, :, None]
    J = np.empty((N, M, 4, K))
    J[:, :, 0] = -np.moveaxis(t, 2, 0)
    J[:, :, 1] = -np.moveaxis(a * dt * X[:, None, :], 2, 0)
    J[:, :, 2] = -np.moveaxis(a * dt, 2, 0)
    J[:, :, 3] = -1.0
    return r, J.reshape(N, -1)


def jacobian(params: NetworkParams, X: np.ndarray) -> np.ndarray:
    return residual_and_jacobian(params, X)[1]
