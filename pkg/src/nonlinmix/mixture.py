"""Synthetic post-nonlinear mixtures ``X = phi(A S)``.

Sources are Dirichlet columns on the probability simplex, the mixing matrix
is nonnegative, and ``phi`` acts element-wise with one scalar function per
feature (row).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DimensionError, DomainError, ParameterError, StructureError

INTERIOR_FLOOR = 1e-12


# ---------------------------------------------------------------------------
# nonlinearity library
# ---------------------------------------------------------------------------


def _x_plus_tanh_inverse(y):
    y = np.asarray(y, dtype=float)
    # x + tanh(x) = y has |y - x| < 1, so x is bracketed by [y - 1, y + 1]
    x = y - np.tanh(y / 2.0)
    for _ in range(60):
        t = np.tanh(x)
        step = (x + t - y) / (2.0 - t * t)
        x = x - step
        if np.all(np.abs(step) <= 1e-15 * (1.0 + np.abs(x))):
            break
    return x


def _softplus(x):
    return np.logaddexp(0.0, x)


def _softplus_inverse(y):
    y = np.asarray(y, dtype=float)
    # log(expm1(y)) overflows for large y; y + log(-expm1(-y)) does not
    return y + np.log(-np.expm1(-y))


@dataclass(frozen=True)
class Nonlinearity:
    """A strictly increasing, twice differentiable scalar function.

    ``lower``/``upper`` bound the domain; ``closed`` tells whether each end is
    attained.  ``sample_range`` is a finite interval inside the domain used by
    property checks.
    """

    name: str
    func: Callable
    inverse: Optional[Callable]
    derivative: Callable
    lower: float = -np.inf
    upper: float = np.inf
    lower_closed: bool = False
    closed_form_inverse: bool = True
    sample_range: tuple = (-2.0, 2.0)

    def in_domain(self, x):
        x = np.asarray(x, dtype=float)
        ok = x < self.upper
        ok &= (x >= self.lower) if self.lower_closed else (x > self.lower)
        return ok & np.isfinite(x)

    def __call__(self, x):
        return self.func(np.asarray(x, dtype=float))


NONLINEARITIES = {
    "identity": Nonlinearity(
        "identity", lambda x: x + 0.0, lambda y: y + 0.0, lambda x: np.ones_like(x)
    ),
    "sqrt": Nonlinearity(
        "sqrt", np.sqrt, np.square, lambda x: 0.5 / np.sqrt(x),
        lower=0.0, lower_closed=True, sample_range=(1e-3, 4.0),
    ),
    "fourth-root": Nonlinearity(
        "fourth-root", lambda x: np.sqrt(np.sqrt(x)), lambda y: np.square(np.square(y)),
        lambda x: 0.25 * x ** -0.75,
        lower=0.0, lower_closed=True, sample_range=(1e-3, 4.0),
    ),
    "log1p": Nonlinearity(
        "log1p", np.log1p, np.expm1, lambda x: 1.0 / (1.0 + x),
        lower=-1.0, sample_range=(-0.9, 4.0),
    ),
    "exp": Nonlinearity("exp", np.exp, np.log, np.exp),
    "x-plus-x2": Nonlinearity(
        "x-plus-x2", lambda x: x + x * x, lambda y: 2.0 * y / (1.0 + np.sqrt(1.0 + 4.0 * y)),
        lambda x: 1.0 + 2.0 * x,
        lower=-0.5, sample_range=(-0.45, 3.0),
    ),
    "softplus": Nonlinearity(
        "softplus", _softplus, _softplus_inverse, lambda x: 0.5 * (1.0 + np.tanh(0.5 * x))
    ),
    "x-plus-tanh": Nonlinearity(
        "x-plus-tanh", lambda x: x + np.tanh(x), _x_plus_tanh_inverse,
        lambda x: 2.0 - np.tanh(x) ** 2, closed_form_inverse=False,
    ),
}

# accepted spellings on the command line and in config files
ALIASES = {
    "x": "identity",
    "linear": "identity",
    "root4": "fourth-root",
    "log(x+1)": "log1p",
    "x+x^2": "x-plus-x2",
    "x+x2": "x-plus-x2",
    "x-plus-x^2": "x-plus-x2",
    "log(exp(x)+1)": "softplus",
    "x+tanh(x)": "x-plus-tanh",
}


def get_nonlinearity(kind: str) -> Nonlinearity:
    key = ALIASES.get(kind, kind)
    try:
        return NONLINEARITIES[key]
    except KeyError:
        raise ParameterError(
            f"unknown nonlinearity {kind!r}; choose from {sorted(NONLINEARITIES)}"
        ) from None


def eval_nonlinearity(kind: str, x):
    """Evaluate the named function, raising ``DomainError`` outside its domain."""
    phi = get_nonlinearity(kind)
    if not np.all(phi.in_domain(x)):
        raise DomainError(f"{phi.name} evaluated outside its domain")
    out = phi(x)
    return float(out) if np.ndim(out) == 0 else out


def invert_nonlinearity(kind: str, y):
    phi = get_nonlinearity(kind)
    out = phi.inverse(np.asarray(y, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class NonlinearSpec:
    """Per-feature assignment of nonlinearity kinds."""

    kinds: tuple

    def __post_init__(self):
        object.__setattr__(self, "kinds", tuple(get_nonlinearity(k).name for k in self.kinds))

    @classmethod
    def uniform(cls, kind: str, M: int) -> "NonlinearSpec":
        return cls((kind,) * M)

    def __len__(self):
        return len(self.kinds)

    def functions(self):
        return [get_nonlinearity(k) for k in self.kinds]

    def apply(self, Z: np.ndarray) -> np.ndarray:
        Z = np.asarray(Z, dtype=float)
        if Z.shape[0] != len(self):
            raise DimensionError(f"spec has {len(self)} features, data has {Z.shape[0]} rows")
        out = np.empty_like(Z)
        for i, phi in enumerate(self.functions()):
            if not np.all(phi.in_domain(Z[i])):
                bad = Z[i][~phi.in_domain(Z[i])][0]
                raise DomainError(
                    f"feature {i}: {phi.name} undefined at {bad!r}", feature=i
                )
            out[i] = phi(Z[i])
        return out

    def invert(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return np.vstack([phi.inverse(X[i]) for i, phi in enumerate(self.functions())])

    def to_json(self) -> dict:
        return {"kinds": list(self.kinds)}

    @classmethod
    def from_json(cls, obj) -> "NonlinearSpec":
        return cls(tuple(obj["kinds"]))


# ---------------------------------------------------------------------------
# sources and mixing matrices
# ---------------------------------------------------------------------------


@dataclass
class SourceMatrix:
    S: np.ndarray
    dirichlet_mu: Optional[np.ndarray] = None
    seed: Optional[int] = None

    @property
    def r(self):
        return self.S.shape[0]

    @property
    def N(self):
        return self.S.shape[1]


@dataclass
class MixingMatrix:
    A: np.ndarray
    generation: str = "user-supplied"

    @property
    def shape(self):
        return self.A.shape

    def has_two_positive_columns(self) -> bool:
        return int(np.sum(np.all(self.A > 0, axis=0))) >= 2

    def is_full_column_rank(self) -> bool:
        sv = np.linalg.svd(self.A, compute_uv=False)
        return bool(sv[-1] > 1e-10 * sv[0])


def sample_dirichlet(mu: Sequence[float], N: int, seed: int) -> SourceMatrix:
    """Draw ``N`` columns from Dirichlet(``mu``) as normalized Gamma variates.

    Columns with any coordinate below 1e-12 are redrawn so that every column
    lies in the interior of the simplex.
    """
    mu = np.asarray(mu, dtype=float).ravel()
    if mu.size < 3:
        raise DimensionError(f"need r >= 3 sources, got {mu.size}")
    if not np.all(np.isfinite(mu)) or np.any(mu <= 0):
        raise ParameterError("Dirichlet parameters must be positive")
    if int(N) < 1:
        raise ParameterError("N must be >= 1")
    N = int(N)
    rng = np.random.default_rng(seed)
    cols = []
    have = 0
    while have < N:
        G = rng.gamma(mu[:, None], 1.0, size=(mu.size, N))
        tot = G.sum(axis=0)
        ok = tot > 0
        P = G[:, ok] / tot[ok]
        P = P[:, np.all(P >= INTERIOR_FLOOR, axis=0)]
        cols.append(P)
        have += P.shape[1]
    S = np.hstack(cols)[:, :N]
    # one more division makes the column sums exact to rounding
    S = S / S.sum(axis=0)
    return SourceMatrix(S, mu, seed)


def generate_mixing_matrix(
    M: int,
    r: int,
    seed: int = 0,
    generation: str = "abs-normal-normalized",
    norm: str = "l2",
) -> MixingMatrix:
    """Mixing matrix with |N(0,1)| entries and normalized columns, or ``2 I``
    when ``generation == "scaled-identity"`` (requires ``M == r``).

    ``norm="l2"`` gives unit Euclidean column norms.  ``norm="l1"`` gives unit
    column sums (``1^T A = 1^T``), the setting in which a single shared
    network can satisfy the sum-to-one criterion non-trivially.
    """
    if r < 3:
        raise DimensionError(f"need r >= 3, got {r}")
    if M < r:
        raise DimensionError(f"need M >= r, got M={M}, r={r}")
    if generation == "scaled-identity":
        if M != r:
            raise DimensionError("scaled-identity mixing needs M == r")
        return MixingMatrix(2.0 * np.eye(M), generation)
    if generation != "abs-normal-normalized":
        raise ParameterError(f"unknown generation {generation!r}")
    if norm not in ("l1", "l2"):
        raise ParameterError(f"unknown column norm {norm!r}")
    rng = np.random.default_rng(seed)
    while True:
        A = np.abs(rng.standard_normal((M, r)))
        A /= A.sum(axis=0) if norm == "l1" else np.linalg.norm(A, axis=0)
        mm = MixingMatrix(A, generation)
        if mm.is_full_column_rank():
            return mm


@dataclass
class MixtureDataset:
    X: np.ndarray
    A: Optional[MixingMatrix] = None
    S: Optional[SourceMatrix] = None
    phi: Optional[NonlinearSpec] = None
    meta: dict = field(default_factory=dict)

    @property
    def has_truth(self):
        return self.A is not None and self.S is not None and self.phi is not None

    @property
    def linear_part(self):
        """``A S``, the mixture before distortion (synthetic mode only)."""
        return self.A.A @ self.S.S


def apply_model(A, S, phi: NonlinearSpec) -> MixtureDataset:
    """Form ``X = phi(A S)``; domain violations name the offending feature."""
    if not isinstance(A, MixingMatrix):
        A = MixingMatrix(np.asarray(A, dtype=float))
    if not isinstance(S, SourceMatrix):
        S = SourceMatrix(np.asarray(S, dtype=float))
    if A.A.shape[1] != S.S.shape[0]:
        raise DimensionError(f"A is {A.A.shape}, S is {S.S.shape}")
    if A.A.shape[0] != len(phi):
        raise DimensionError(f"A has {A.A.shape[0]} rows, phi has {len(phi)} features")
    X = phi.apply(A.A @ S.S)
    return MixtureDataset(X, A, S, phi)


# ---------------------------------------------------------------------------
# structural checks
# ---------------------------------------------------------------------------


def incoherence_residuals(A: np.ndarray) -> np.ndarray:
    """Distance from each coordinate vector ``e_j`` to ``Range(A)``."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] < A.shape[1]:
        raise StructureError(f"incoherence needs a tall matrix, got shape {A.shape}")
    U, sv, _ = np.linalg.svd(A, full_matrices=False)
    if sv[-1] <= 1e-10 * sv[0]:
        raise StructureError("matrix is rank deficient")
    # ||(I - U U^T) e_j||^2 = 1 - ||U[j]||^2
    return np.sqrt(np.clip(1.0 - np.sum(U * U, axis=1), 0.0, None))


def check_incoherence(A, tol: float = 1e-8) -> bool:
    if isinstance(A, MixingMatrix):
        A = A.A
    return bool(np.all(incoherence_residuals(A) > tol))


@dataclass(frozen=True)
class SSCheck:
    """Result of the near-pure-column test.  A negative is inconclusive."""

    passed: bool
    conclusive: bool
    max_coordinates: tuple = ()

    def __bool__(self):
        return self.passed


def ss_heuristic(S, tol: float = 0.05) -> SSCheck:
    """Sufficient check for sufficient scatteredness.

    Passes when every source has some column with that coordinate at least
    ``1 - tol``.  Such near-pure columns put (almost) all simplex vertices in
    the data hull.  Failing says nothing about the exact condition.
    """
    if isinstance(S, SourceMatrix):
        S = S.S
    S = np.asarray(S, dtype=float)
    best = S.max(axis=1)
    passed = bool(np.all(best >= 1.0 - tol))
    return SSCheck(passed, conclusive=passed, max_coordinates=tuple(float(b) for b in best))
