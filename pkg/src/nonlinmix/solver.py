"""Bound-constrained nonlinear least squares and the multi-start network fit.

``solve_bounded_nls`` is an interior trust-region method in the style of
Coleman and Li: the Gauss-Newton model is rescaled by the distance to the
bound the gradient points toward, which slows iterates as they approach an
active bound.  Each trust-region step becomes up to three strictly feasible
candidates (step-back before the first bound, reflection off it, scaled
Cauchy step) and the lowest model value wins.  Only cost-decreasing steps
are accepted, so the accepted cost sequence is monotone.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .errors import InputError, NumericalError, SolverFailure
from .network import POSITIVITY_FLOOR, NetworkParams, random_params, residual_and_jacobian

log = logging.getLogger(__name__)

INTERIOR_MARGIN = 1e-12


@dataclass(frozen=True)
class SolveOptions:
    max_iterations: int = 500
    gradient_tol: float = 1e-8
    step_tol: float = 1e-10
    initial_trust_radius: float = 1.0
    n_starts: int = 5
    seed: int = 0

    def __post_init__(self):
        if min(self.gradient_tol, self.step_tol, self.initial_trust_radius) <= 0:
            raise InputError("solver tolerances and trust radius must be positive")
        if self.n_starts < 1 or self.max_iterations < 1:
            raise InputError("n_starts and max_iterations must be >= 1")

    def to_json(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class Solution:
    x: np.ndarray
    cost: float  # 0.5 * ||r||^2
    residual: np.ndarray
    iterations: int
    converged: bool
    reason: str
    cost_history: List[float] = field(default_factory=list)


def _interior_box(lower, upper):
    """Shrink the box by a relative ``INTERIOR_MARGIN`` on every finite side."""
    with np.errstate(invalid="ignore"):
        lo = np.where(np.isfinite(lower), lower + INTERIOR_MARGIN * np.maximum(1.0, np.abs(lower)), -np.inf)
        hi = np.where(np.isfinite(upper), upper - INTERIOR_MARGIN * np.maximum(1.0, np.abs(upper)), np.inf)
    bad = lo > hi
    if np.any(bad):
        mid = 0.5 * (lower + upper)
        lo = np.where(bad, mid, lo)
        hi = np.where(bad, mid, hi)
    return lo, hi


def _affine_scaling(x, g, lower, upper):
    """Coleman-Li scaling vector ``v`` and its derivative sign ``dv``.

    ``v_i`` is the distance to the bound the negative gradient points at, or 1
    when that bound is infinite.
    """
    v = np.ones_like(x)
    dv = np.zeros_like(x)
    m = (g < 0) & np.isfinite(upper)
    v[m] = upper[m] - x[m]
    dv[m] = -1.0
    m = (g > 0) & np.isfinite(lower)
    v[m] = x[m] - lower[m]
    dv[m] = 1.0
    return v, dv


def _tr_step(sv, V, uf, Delta):
    """Minimize ``||J p + f||^2`` over ``||p|| <= Delta`` given ``J = U diag(sv) V^T``
    and ``uf = U^T f``.  Gauss-Newton when it fits, else the Levenberg-Marquardt
    step whose length matches ``Delta``."""
    n = V.shape[0]
    tiny = np.finfo(float).eps * max(n, len(sv)) * (sv[0] if sv.size else 0.0)
    keep = sv > tiny
    if np.all(keep) and sv.size == n:
        z = -uf / sv
        if np.linalg.norm(z) <= Delta:
            return V @ z

    # ||p(lam)|| = Delta; Newton on 1/||p|| converges monotonically from below
    su = sv * uf
    nz = su != 0
    if not np.any(nz):
        return np.zeros(n)
    lam_lo = 0.0
    lam_hi = np.linalg.norm(su) / Delta
    lam = max(1e-3 * lam_hi, (lam_lo * lam_hi) ** 0.5)
    for _ in range(50):
        if not lam_lo < lam < lam_hi:
            lam = max(1e-3 * lam_hi, (lam_lo * lam_hi) ** 0.5)
        den = sv * sv + lam
        pn = np.sqrt(np.sum((su / den) ** 2))
        if abs(pn - Delta) <= 1e-2 * Delta or not pn > 0:
            break
        if pn > Delta:
            lam_lo = lam
        else:
            lam_hi = lam
        dpn = -np.sum(su[nz] ** 2 / den[nz] ** 3) / pn
        lam = lam - (pn - Delta) / Delta * pn / dpn
    return V @ (-su / (sv * sv + lam))


def _stride_to_bound(x, p, lo, hi):
    """Largest ``t`` with ``x + t p`` in the box, and which coordinates bind."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(p > 0, (hi - x) / p, np.where(p < 0, (lo - x) / p, np.inf))
    tmin = float(np.min(t)) if t.size else np.inf
    return tmin, np.isclose(t, tmin, rtol=0, atol=0) & np.isfinite(t)


def _line_min(a, b, c, lo, hi):
    """Minimize ``a t^2 + b t + c`` on ``[lo, hi]``."""
    ts = [lo, hi]
    if a > 0:
        t = -0.5 * b / a
        if lo < t < hi:
            ts.append(t)
    vals = [a * t * t + b * t + c for t in ts]
    i = int(np.argmin(vals))
    return ts[i], vals[i]


class _Model:
    """Quadratic model ``g_h.s + 0.5 s.(J_h^T J_h + diag(diag_h)).s``."""

    def __init__(self, Jh, gh, diag_h):
        self.Jh, self.gh, self.diag_h = Jh, gh, diag_h

    def value(self, s):
        Js = self.Jh @ s
        return float(self.gh @ s + 0.5 * (Js @ Js + np.sum(self.diag_h * s * s)))

    def line(self, s, s0=None):
        """Coefficients of ``t -> model(s0 + t s)``."""
        Js = self.Jh @ s
        a = 0.5 * (Js @ Js + np.sum(self.diag_h * s * s))
        b = float(self.gh @ s)
        c = 0.0
        if s0 is not None:
            Js0 = self.Jh @ s0
            b += float(Js @ Js0 + np.sum(self.diag_h * s * s0))
            c = self.value(s0)
        return a, b, c


def _select_step(x, p_h, d, model, Delta, lo, hi, theta):
    """Turn a trust-region step into the best of three strictly feasible steps.

    Candidates: the step truncated just short of the first bound it hits, the
    step reflected off that bound, and a Cauchy step along the scaled negative
    gradient.  Returns ``(step, step_h, predicted_reduction)``.
    """
    p = d * p_h
    if np.all((x + p >= lo) & (x + p <= hi)):
        return p, p_h, -model.value(p_h)

    stride, hits = _stride_to_bound(x, p, lo, hi)
    r_h = p_h.copy()
    r_h[hits] *= -1
    r = d * r_h
    p_h = p_h * stride
    p = p * stride
    x_on = x + p

    candidates = []
    # reflected step, limited by the trust region and the next bound
    a_ = r_h @ r_h
    b_ = 2 * (p_h @ r_h)
    c_ = p_h @ p_h - Delta ** 2
    disc = b_ * b_ - 4 * a_ * c_
    to_tr = (-b_ + np.sqrt(max(disc, 0.0))) / (2 * a_) if a_ > 0 else 0.0
    to_bound, _ = _stride_to_bound(x_on, r, lo, hi)
    r_stride = min(to_bound, to_tr)
    if r_stride > 0:
        t_lo = (1 - theta) * stride / r_stride
        t_hi = theta * to_bound if r_stride == to_bound else to_tr
        if t_lo <= t_hi:
            a, b, c = model.line(r_h, s0=p_h)
            t, val = _line_min(a, b, c, t_lo, t_hi)
            rh = p_h + t * r_h
            candidates.append((val, d * rh, rh))

    ph = theta * p_h
    candidates.append((model.value(ph), d * ph, ph))

    ag_h = -model.gh
    ng = np.linalg.norm(ag_h)
    if ng > 0:
        ag = d * ag_h
        to_tr = Delta / ng
        to_bound, _ = _stride_to_bound(x, ag, lo, hi)
        t_max = theta * to_bound if to_bound < to_tr else to_tr
        a, b, c = model.line(ag_h)
        t, val = _line_min(a, b, 0.0, 0.0, t_max)
        candidates.append((val, t * ag, t * ag_h))

    val, step, step_h = min(candidates, key=lambda c: c[0])
    return step, step_h, -val


def solve_bounded_nls(
    residual_and_jacobian: Callable,
    x0,
    lower,
    upper,
    opts: SolveOptions = SolveOptions(),
    residual: Optional[Callable] = None,
) -> Solution:
    """Minimize ``0.5 ||r(x)||^2`` subject to ``lower <= x <= upper``.

    ``residual_and_jacobian(x)`` returns ``(r, J)``.  If the cheaper
    ``residual(x)`` is also given, trial points are screened with it and the
    Jacobian is only formed at accepted points.  Terminates when the
    scaled gradient ``||v * g||_inf`` drops below ``gradient_tol``, when a step
    (or the trust radius) falls below ``step_tol`` relative to ``||x||``, or at
    the iteration cap, which reports ``converged=False``.
    """
    x0 = np.asarray(x0, dtype=float).copy()
    lower = np.broadcast_to(np.asarray(lower, dtype=float), x0.shape).copy()
    upper = np.broadcast_to(np.asarray(upper, dtype=float), x0.shape).copy()
    if np.any(lower > upper):
        raise InputError("lower bound exceeds upper bound")
    if not np.all(np.isfinite(x0)) or np.any(x0 < lower) or np.any(x0 > upper):
        raise InputError("initial point violates the bounds")
    lo, hi = _interior_box(lower, upper)
    x = np.clip(x0, lo, hi)

    r, J = residual_and_jacobian(x)
    r = np.asarray(r, dtype=float)
    if not (np.all(np.isfinite(r)) and np.all(np.isfinite(J))):
        raise NumericalError("non-finite residual at the initial point", iterate=x)
    cost = 0.5 * float(r @ r)
    history = [cost]
    g = J.T @ r

    v, _ = _affine_scaling(x, g, lower, upper)
    Delta = np.linalg.norm(x / np.sqrt(v))
    Delta = opts.initial_trust_radius * (Delta if Delta > 0 else 1.0)

    converged, reason = False, "max_iterations"
    it = 0
    while it < opts.max_iterations:
        v, dv = _affine_scaling(x, g, lower, upper)
        g_norm = np.max(np.abs(g * v)) if g.size else 0.0
        if g_norm <= opts.gradient_tol:
            converged, reason = True, "gradient_tol"
            break
        if cost == 0.0:
            converged, reason = True, "zero_cost"
            break
        d = np.sqrt(v)
        diag_h = g * dv
        Jh = J * d
        gh = d * g
        Jaug = np.vstack([Jh, np.diag(np.sqrt(diag_h))])
        U, sv, Vt = np.linalg.svd(Jaug, full_matrices=False)
        uf = U[: r.size].T @ r
        V = Vt.T
        model = _Model(Jh, gh, diag_h)
        theta = max(0.995, 1.0 - g_norm)

        accepted = False
        bad = 0
        while it < opts.max_iterations:
            it += 1
            p_h = _tr_step(sv, V, uf, Delta)
            step, step_h, predicted = _select_step(x, p_h, d, model, Delta, lo, hi, theta)
            x_new = np.clip(x + step, lo, hi)
            step_h_norm = np.linalg.norm(step_h)
            if predicted <= 0 or step_h_norm == 0:
                Delta *= 0.25
            else:
                if residual is None:
                    r_new, J_new = residual_and_jacobian(x_new)
                else:
                    r_new, J_new = residual(x_new), None
                r_new = np.asarray(r_new, dtype=float)
                if not (np.all(np.isfinite(r_new)) and (J_new is None or np.all(np.isfinite(J_new)))):
                    bad += 1
                    Delta = 0.25 * step_h_norm
                    if bad > 30:
                        raise NumericalError("residual became non-finite", iterate=x_new)
                    continue
                new_cost = 0.5 * float(r_new @ r_new)
                ratio = (cost - new_cost) / predicted
                if ratio < 0.25:
                    Delta = 0.25 * min(Delta, step_h_norm)
                elif ratio > 0.75 and step_h_norm > 0.95 * Delta:
                    Delta *= 2.0
                if new_cost < cost:
                    if J_new is None:
                        r_new, J_new = residual_and_jacobian(x_new)
                        if not np.all(np.isfinite(J_new)):
                            raise NumericalError("non-finite Jacobian", iterate=x_new)
                    accepted = True
                    small = np.linalg.norm(x_new - x) <= opts.step_tol * (np.linalg.norm(x) + opts.step_tol)
                    x, r, J, cost = x_new, r_new, J_new, new_cost
                    g = J.T @ r
                    history.append(cost)
                    if small:
                        converged, reason = True, "step_tol"
                    break
            if Delta <= opts.step_tol * (np.linalg.norm(x) + opts.step_tol):
                converged, reason = True, "step_tol"
                break
        if converged or not accepted:
            break

    return Solution(x, cost, r, it, converged, reason, history)


# ---------------------------------------------------------------------------
# multi-start network fit
# ---------------------------------------------------------------------------


@dataclass
class FitResult:
    params: NetworkParams
    final_cost: float  # mean squared sum residual
    iterations: int
    start_index: int
    converged: bool
    start_costs: List[float] = field(default_factory=list)
    start_diagnostics: List[dict] = field(default_factory=list)

    def to_json(self):
        return {
            "final_cost": self.final_cost,
            "iterations": self.iterations,
            "start_index": self.start_index,
            "converged": self.converged,
            "start_costs": [c if np.isfinite(c) else None for c in self.start_costs],
            "starts": self.start_diagnostics,
        }


def start_seeds(seed: int, n: int) -> List[int]:
    ss = np.random.SeedSequence(seed)
    return [int(c.generate_state(1)[0]) for c in ss.spawn(n)]


def fit_nonlinearity(
    X,
    K: int,
    opts: SolveOptions = SolveOptions(),
    shared: bool = False,
    floor: float = POSITIVITY_FLOOR,
) -> FitResult:
    """Fit monotone ``f_i`` so that ``sum_i f_i(x_j(i)) ~ 1`` for all columns.

    Runs ``opts.n_starts`` seeded random starts and keeps the lowest final
    cost.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or not np.all(np.isfinite(X)):
        raise InputError("X must be a finite 2-D matrix")
    if K < 1:
        raise InputError("K must be >= 1")
    M, N = X.shape

    best = None
    costs, diags = [], []
    for idx, s in enumerate(start_seeds(opts.seed, opts.n_starts)):
        p0 = random_params(X, K, np.random.default_rng(s), shared=shared)
        lb = p0.lower_bounds(floor)

        def fun(theta):
            return residual_and_jacobian(NetworkParams.from_vector(theta, M, K, shared), X)

        def res(theta):
            return residual_and_jacobian(NetworkParams.from_vector(theta, M, K, shared), X, False)[0]

        try:
            sol = solve_bounded_nls(fun, p0.to_vector(), lb, np.inf, opts, residual=res)
        except NumericalError as exc:
            log.warning("start %d failed: %s", idx, exc)
            costs.append(float("nan"))
            diags.append({"start": idx, "error": str(exc)})
            continue
        c = float(np.mean(sol.residual ** 2))
        costs.append(c)
        diags.append({"start": idx, "cost": c, "iterations": sol.iterations, "converged": sol.converged, "reason": sol.reason})
        log.debug("start %d: cost %.3e after %d iterations (%s)", idx, c, sol.iterations, sol.reason)
        if best is None or c < best[0]:
            params = NetworkParams.from_vector(sol.x, M, K, shared)
            best = (c, sol, idx, params)

    if best is None:
        raise SolverFailure("all starts failed", diagnostics=diags)
    c, sol, idx, params = best
    return FitResult(params, c, sol.iterations, idx, sol.converged, costs, diags)
