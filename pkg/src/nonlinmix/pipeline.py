"""End-to-end recovery and the synthetic experiment protocol.

``run_pipeline`` fits the monotone networks, maps the data through them and
runs MVES on the result.  ``run_synthetic_experiment`` repeats that on fresh
random instances and compares against MVES applied to the raw distorted data
on exactly the same instance.
"""

from __future__ import annotations

import csv
import logging
import os
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import List, Optional

import numpy as np

from .errors import InputError, NonlinmixError
from .evaluation import TrialReport, aligned_mse, empirical_cdf
from .io import write_json
from .mixture import (
    NonlinearSpec,
    apply_model,
    generate_mixing_matrix,
    get_nonlinearity,
    sample_dirichlet,
)
from .mves import SimplexFactorization, mves
from .network import NetworkParams, transform
from .solver import FitResult, SolveOptions, fit_nonlinearity

log = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1
DEFAULT_KINDS = ("exp", "x-plus-x2", "softplus", "log1p", "x-plus-tanh")


def splitmix64(x: int) -> int:
    """One output of the splitmix64 generator seeded at state ``x``."""
    z = (x + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def trial_seed(master: int, kind_index: int, trial: int) -> int:
    """Seed of one trial; independent of how many trials or kinds are run."""
    return splitmix64(splitmix64(splitmix64(master & MASK64) ^ kind_index) ^ trial)


def _stage(exc: NonlinmixError, stage: str):
    exc.stage = stage
    if exc.args:
        exc.args = (f"{stage} stage: {exc.args[0]}",) + exc.args[1:]
    return exc


@dataclass
class PipelineResult:
    params: NetworkParams
    S_hat: np.ndarray
    Y: np.ndarray
    fit: FitResult
    factorization: SimplexFactorization

    def diagnostics(self) -> dict:
        return {"fit": self.fit.to_json(), "mves": self.factorization.diagnostics()}


def run_pipeline(
    X,
    K: int,
    r: int,
    opts: SolveOptions = SolveOptions(),
    shared: bool = False,
    mves_iterations: int = 200,
) -> PipelineResult:
    """Fit ``f``, form ``Y = f(X)`` and factor ``Y`` by MVES.

    Errors are re-raised with a ``stage`` attribute ("fit" or "mves").
    """
    X = np.asarray(X, dtype=float)
    if r < 3:
        raise InputError(f"need r >= 3, got {r}")
    if X.ndim != 2 or not np.all(np.isfinite(X)):
        raise InputError("X must be a finite 2-D matrix")
    try:
        fit = fit_nonlinearity(X, K, opts, shared=shared)
    except NonlinmixError as exc:
        raise _stage(exc, "fit")
    Y = transform(fit.params, X)
    try:
        fac = mves(Y, r, max_iterations=mves_iterations)
    except NonlinmixError as exc:
        raise _stage(exc, "mves")
    return PipelineResult(fit.params, fac.H, Y, fit, fac)


# ---------------------------------------------------------------------------
# synthetic experiments
# ---------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    M: int = 10
    r: int = 4
    N: int = 1000
    K: int = 40
    mu: Optional[List[float]] = None  # defaults to 0.1 for every source
    nonlinearity: List[str] = field(default_factory=lambda: list(DEFAULT_KINDS))
    n_trials: int = 20  # per nonlinearity
    n_starts: int = 5
    seed: int = 0
    shared_network: bool = True
    output_dir: Optional[str] = None
    max_iterations: int = 500
    column_norm: str = "l1"

    def __post_init__(self):
        if self.mu is None:
            self.mu = [0.1] * self.r
        self.mu = [float(m) for m in self.mu]
        if isinstance(self.nonlinearity, str):
            self.nonlinearity = [self.nonlinearity]
        self.nonlinearity = [get_nonlinearity(k).name for k in self.nonlinearity]
        self.validate()

    def validate(self):
        if not self.M >= self.r >= 3:
            raise InputError(f"need M >= r >= 3, got M={self.M}, r={self.r}")
        if self.N < 1 or self.n_trials < 1 or self.n_starts < 1 or self.K < 1:
            raise InputError("N, K, n_trials and n_starts must be >= 1")
        if len(self.mu) != self.r or min(self.mu) <= 0:
            raise InputError(f"mu must hold {self.r} positive values")
        if not self.nonlinearity:
            raise InputError("need at least one nonlinearity")
        if self.column_norm not in ("l1", "l2"):
            raise InputError(f"column_norm must be 'l1' or 'l2', got {self.column_norm!r}")

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)

    def to_json(self) -> dict:
        return asdict(self)

    def solve_options(self, seed: int) -> SolveOptions:
        return SolveOptions(max_iterations=self.max_iterations, n_starts=self.n_starts, seed=seed)


def _finite_or_none(v):
    return float(v) if v is not None and np.isfinite(v) else None


def run_trial(cfg: ExperimentConfig, kind_index: int, trial: int, observer=None) -> TrialReport:
    """One paired trial.  ``observer(report, dataset, pipeline_result)`` is
    called afterwards when given (the result is None if the pipeline failed)."""
    kind = cfg.nonlinearity[kind_index]
    seed = trial_seed(cfg.seed, kind_index, trial)
    sub = [splitmix64(seed ^ k) for k in (1, 2, 3)]
    A = generate_mixing_matrix(cfg.M, cfg.r, sub[0], norm=cfg.column_norm)
    S = sample_dirichlet(cfg.mu, cfg.N, sub[1])
    mse_b = mse_p = cost = res = None
    converged = False
    errors = []
    try:
        ds = apply_model(A, S, NonlinearSpec.uniform(kind, cfg.M))
    except NonlinmixError as exc:
        rep = TrialReport(kind, trial, seed, None, None, None, False, f"generate: {exc}")
        if observer is not None:
            observer(rep, None, None)
        return rep
    try:
        mse_b = aligned_mse(mves(ds.X, cfg.r).H, S.S)[0]
    except (NonlinmixError, np.linalg.LinAlgError) as exc:
        errors.append(f"baseline: {exc}")
    try:
        res = run_pipeline(ds.X, cfg.K, cfg.r, cfg.solve_options(sub[2]), shared=cfg.shared_network)
        mse_p = aligned_mse(res.S_hat, S.S)[0]
        cost = res.fit.final_cost
        converged = res.fit.converged
    except (NonlinmixError, np.linalg.LinAlgError) as exc:
        errors.append(f"proposed: {exc}")
    rep = TrialReport(
        kind, trial, seed, _finite_or_none(mse_p), _finite_or_none(mse_b),
        _finite_or_none(cost), converged, "; ".join(errors) or None,
    )
    if observer is not None:
        observer(rep, ds, res)
    return rep


def _log10_or_inf(values):
    # failed trials count as the worst possible outcome
    return np.array([np.log10(max(v, 1e-300)) if v is not None else np.inf for v in values])


def _summary(trials: List[TrialReport]) -> dict:
    def stats(vals):
        lg = _log10_or_inf(vals)
        with np.errstate(invalid="ignore"):  # quantiles between two infs are NaN
            q10, q90 = np.quantile(lg, 0.1), np.quantile(lg, 0.9)
        return {
            "median_log10_mse": _finite_or_none(np.median(lg)),
            "q10_log10_mse": _finite_or_none(q10),
            "q90_log10_mse": _finite_or_none(q90),
            "failures": int(sum(v is None for v in vals)),
        }

    def block(ts):
        p = stats([t.mse_proposed for t in ts])
        b = stats([t.mse_baseline for t in ts])
        sep = None
        if p["median_log10_mse"] is not None and b["median_log10_mse"] is not None:
            sep = b["median_log10_mse"] - p["median_log10_mse"]
        return {"proposed": p, "baseline": b, "median_separation": sep, "n_trials": len(ts)}

    kinds = sorted({t.nonlinearity for t in trials}, key=[t.nonlinearity for t in trials].index)
    out = {"overall": block(trials)}
    out["per_nonlinearity"] = {k: block([t for t in trials if t.nonlinearity == k]) for k in kinds}
    return out


def _cdf(values):
    vals = [v for v in values if v is not None]
    return empirical_cdf(vals, log10=True) if vals else []


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    trials: List[TrialReport]
    summary: dict
    cdf: dict

    def to_json(self) -> dict:
        return {
            # the output location is not part of the experiment
            "config": {k: v for k, v in self.config.to_json().items() if k != "output_dir"},
            "trials": [t.to_json() for t in self.trials],
            "summary": self.summary,
            "cdf": self.cdf,
        }

    def write(self, directory) -> None:
        d = Path(directory)
        os.makedirs(d, exist_ok=True)
        write_json(d / "report.json", self.to_json())
        for method in ("proposed", "baseline"):
            with open(d / f"cdf_{method}.csv", "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["nonlinearity", "log10_mse", "F"])
                for kind, pts in self.cdf[method].items():
                    for x, F in pts:
                        w.writerow([kind, repr(x), repr(F)])
        with open(d / "trials.csv", "w", newline="") as fh:
            cols = [f.name for f in fields(TrialReport)]
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for t in self.trials:
                w.writerow(["" if getattr(t, c) is None else getattr(t, c) for c in cols])


def run_synthetic_experiment(cfg: ExperimentConfig, progress=None, observer=None) -> ExperimentReport:
    """Run ``cfg.n_trials`` paired trials per nonlinearity.

    Failed trials are recorded (MSE None, error message) and never stop the
    sweep.  ``progress(report)`` is called after each trial, ``observer`` is
    passed through to ``run_trial``.  The report holds no timing data, so identical configurations give
    identical reports.
    """
    trials = []
    for ki, kind in enumerate(cfg.nonlinearity):
        for t in range(cfg.n_trials):
            t0 = time.perf_counter()
            rep = run_trial(cfg, ki, t, observer)
            trials.append(rep)
            log.info(
                "%s trial %d: proposed %s baseline %s (%.1fs)",
                kind, t, rep.mse_proposed, rep.mse_baseline, time.perf_counter() - t0,
            )
            if progress is not None:
                progress(rep)
    cdf = {
        "proposed": {k: _cdf([t.mse_proposed for t in trials if t.nonlinearity == k]) for k in cfg.nonlinearity},
        "baseline": {k: _cdf([t.mse_baseline for t in trials if t.nonlinearity == k]) for k in cfg.nonlinearity},
    }
    report = ExperimentReport(cfg, trials, _summary(trials), cdf)
    if cfg.output_dir:
        report.write(cfg.output_dir)
    return report
