"""Command-line interface: ``nonlinmix <subcommand> ...``.

Exit codes: 0 on success, 2 for bad input, 3 for numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .errors import InputError, NumericalError
from .evaluation import (
    aligned_mse,
    composite_affinity,
    composite_curves,
    data_domain,
    network_curves,
    simplex_projection_2d,
)
from .feasibility import balancing_vector
from .mixture import NonlinearSpec, apply_model, generate_mixing_matrix, sample_dirichlet
from .mves import mves
from .network import NetworkParams
from .pipeline import ExperimentConfig, run_pipeline, run_synthetic_experiment
from .solver import SolveOptions, fit_nonlinearity

EXIT_INPUT = 2
EXIT_NUMERICAL = 3


def _floats(text):
    return [float(v) for v in text.split(",")]


def _kinds(text, M):
    kinds = [k.strip() for k in text.split(",") if k.strip()]
    if len(kinds) == 1:
        kinds = kinds * M
    if len(kinds) != M:
        raise InputError(f"need 1 or {M} nonlinearity kinds, got {len(kinds)}")
    return NonlinearSpec(tuple(kinds))


def _print_json(obj):
    print(json.dumps(obj, indent=2, sort_keys=True))


def _solve_options(args):
    return SolveOptions(
        max_iterations=args.max_iterations, n_starts=args.starts, seed=args.seed
    )


def _add_solver_flags(p):
    p.add_argument("--neurons", "-K", type=int, default=20, help="neurons per network")
    p.add_argument("--shared", action="store_true", help="one network shared by all features")
    p.add_argument("--starts", type=int, default=5, help="random restarts")
    p.add_argument("--max-iterations", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_gen(args):
    if args.generation == "scaled-identity":
        A = generate_mixing_matrix(args.M, args.r, args.seed, "scaled-identity")
    else:
        A = generate_mixing_matrix(args.M, args.r, args.seed, norm=args.norm)
    mu = _floats(args.mu) if args.mu else [0.1] * args.r
    if len(mu) == 1:
        mu = mu * args.r
    S = sample_dirichlet(mu, args.N, args.seed + 1)
    ds = apply_model(A, S, _kinds(args.nonlinearity, args.M))
    ds.meta.update({"seed": args.seed, "norm": args.norm})
    io.save_dataset(args.out, ds)
    _print_json({"out": str(args.out), "X_shape": list(ds.X.shape)})


def cmd_fit(args):
    X = io.read_matrix(args.input)
    fit = fit_nonlinearity(X, args.neurons, _solve_options(args), shared=args.shared)
    out = Path(args.out)
    os.makedirs(out, exist_ok=True)
    io.write_json(out / "params.json", fit.params.to_json())
    io.write_json(out / "fit.json", fit.to_json())
    io.write_table(out / "curves.csv", network_curves(fit.params, X.min(), X.max()),
                   ["x"] + [f"f{i + 1}" for i in range(X.shape[0])])
    _print_json({"final_cost": fit.final_cost, "start_index": fit.start_index, "converged": fit.converged})


def cmd_unmix(args):
    Y = io.read_matrix(args.input)
    fac = mves(Y, args.rank, max_iterations=args.max_iterations)
    out = Path(args.out)
    os.makedirs(out, exist_ok=True)
    io.write_matrix(out / "B.csv", fac.B)
    io.write_matrix(out / "H.csv", fac.H)
    io.write_json(out / "diagnostics.json", fac.diagnostics())
    if args.rank == 3:
        io.write_matrix(out / "H_projection.csv", simplex_projection_2d(fac.H))
    _print_json({"converged": fac.converged, "volume_proxy": fac.volume_proxy})


def cmd_eval(args):
    report = {}
    if args.estimate:
        if not args.truth:
            raise InputError("--estimate needs --truth")
        mse, perm = aligned_mse(io.read_matrix(args.estimate), io.read_matrix(args.truth))
        report.update({"aligned_mse": mse, "permutation": perm})
    if args.params:
        if not (args.phi and args.data):
            raise InputError("--params needs --phi and --data")
        params = NetworkParams.from_json(io.read_json(args.params))
        phi = NonlinearSpec.from_json(io.read_json(args.phi))
        X = io.read_matrix(args.data)
        dom = data_domain(X, phi)
        fit = composite_affinity(params, phi, dom, args.samples)
        report["composite"] = fit.to_json()
        if args.out:
            os.makedirs(args.out, exist_ok=True)
            lo = min(d[0] for d in dom)
            hi = max(d[1] for d in dom)
            io.write_table(Path(args.out) / "composite_curves.csv", composite_curves(params, phi, lo, hi),
                           ["t"] + [f"k{i + 1}" for i in range(len(phi))])
    if not report:
        raise InputError("nothing to evaluate: give --estimate/--truth or --params/--phi/--data")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        io.write_json(Path(args.out) / "eval.json", report)
    _print_json(report)


def cmd_pipeline(args):
    X = io.read_matrix(args.input)
    res = run_pipeline(X, args.neurons, args.rank, _solve_options(args), shared=args.shared)
    out = Path(args.out)
    os.makedirs(out, exist_ok=True)
    io.write_json(out / "params.json", res.params.to_json())
    io.write_matrix(out / "Y.csv", res.Y)
    io.write_matrix(out / "B.csv", res.factorization.B)
    io.write_matrix(out / "S_hat.csv", res.S_hat)
    io.write_json(out / "diagnostics.json", res.diagnostics())
    _print_json({"final_cost": res.fit.final_cost, "mves_converged": res.factorization.converged})


_OVERRIDES = {
    "trials": "n_trials",
    "starts": "n_starts",
    "neurons": "K",
    "seed": "seed",
    "max_iterations": "max_iterations",
    "N": "N",
}


def cmd_experiment(args):
    cfg = dict(io.read_json(args.config)) if args.config else {}
    for flag, key in _OVERRIDES.items():
        v = getattr(args, flag)
        if v is not None:
            cfg[key] = v
    if args.nonlinearity:
        cfg["nonlinearity"] = [k.strip() for k in args.nonlinearity.split(",")]
    cfg["output_dir"] = str(args.out)
    config = ExperimentConfig.from_json(cfg)

    def progress(t):
        print(f"{t.nonlinearity} trial {t.trial}: proposed {t.mse_proposed} baseline {t.mse_baseline}",
              file=sys.stderr, flush=True)

    report = run_synthetic_experiment(config, progress=None if args.quiet else progress)
    _print_json(report.summary["overall"])


def cmd_feasibility(args):
    bv = balancing_vector(io.read_matrix(args.matrix))
    _print_json(bv.to_json())


def build_parser():
    ap = argparse.ArgumentParser(prog="nonlinmix", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic mixture dataset")
    p.add_argument("--M", type=int, default=10)
    p.add_argument("--r", type=int, default=4)
    p.add_argument("--N", type=int, default=1000)
    p.add_argument("--mu", help="Dirichlet parameters, comma separated (default 0.1 each)")
    p.add_argument("--nonlinearity", default="identity", help="one kind, or one per feature")
    p.add_argument("--generation", choices=["abs-normal-normalized", "scaled-identity"],
                   default="abs-normal-normalized")
    p.add_argument("--norm", choices=["l1", "l2"], default="l2", help="column normalization of A")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("fit", help="learn the per-feature networks")
    p.add_argument("--input", required=True)
    _add_solver_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("unmix", help="minimum-volume enclosing simplex factorization")
    p.add_argument("--input", required=True)
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--max-iterations", type=int, default=200)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_unmix)

    p = sub.add_parser("eval", help="aligned MSE and composite-affinity diagnostics")
    p.add_argument("--estimate")
    p.add_argument("--truth")
    p.add_argument("--params")
    p.add_argument("--phi")
    p.add_argument("--data")
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pipeline", help="fit, transform and unmix in one go")
    p.add_argument("--input", required=True)
    p.add_argument("--rank", type=int, required=True)
    _add_solver_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("experiment", help="paired synthetic trials against raw MVES")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--trials", type=int)
    p.add_argument("--starts", type=int)
    p.add_argument("--neurons", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--max-iterations", type=int)
    p.add_argument("--N", type=int)
    p.add_argument("--nonlinearity")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("feasibility", help="balancing vector for a mixing matrix")
    p.add_argument("--matrix", required=True)
    p.set_defaults(func=cmd_feasibility)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return 0


if __name__ == "__main__":
    sys.exit(main())
