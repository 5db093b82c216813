"""Command-line entry point: ``sparse-duality {solve,learn-lambda,bench,classify}``.

Exit codes: 0 success, 1 input or configuration error, 2 solver did not
converge (outputs are still written), 64 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .bench import (ClusterSpec, ExperimentConfig, RecoveryParams, SolverParams, atomic_write,
                    config_hash, recovery_tables, run_lambda_sweep, run_recovery_experiment,
                    sweep_tables)
from .classifier import ClassifierOptions, fit_approx_l0_classifier, fit_type2_classifier
from .classifier import predict_proba
from .exceptions import ConfigurationError, NonConvergence, SparseDualityError
from .io import (InputFormatError, load_model, model_to_dict, read_features,
                 read_labeled_design, read_matrix, read_vector, write_vector)
from .lambda_learn import LambdaOptions, learn_lambda_type1, learn_lambda_type2
from .penalties import PenaltyFamily
from .type1 import Type1Options, solve_type1
from .type2 import NoiselessOptions, Type2Options, solve_type2, solve_type2_noiseless

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGED, EXIT_USAGE = 0, 1, 2, 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_float(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def _penalty(text):
    try:
        return PenaltyFamily.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _out_dir(args):
    os.makedirs(args.out_dir, exist_ok=True)
    return args.out_dir


def _write_json(path, obj):
    atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load_problem(args):
    phi = read_matrix(args.dict)
    y = read_vector(args.y)
    if y.size != phi.shape[0]:
        raise InputFormatError(f"{args.y}: length {y.size} does not match {phi.shape[0]} rows in {args.dict}")
    return phi, y


def cmd_solve(args) -> int:
    phi, y = _load_problem(args)
    if args.solver == "type1":
        rep = solve_type1(phi, args.penalty, args.lam, y, Type1Options(max_iters=args.max_iters))
    elif args.solver == "type2":
        rep = solve_type2(phi, args.penalty, args.lam, y,
                          Type2Options(update_rule=args.rule, max_iters=args.max_iters))
    else:
        rep = solve_type2_noiseless(phi, y, q=args.q,
                                    opts=NoiselessOptions(max_iters=args.max_iters))
    out = _out_dir(args)
    write_vector(os.path.join(out, "x.csv"), rep.x_hat)
    write_vector(os.path.join(out, "gamma.csv"), rep.gamma_hat)
    _write_json(os.path.join(out, "report.json"), rep.to_dict())
    print(f"{args.solver}: {rep.iterations} iterations, converged={rep.converged}, "
          f"nonzeros={int(np.count_nonzero(rep.x_hat))}")
    return EXIT_OK if rep.converged else EXIT_NONCONVERGED


def cmd_learn_lambda(args) -> int:
    phi, y = _load_problem(args)
    learn = learn_lambda_type1 if args.type == "1" else learn_lambda_type2
    est = learn(phi, args.penalty, y, LambdaOptions(max_iters=args.max_iters))
    out = _out_dir(args)
    write_vector(os.path.join(out, "x.csv"), est.x_star)
    _write_json(os.path.join(out, "lambda.json"), est.to_dict())
    print(f"lambda* = {est.lambda_star:.6g} (ml estimate {est.ml_lambda:.6g}), "
          f"converged={est.converged}")
    return EXIT_OK if est.converged else EXIT_NONCONVERGED


_RECOVERY_FIELDS = {
    "spec": {f.name for f in dataclasses.fields(ClusterSpec)},
    "params": {f.name for f in dataclasses.fields(RecoveryParams)},
    "solver": {f.name for f in dataclasses.fields(SolverParams)},
}


def _read_config(path):
    with open(path, encoding="utf-8") as fh:
        try:
            config = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(config, dict):
        raise ConfigurationError(f"{path}: top level must be an object")
    if "seed" not in config:
        raise ConfigurationError("seed: required field is missing")
    return config


def recovery_config(config: dict):
    """Split a flat recovery config into ``(ClusterSpec, RecoveryParams, SolverParams)``."""
    known = set().union(*_RECOVERY_FIELDS.values())
    unknown = sorted(set(config) - known)
    if unknown:
        raise ConfigurationError("unknown fields: " + ", ".join(unknown))
    missing = [k for k in ("base_n", "base_d") if k not in config]
    if missing:
        raise ConfigurationError(", ".join(f"{k}: required field is missing" for k in missing))
    try:
        spec = ClusterSpec(**{k: v for k, v in config.items() if k in _RECOVERY_FIELDS["spec"]})
        params = RecoveryParams(**{k: v for k, v in config.items()
                                   if k in _RECOVERY_FIELDS["params"]})
        solver = SolverParams(**{k: v for k, v in config.items()
                                 if k in _RECOVERY_FIELDS["solver"]})
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(str(exc)) from None
    params.validate(spec)
    return spec, params, solver


def sweep_config(config: dict) -> ExperimentConfig:
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(config) - known)
    if unknown:
        raise ConfigurationError("unknown fields: " + ", ".join(unknown))
    try:
        return ExperimentConfig(**config)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(str(exc)) from None


def cmd_bench(args) -> int:
    config = _read_config(args.config)
    t0 = time.perf_counter()
    if args.experiment == "sweep":
        tables = sweep_tables(run_lambda_sweep(sweep_config(config), jobs=args.jobs))
    else:
        spec, params, solver = recovery_config(config)
        result = run_recovery_experiment(spec, params, solver, jobs=args.jobs)
        tables = recovery_tables(result)
        print(", ".join(f"{k}={v}" for k, v in result.summary.items()))
    digest = config_hash({"experiment": args.experiment, **config})
    run_dir = os.path.join(_out_dir(args), f"{args.experiment}-{digest[:16]}")
    os.makedirs(run_dir, exist_ok=True)
    for name, text in tables.items():
        atomic_write(os.path.join(run_dir, name), text)
    manifest = {
        "config_hash": digest,
        "config": config,
        "experiment": args.experiment,
        "seed": config["seed"],
        "version": __version__,
        "timing": {"bench": time.perf_counter() - t0},
        "outputs": sorted(tables),
    }
    _write_json(os.path.join(run_dir, "manifest.json"), manifest)
    print(f"wrote {len(tables)} tables to {run_dir}")
    return EXIT_OK


def cmd_classify(args) -> int:
    out = _out_dir(args)
    if args.action == "fit":
        design = read_labeled_design(args.data)
        if args.mode == "type2":
            rep = fit_type2_classifier(design, args.penalty,
                                       ClassifierOptions(lam=args.lam, max_iters=args.max_iters))
        else:
            rep = fit_approx_l0_classifier(design, ClassifierOptions(
                alpha1=args.alpha1, alpha2=args.alpha2, alpha1_min=args.alpha1_min,
                alpha2_min=args.alpha2_min, stages=args.stages, max_iters=args.max_iters))
        model = model_to_dict(rep.x_hat, rep.gamma_hat, mode=args.mode,
                              converged=rep.converged, iterations=rep.iterations,
                              objective=rep.objective_trace[-1])
        _write_json(os.path.join(out, "model.json"), model)
        print(f"support {model['support']}, converged={rep.converged}")
        return EXIT_OK if rep.converged else EXIT_NONCONVERGED
    model = load_model(args.model)
    weights = np.asarray(model["weights"], dtype=float)
    feats = read_features(args.data)
    if feats.shape[1] == weights.size + 1:
        feats = feats[:, :-1]  # labeled file: drop the label column
    if feats.shape[1] != weights.size:
        raise InputFormatError(f"{args.data}: {feats.shape[1]} features, model has {weights.size}")
    prob = predict_proba(feats, weights)
    lines = ["probability,label"] + [f"{p!r},{int(p >= 0.5)}" for p in prob.tolist()]
    atomic_write(os.path.join(out, "predictions.csv"), "\n".join(lines) + "\n")
    print(f"wrote {prob.size} predictions")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sparse-duality",
                     description="Sparse Type I / Type II estimation, lambda learning, "
                                 "recovery benchmarks and sparse classification.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, with_lambda=True):
        p.add_argument("--dict", required=True, help="matrix CSV with a 'rows,cols' header")
        p.add_argument("--y", required=True, help="observation vector, one value per line")
        p.add_argument("--penalty", type=_penalty, default=PenaltyFamily.lp(1.0))
        if with_lambda:
            p.add_argument("--lambda", dest="lam", type=_positive_float, default=1.0)
        p.add_argument("--out-dir", default=".")

    solve = sub.add_parser("solve", help="run a solver on one problem")
    solve.add_argument("solver", choices=["type1", "type2", "type2-noiseless"])
    common(solve)
    solve.add_argument("--rule", choices=["mackay", "em", "reweighted_l1"], default="mackay")
    solve.add_argument("--q", type=_positive_float, default=1.0)
    solve.add_argument("--max-iters", type=int, default=500)
    solve.set_defaults(func=cmd_solve)

    learn = sub.add_parser("learn-lambda", help="estimate lambda jointly with x")
    common(learn, with_lambda=False)
    learn.add_argument("--type", choices=["1", "2"], default="1")
    learn.add_argument("--max-iters", type=int, default=10000)
    learn.set_defaults(func=cmd_learn_lambda)

    bench = sub.add_parser("bench", help="run a benchmark from a JSON config")
    bench.add_argument("experiment", choices=["sweep", "recovery"])
    bench.add_argument("--config", required=True)
    bench.add_argument("--out-dir", default=".")
    bench.add_argument("--jobs", type=int, default=None,
                       help="worker processes (default: $SPARSE_DUALITY_JOBS or 1)")
    bench.set_defaults(func=cmd_bench)

    classify = sub.add_parser("classify", help="sparse logistic classification")
    classify.add_argument("action", choices=["fit", "predict"])
    classify.add_argument("--data", required=True, help="CSV of features (label last for fit)")
    classify.add_argument("--model", help="model JSON (predict)")
    classify.add_argument("--mode", choices=["type2", "approx-l0"], default="type2")
    classify.add_argument("--penalty", type=_penalty, default=PenaltyFamily.ard())
    classify.add_argument("--lambda", dest="lam", type=_positive_float, default=4.0)
    classify.add_argument("--alpha1", type=_positive_float, default=1.0)
    classify.add_argument("--alpha2", type=_positive_float, default=1.0)
    classify.add_argument("--alpha1-min", type=_positive_float, default=1e-6)
    classify.add_argument("--alpha2-min", type=_positive_float, default=1e-6)
    classify.add_argument("--stages", type=int, default=8)
    classify.add_argument("--max-iters", type=int, default=1000)
    classify.add_argument("--out-dir", default=".")
    classify.set_defaults(func=cmd_classify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "classify" and args.action == "predict" and not args.model:
        parser.error("classify predict requires --model")
    if getattr(args, "max_iters", 1) < 1:
        parser.error("--max-iters must be at least 1")
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: no such file: {exc.filename}", file=sys.stderr)
    except (InputFormatError, ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    except NonConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except (SparseDualityError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
