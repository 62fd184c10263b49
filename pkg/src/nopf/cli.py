"""Command-line pipeline: dataset generation, training, simulation, benchmarks.

Exit codes are a stable contract for harness scripts:
0 success, 1 usage/configuration error, 2 numerical failure, 3 I/O error.
All numeric output is printed with 17 significant digits so logs reproduce
values exactly.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .dynamics import make_plant
from .predictor import PredictorBlowUpError
from .simulator import SimulationBlowUp, bench_predictors, run_closed_loop, write_meta
from .surrogate import WeightFileError, load_params, save_params
from .training import (Dataset, DatasetGenerationError, TrainingDivergence,
                       eval_sup_error, generate_dataset, train)

# Published single-thread timings for the three step sizes, kept for
# side-by-side comparison in the bench report (not pass/fail numbers).
REFERENCE_TIMINGS = {0.01: (1.601, 0.496, 3.22),
                     0.005: (3.295, 0.587, 5.61),
                     0.001: (18.197, 1.212, 15.01)}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        raise CliFailure(1, f"{self.prog}: error: {message}")


class CliFailure(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _g17(x) -> str:
    return f"{float(x):.17g}"


def _load_run_config(path) -> RunConfig:
    try:
        return load_config(path)
    except OSError as exc:
        raise CliFailure(3, f"cannot read config: {exc}") from exc
    except ConfigError as exc:
        raise CliFailure(1, str(exc)) from exc


def _load_dataset(path) -> Dataset:
    try:
        return Dataset.load(path)
    except OSError as exc:
        raise CliFailure(3, f"cannot read dataset: {exc}") from exc
    except ValueError as exc:
        raise CliFailure(3, str(exc)) from exc


def _load_weights(path):
    try:
        return load_params(path)
    except OSError as exc:
        raise CliFailure(3, f"cannot read weights: {exc}") from exc
    except WeightFileError as exc:
        raise CliFailure(3, str(exc)) from exc


def cmd_gen_data(args) -> int:
    cfg = _load_run_config(args.config)
    if args.seed is not None:
        cfg.set("dataset", "seed", args.seed)
    try:
        sampling, seed = cfg.sampling_config()
        model = make_plant(*cfg.plant_selection())
    except (ConfigError, ValueError) as exc:
        raise CliFailure(1, str(exc)) from exc
    try:
        dataset, report = generate_dataset(model, sampling, seed=seed)
    except DatasetGenerationError as exc:
        raise CliFailure(2, str(exc)) from exc
    dataset.meta["effective_config"] = cfg.flat_dict()
    dataset.meta["code_version"] = __version__
    try:
        dataset.save(args.out)
        write_meta(f"{args.out}.report", {
            "requested_samples": report.requested,
            "recorded_samples": report.recorded,
            "discarded_samples": report.discarded,
            "discard_fraction": report.discard_fraction,
            "failed_trajectories": len(report.failed_trajectories),
            "seed": seed, "code_version": __version__,
            **{f"config.{k}": v for k, v in cfg.flat_dict().items()},
        })
    except OSError as exc:
        raise CliFailure(3, f"cannot write dataset: {exc}") from exc
    print(f"dataset: {args.out}")
    print(f"rows: {len(dataset)}")
    print(f"discarded: {report.discarded} of {report.requested} "
          f"({_g17(100 * report.discard_fraction)}%)")
    return 0


def cmd_train(args) -> int:
    cfg = _load_run_config(args.config)
    dataset = _load_dataset(args.data)
    try:
        train_config = cfg.train_config(epochs=args.epochs, seed=args.seed)
        architecture = cfg.architecture(state_dim=dataset.state_dim)
    except (ConfigError, ValueError) as exc:
        raise CliFailure(1, str(exc)) from exc
    try:
        params, report = train(dataset, architecture, train_config)
    except TrainingDivergence as exc:
        raise CliFailure(2, str(exc)) from exc
    except ValueError as exc:
        raise CliFailure(1, str(exc)) from exc
    params.creation_seed = train_config.seed
    report.config.update({f"config.{k}": v for k, v in cfg.flat_dict().items()})
    try:
        save_params(params, args.out)
        report.write(f"{args.out}.report")
    except OSError as exc:
        raise CliFailure(3, f"cannot write weights: {exc}") from exc
    print(f"weights: {args.out}")
    print(f"epochs_run: {len(report.epochs)} (best {report.best_epoch}, "
          f"stop: {report.stop_reason})")
    print(f"validation_sup_error: {_g17(report.final_val_sup)}")
    return 0


def cmd_simulate(args) -> int:
    cfg = _load_run_config(args.config)
    try:
        sim = cfg.sim_config(backend=args.backend, weights=args.weights,
                             seed=args.seed,
                             open_loop=True if args.open_loop else None)
        sim.validate()
    except (ConfigError, ValueError) as exc:
        raise CliFailure(1, str(exc)) from exc
    surrogate_params = _load_weights(sim.weights_path) \
        if sim.backend == "surrogate" else None
    extra = {"code_version": __version__,
             **{f"config.{k}": v for k, v in cfg.flat_dict().items()}}
    try:
        log = run_closed_loop(sim, surrogate_params=surrogate_params)
    except SimulationBlowUp as exc:
        if exc.partial_log is not None and args.out:
            exc.partial_log.write_csv(args.out, extra_meta=extra)
            print(f"partial trajectory retained in {args.out}", file=sys.stderr)
        raise CliFailure(2, str(exc)) from exc
    except PredictorBlowUpError as exc:
        raise CliFailure(2, str(exc)) from exc
    if args.out:
        try:
            log.write_csv(args.out, extra_meta=extra)
        except OSError as exc:
            raise CliFailure(3, f"cannot write trajectory: {exc}") from exc
        print(f"trajectory: {args.out}")
    s = log.summary()
    print(f"final_residual: {_g17(s['final_residual'])}")
    print(f"final_d_hat: {_g17(s['final_d_hat'])}")
    print(f"min_gamma_fn: {_g17(s['min_gamma_fn'])}")
    if sim.backend == "none" and sim.open_loop and s["max_late_residual"] > 0.5:
        print("note: open-loop run did not converge (expected limit cycle)")
    return 0


def cmd_bench(args) -> int:
    cfg = _load_run_config(args.config)
    if args.reps < 100:
        raise CliFailure(1, f"--reps must be >= 100 (got {args.reps})")
    params = _load_weights(args.weights)
    dx_values = args.dx or [0.01, 0.005, 0.001]
    try:
        sim = cfg.sim_config()
        sim.validate()
        report = bench_predictors(sim, dx_values, args.reps, params)
    except (ConfigError, ValueError) as exc:
        raise CliFailure(1, str(exc)) from exc
    except (SimulationBlowUp, PredictorBlowUpError) as exc:
        raise CliFailure(2, str(exc)) from exc
    if args.out:
        try:
            report.write_csv(args.out)
            write_meta(f"{args.out}.meta", {
                "repetitions": report.repetitions, "pool_size": report.pool_size,
                "code_version": __version__,
                **{f"config.{k}": v for k, v in cfg.flat_dict().items()}})
        except OSError as exc:
            raise CliFailure(3, f"cannot write bench table: {exc}") from exc
    speedups = report.speedup("surrogate")
    print("dx,numerical_s,surrogate_s,speedup,ref_numerical_s,ref_surrogate_s,ref_speedup")
    for i, dx in enumerate(report.dx_values):
        ref = REFERENCE_TIMINGS.get(round(dx, 6))
        ref_txt = ",".join(_g17(r) for r in ref) if ref else ",,"
        print(f"{_g17(dx)},{_g17(report.mean_seconds['numerical'][i])},"
              f"{_g17(report.mean_seconds['surrogate'][i])},{_g17(speedups[i])},"
              f"{ref_txt}")
    return 0


def cmd_eval(args) -> int:
    params = _load_weights(args.weights)
    dataset = _load_dataset(args.data)
    try:
        report = eval_sup_error(params, dataset)
    except ValueError as exc:
        raise CliFailure(1, str(exc)) from exc
    print(f"sup_error: {_g17(report.epsilon_hat)}")
    print(f"mean_error: {_g17(report.mean_error)}")
    print(f"samples: {report.sample_count}")
    for key, value in sorted(report.domain_descriptor.items()):
        if isinstance(value, list):
            print(f"domain.{key}: {', '.join(_g17(v) for v in value)}")
        else:
            print(f"domain.{key}: {_g17(value)}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="nopf", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="harvest a supervised predictor dataset")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default="dataset.nods")
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="train the DeepONet surrogate")
    p.add_argument("--config", default=None)
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default="weights.nopf")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("simulate", help="run the closed loop and export the log")
    p.add_argument("--config", default=None)
    p.add_argument("--backend", default=None,
                   choices=["numerical", "surrogate", "none", "known-delay"])
    p.add_argument("--weights", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--open-loop", action="store_true")
    p.add_argument("--out", default="trajectory.csv")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("bench", help="time predictor backends per step size")
    p.add_argument("--config", default=None)
    p.add_argument("--weights", required=True)
    p.add_argument("--dx", type=float, action="append", default=None)
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--out", default="bench.csv")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("eval", help="report surrogate sup error on a dataset")
    p.add_argument("--weights", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(fn=cmd_eval)
    return parser


def main(argv=None) -> int:
    np.seterr(over="ignore", invalid="ignore")  # blow-ups are detected explicitly
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "backend", None) == "known-delay":
            args.backend = "known_delay"
        return args.fn(args)
    except CliFailure as exc:
        print(str(exc), file=sys.stderr)
        return exc.code
    except OSError as exc:
        print(str(exc), file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
