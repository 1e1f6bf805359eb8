"""Command-line entry point: ``dnn-nsr <subcommand> ...``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.

An observed matrix on disk is a directory holding ``data.csv`` and
``mask.csv`` (see ``datasets.save_matrix_csv``).
"""
import argparse
import logging
import os
import sys

import numpy as np

from . import checkpoint, datasets, experiment, metrics, trainer
from .errors import FormatError, NumericalFailure

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("dnn_nsr")


class ConfigError(Exception):
    pass


def _hidden(text):
    try:
        dims = tuple(int(v) for v in text.replace("x", ",").split(",") if v)
    except ValueError:
        raise argparse.ArgumentTypeError("architecture must look like 128,32,128")
    if not dims or min(dims) < 1:
        raise argparse.ArgumentTypeError("hidden widths must be positive")
    return dims


def _omega(text):
    if text == "adaptive":
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("omega must be 'adaptive' or a number")


def _schedule_flags(p):
    p.add_argument("--method", choices=experiment.METHODS, help="completion method")
    p.add_argument("--arch", type=_hidden, help="hidden layer widths, e.g. 128,32,128")
    p.add_argument("--mu-max", type=float, help="initial penalty weight mu_max")
    p.add_argument("--mu-min", type=float, help="final penalty weight mu_min")
    p.add_argument("--omega", type=_omega, help="'adaptive' or a fixed extrapolation weight")
    p.add_argument("--epochs", type=int, help="maximum epochs K")
    p.add_argument("--seed", type=int, help="base seed (trial t uses seed + t)")


def _experiment_flags(p):
    p.add_argument("--config", help="key = value config file; flags override it")
    p.add_argument("--dataset", help="synthetic, image:<png> or movielens:<path>[:ml1m_colons]")
    p.add_argument("--rho", type=float, help="missing fraction (synthetic and image)")
    p.add_argument("--train-fraction", type=float, help="training fraction (movielens)")
    p.add_argument("--trials", type=int, help="number of trials")
    p.add_argument("--out", help="output directory")
    p.add_argument("--no-plots", action="store_true", help="skip matplotlib figures")
    _schedule_flags(p)


def build_parser():
    ap = argparse.ArgumentParser(prog="dnn-nsr", description="Nonlinear matrix completion "
                                 "with a nonsmooth-regularized autoencoder.")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", help="write a synthetic nonlinear low-rank matrix as CSV")
    p.add_argument("--m", type=int, default=300)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--rank", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output CSV path")

    p = sub.add_parser("mask", help="remove a random fraction of entries")
    p.add_argument("--input", required=True, help="matrix CSV or RGB PNG")
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory (data.csv, mask.csv)")

    p = sub.add_parser("train", help="fit a method to an observed matrix")
    p.add_argument("--data", required=True, help="observed-matrix directory")
    p.add_argument("--out", required=True, help="output directory")
    _schedule_flags(p)

    p = sub.add_parser("complete", help="fill missing entries with a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="observed-matrix directory")
    p.add_argument("--out", required=True, help="output CSV path")

    p = sub.add_parser("evaluate", help="print PSNR, MSE (missing entries) and SSIM")
    p.add_argument("--truth", required=True, help="ground-truth matrix CSV")
    p.add_argument("--completed", required=True, help="completed matrix CSV")
    p.add_argument("--mask", help="mask CSV; required for the MSE column")

    p = sub.add_parser("experiment", help="run repeated trials and write reports")
    _experiment_flags(p)

    p = sub.add_parser("sweep", help="repeat an experiment over values of one parameter")
    _experiment_flags(p)
    p.add_argument("--param", default="mu_max", help="config key to vary")
    p.add_argument("--values", required=True, help="comma-separated values")
    return ap


def _schedule_overrides(args):
    return {"method": args.method, "hidden": args.arch, "mu_max": args.mu_max,
            "mu_min": args.mu_min, "omega": args.omega, "epochs": args.epochs,
            "seed": args.seed}


def _dataset_overrides(spec):
    if spec is None:
        return {}
    kind, _, rest = spec.partition(":")
    if kind == "synthetic":
        return {"dataset": "synthetic"}
    if kind == "image":
        return {"dataset": "image", "path": rest}
    if kind == "movielens":
        out = {"dataset": "movielens", "path": rest}
        for fmt in datasets.MOVIELENS_FORMATS:
            if rest.endswith(":" + fmt):
                out.update(path=rest[:-len(fmt) - 1], movielens_format=fmt)
        return out
    raise ConfigError("unknown dataset %r" % spec)


def _experiment_config(args):
    file_values = experiment.read_config_file(args.config) if args.config else {}
    overrides = _schedule_overrides(args)
    overrides.update(_dataset_overrides(args.dataset))
    overrides.update(rho=args.rho, train_fraction=args.train_fraction, trials=args.trials,
                     out=args.out)
    if args.no_plots:
        overrides["plots"] = False
    return experiment.make_config(file_values, overrides)


def _load_observed(path):
    data = datasets.load_matrix_csv(os.path.join(path, "data.csv"))
    mask = datasets.load_matrix_csv(os.path.join(path, "mask.csv"))
    try:
        return datasets.ObservedMatrix(data, mask)
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


def cmd_synthesize(args):
    x = datasets.gen_synthetic(args.m, args.n, args.rank, args.seed)
    datasets.save_matrix_csv(x, args.out)


def cmd_mask(args):
    if args.input.lower().endswith(".png"):
        x = datasets.image_to_matrix(datasets.load_image(args.input))
    else:
        x = datasets.load_matrix_csv(args.input)
    obs = datasets.apply_mask(x, args.rho, args.seed)
    os.makedirs(args.out, exist_ok=True)
    datasets.save_matrix_csv(obs.data, os.path.join(args.out, "data.csv"))
    datasets.save_matrix_csv(obs.mask, os.path.join(args.out, "mask.csv"))


def cmd_train(args):
    obs = _load_observed(args.data)
    cfg = experiment.make_config(None, _schedule_overrides(args))
    os.makedirs(args.out, exist_ok=True)
    completed, records, params, _ = experiment.run_method(cfg, obs, cfg.seed)
    if records:
        experiment.write_trace(os.path.join(args.out, "trace.csv"), records)
    if params is not None:
        checkpoint.save_checkpoint(params, os.path.join(args.out, "checkpoint.bin"))
    datasets.save_matrix_csv(completed, os.path.join(args.out, "completed.csv"))


def cmd_complete(args):
    params = checkpoint.load_checkpoint(args.checkpoint)
    obs = _load_observed(args.data)
    if params.layer_dims[0] != obs.shape[0]:
        raise FormatError("checkpoint expects %d rows, data has %d"
                          % (params.layer_dims[0], obs.shape[0]))
    datasets.save_matrix_csv(trainer.complete(params, obs), args.out)


def cmd_evaluate(args):
    truth = datasets.load_matrix_csv(args.truth)
    completed = datasets.load_matrix_csv(args.completed)
    mse = float("nan")
    if args.mask:
        mse = metrics.mse_unobserved(truth, completed, datasets.load_matrix_csv(args.mask))
    row = {"psnr": metrics.psnr(truth, completed), "mse": mse,
           "ssim": metrics.ssim(truth, completed)}
    print("psnr,mse,ssim")
    print(",".join(experiment._fmt(row[k]) for k in ("psnr", "mse", "ssim")))


def cmd_experiment(args):
    cfg = _experiment_config(args)
    res = experiment.run_experiment(cfg)
    agg = res.aggregate
    print(",".join(experiment.AGGREGATE_FIELDS))
    print(",".join(experiment._fmt(agg[k]) for k in experiment.AGGREGATE_FIELDS))


def cmd_sweep(args):
    cfg = _experiment_config(args)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigError("no sweep values given")
    rows = experiment.run_sweep(cfg, args.param.replace("-", "_"), values)
    print(",".join(experiment.SWEEP_FIELDS))
    for row in rows:
        print(",".join(experiment._fmt(row[k]) for k in experiment.SWEEP_FIELDS))


COMMANDS = {"synthesize": cmd_synthesize, "mask": cmd_mask, "train": cmd_train,
            "complete": cmd_complete, "evaluate": cmd_evaluate,
            "experiment": cmd_experiment, "sweep": cmd_sweep}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    np.seterr(over="ignore", under="ignore")
    try:
        COMMANDS[args.command](args)
    except NumericalFailure as exc:
        print("numerical failure: %s" % exc, file=sys.stderr)
        return EXIT_NUMERIC
    except (FormatError, OSError) as exc:
        print("data error: %s" % exc, file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, ValueError, KeyError, TypeError) as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
