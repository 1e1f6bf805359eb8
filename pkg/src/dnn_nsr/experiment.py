"""Experiment configuration, per-trial execution and on-disk reports.

A run writes into its output directory:

``trials.csv``        one row per trial (``TRIAL_FIELDS``)
``aggregate.csv``     mean and population SD per metric (``AGGREGATE_FIELDS``)
``trace_trial<t>.csv``  per-epoch objective trace (``TRACE_FIELDS``), trained methods only
``checkpoint_trial<t>.bin``  trained network, neural methods only
``recovered_trial<t>.png``  reconstructed raster, image datasets only
``objective.png`` / ``inpainting_trial<t>.png``  figures
``metadata.json``     timestamps, wall times and the resolved config

Everything except ``metadata.json`` and the figures is a pure function of
the config and seed.
"""
import csv
import dataclasses
import json
import logging
import math
import os
import time
from collections import namedtuple
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from . import baselines, checkpoint, datasets, metrics, trainer
from .errors import NumericalFailure

log = logging.getLogger(__name__)

METHODS = ("dnn_nsr", "aemc", "soft_impute")
TRIAL_FIELDS = ("trial", "seed", "method", "psnr", "mse", "mse_x100", "ssim", "nmae")
AGGREGATE_FIELDS = ("method", "trials", "failed", "psnr_mean", "psnr_sd", "mse_mean", "mse_sd",
                    "mse_x100_mean", "ssim_mean", "ssim_sd", "nmae_mean", "nmae_sd")
TRACE_FIELDS = ("epoch", "Q", "mu_theta", "omega", "L_theta", "backtracks", "c1", "c2")

# grid of soft-impute thresholds, as fractions of the top singular value of
# the zero-filled observations, searched on a validation split
TAU_GRID = (0.3, 0.1, 0.03, 0.01, 0.003)


@dataclass
class ExperimentConfig:
    """Everything that determines a run.

    ``dataset`` is ``"synthetic"``, ``"image"`` or ``"movielens"``.
    ``tau`` of ``None`` selects the soft-impute threshold on a validation
    split of the observed entries.
    """

    dataset: str = "synthetic"
    m: int = 300
    n: int = 200
    rank: int = 10
    path: str = ""
    movielens_format: str = datasets.ML100K
    rho: float = 0.5
    train_fraction: float = 0.7
    trials: int = 1
    seed: int = 0
    method: str = "dnn_nsr"
    hidden: tuple = (128, 32, 128)
    activation: str = "tanh"
    output_activation: str = "linear"
    epochs: int = 1000
    mu_max: float = 1e6
    mu_min: float = 1.0
    omega: object = "adaptive"
    gamma: float = 10.0
    alpha: float = 0.1
    beta: float = 0.1
    lam: float = 1e-3
    box_m: float = 1e3
    epoch_e: int = 200
    aemc_step: float = 1e-3
    tau: object = None
    out: str = "results"
    plots: bool = True

    def validate(self):
        if self.dataset not in ("synthetic", "image", "movielens"):
            raise ValueError("unknown dataset %r" % self.dataset)
        if self.method not in METHODS:
            raise ValueError("unknown method %r" % self.method)
        if self.dataset in ("image", "movielens") and not os.path.isfile(self.path):
            raise ValueError("dataset file %r not found" % self.path)
        if self.dataset == "movielens":
            if not 0 < self.train_fraction <= 1:
                raise ValueError("train_fraction must lie in (0, 1]")
        elif not 0 <= self.rho < 1:
            raise ValueError("rho must lie in [0, 1)")
        if self.trials < 1:
            raise ValueError("trials must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")
        self.schedule(0)
        return self

    def schedule(self, seed):
        return trainer.TrainSchedule(
            max_epochs=self.epochs, mu_max=self.mu_max, mu_min=self.mu_min, gamma=self.gamma,
            box_m=self.box_m, alpha=self.alpha, beta=self.beta, lam=self.lam,
            epoch_e=self.epoch_e, omega=self.omega, hidden=tuple(self.hidden),
            activation=self.activation, output_activation=self.output_activation, seed=seed)


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}


def coerce(key, value):
    """Convert a text value for config field ``key`` to its proper type."""
    if key not in _FIELD_TYPES:
        raise KeyError("unknown config key %r" % key)
    if not isinstance(value, str):
        return value
    value = value.strip()
    if key == "hidden":
        return tuple(int(v) for v in value.replace("x", ",").split(",") if v)
    if key == "omega":
        return value if value == "adaptive" else float(value)
    if key == "tau":
        return None if value in ("", "auto") else float(value)
    if key == "plots":
        return value.lower() in ("1", "true", "yes", "on")
    typ = _FIELD_TYPES[key]
    if typ is int:
        return int(float(value))
    if typ is float:
        return float(value)
    return value


def read_config_file(path):
    """``key = value`` lines; ``#`` starts a comment."""
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError("%s:%d: expected key = value" % (path, lineno))
            key, value = (part.strip() for part in line.split("=", 1))
            values[key.replace("-", "_")] = value
    return values


def make_config(file_values=None, overrides=None):
    """Config from file values, then overrides (``None`` overrides are ignored)."""
    merged = dict(file_values or {})
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return ExperimentConfig(**{k: coerce(k, v) for k, v in merged.items()}).validate()


def derive_seed(seed, purpose):
    """Independent 63-bit seed for one purpose (data, mask, init, ...) of a trial."""
    words = [int(seed) & 0xFFFFFFFF, int(seed) >> 32 & 0xFFFFFFFF] + list(purpose.encode())
    return int(np.random.SeedSequence(words).generate_state(1, np.uint64)[0] >> np.uint64(1))


Problem = namedtuple("Problem", ["observed", "truth", "holdout", "image_dims"])


def build_problem(cfg, seed):
    """Ground truth and observed matrix for one trial."""
    if cfg.dataset == "synthetic":
        x = datasets.gen_synthetic(cfg.m, cfg.n, cfg.rank, derive_seed(seed, "data"))
        return Problem(datasets.apply_mask(x, cfg.rho, derive_seed(seed, "mask")), x, None, None)
    if cfg.dataset == "image":
        raster = datasets.load_image(cfg.path)
        x = datasets.image_to_matrix(raster)
        obs = datasets.apply_mask(x, cfg.rho, derive_seed(seed, "mask"))
        return Problem(obs, x, None, raster.shape)
    table = datasets.parse_movielens(cfg.path, cfg.movielens_format)
    obs, holdout = datasets.split_ratings(table, cfg.train_fraction, derive_seed(seed, "split"))
    return Problem(obs, None, holdout, None)


def choose_tau(obs, seed, grid=TAU_GRID, holdout_fraction=0.1):
    """Soft-impute threshold with the lowest error on held-back observed entries."""
    top = float(np.linalg.norm(obs.data, 2))
    rows, cols = np.nonzero(obs.mask)
    rng = np.random.Generator(np.random.Philox(derive_seed(seed, "tau")))
    pick = rng.permutation(rows.size)[:max(1, int(round(holdout_fraction * rows.size)))]
    if pick.size >= rows.size:
        return grid[0] * top
    mask = obs.mask.copy()
    mask[rows[pick], cols[pick]] = 0.0
    fit = datasets.ObservedMatrix.from_full(obs.data, mask)
    truth = obs.data[rows[pick], cols[pick]]
    best = None
    for frac in grid:
        tau = frac * top
        est = baselines.soft_impute(fit, baselines.SoftImputeConfig(tau=tau))
        err = float(np.sum((est[rows[pick], cols[pick]] - truth) ** 2))
        if best is None or err < best[0]:
            best = (err, tau)
    return best[1]


TrialOutcome = namedtuple("TrialOutcome", ["report", "completed", "records", "params", "tau"])


def run_method(cfg, obs, seed):
    """Fit ``cfg.method`` to ``obs``; returns (completed, records, params, tau)."""
    if cfg.method == "soft_impute":
        tau = cfg.tau if cfg.tau is not None else choose_tau(obs, seed)
        return baselines.soft_impute(obs, baselines.SoftImputeConfig(tau=tau)), [], None, tau
    init_seed = derive_seed(seed, "init")
    if cfg.method == "aemc":
        res = baselines.train_aemc(obs, baselines.AemcConfig(
            max_epochs=cfg.epochs, lam=cfg.lam, step=cfg.aemc_step, hidden=tuple(cfg.hidden),
            activation=cfg.activation, output_activation=cfg.output_activation, seed=init_seed))
        return trainer.complete(res.params, obs), [], res.params, None
    res = trainer.train(obs, cfg.schedule(init_seed))
    return trainer.complete(res.params, obs), res.records, res.params, None


def evaluate(problem, completed):
    """Metric dict for one completed matrix (NaN where a metric does not apply)."""
    out = dict.fromkeys(("psnr", "mse", "ssim", "nmae"), math.nan)
    if problem.holdout is not None:
        users, items, truth = problem.holdout
        if truth.size:
            preds = np.clip(completed[users, items], 1.0, 5.0)
            out["nmae"] = metrics.nmae(truth, preds)
        return out
    out["psnr"] = metrics.psnr(problem.truth, completed)
    if np.any(problem.observed.mask == 0):
        out["mse"] = metrics.mse_unobserved(problem.truth, completed, problem.observed.mask)
    shown = np.clip(completed, 0.0, 1.0) if problem.image_dims is not None else completed
    out["ssim"] = metrics.ssim(problem.truth, shown)
    return out


def run_trial(cfg, trial):
    seed = cfg.seed + trial
    start = time.perf_counter()
    problem = build_problem(cfg, seed)
    completed, records, params, tau = run_method(cfg, problem.observed, seed)
    if problem.image_dims is not None:
        completed = np.clip(completed, 0.0, 1.0)
    vals = evaluate(problem, completed)
    report = metrics.TrialReport(seed=seed, wall_time=time.perf_counter() - start, **vals)
    return TrialOutcome(report, completed, records, params, tau), problem


def _fmt(v):
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(row[k]) for k in header])


def write_trace(path, records):
    rows = [{"epoch": r.epoch, "Q": r.q_value, "mu_theta": r.mu_theta, "omega": r.omega,
             "L_theta": r.lipschitz_theta, "backtracks": r.backtrack_count, "c1": r.c1, "c2": r.c2}
            for r in records]
    write_csv(path, TRACE_FIELDS, rows)


def trial_row(trial, method, report):
    mse = report.mse
    return {"trial": trial, "seed": report.seed, "method": method, "psnr": report.psnr,
            "mse": mse, "mse_x100": 100.0 * mse, "ssim": report.ssim, "nmae": report.nmae}


def aggregate_row(method, reports, failed):
    row = {"method": method, "trials": len(reports), "failed": failed}
    if reports:
        means, sds = metrics.aggregate(reports)
    else:
        means = sds = dict.fromkeys(metrics.METRIC_FIELDS, math.nan)
    for name in metrics.METRIC_FIELDS:
        row[name + "_mean"] = means[name]
        row[name + "_sd"] = sds[name]
    row["mse_x100_mean"] = 100.0 * means["mse"]
    return row


RunResult = namedtuple("RunResult", ["reports", "failed", "outcomes", "aggregate"])


def run_experiment(cfg, write=True):
    """Run ``cfg.trials`` trials (seeds ``seed + t``) and persist the results.

    A trial that fails numerically is logged and skipped; NumericalFailure is
    raised only if every trial failed.
    """
    cfg.validate()
    if write:
        os.makedirs(cfg.out, exist_ok=True)
    started = datetime.now(timezone.utc).isoformat()
    reports, rows, outcomes, failures = [], [], [], []
    for t in range(cfg.trials):
        try:
            outcome, problem = run_trial(cfg, t)
        except NumericalFailure as exc:
            log.error("trial %d failed: %s", t, exc)
            failures.append({"trial": t, "error": str(exc)})
            continue
        reports.append(outcome.report)
        outcomes.append(outcome)
        rows.append(trial_row(t, cfg.method, outcome.report))
        log.info("trial %d: psnr=%.4f mse=%.5f ssim=%.4f nmae=%.5f", t, outcome.report.psnr,
                 outcome.report.mse, outcome.report.ssim, outcome.report.nmae)
        if write:
            _write_trial_artifacts(cfg, t, outcome, problem)
    agg = aggregate_row(cfg.method, reports, len(failures))
    if write:
        write_csv(os.path.join(cfg.out, "trials.csv"), TRIAL_FIELDS, rows)
        write_csv(os.path.join(cfg.out, "aggregate.csv"), AGGREGATE_FIELDS, [agg])
        if cfg.plots and any(o.records for o in outcomes):
            from . import plots

            plots.plot_objective({"trial %d" % i: o.records for i, o in enumerate(outcomes)},
                                 os.path.join(cfg.out, "objective.png"), title=cfg.method)
        meta = {"started": started, "finished": datetime.now(timezone.utc).isoformat(),
                "wall_time": [r.wall_time for r in reports], "failures": failures,
                "soft_impute_tau": [o.tau for o in outcomes],
                "config": {k: (list(v) if isinstance(v, tuple) else v)
                           for k, v in dataclasses.asdict(cfg).items()}}
        with open(os.path.join(cfg.out, "metadata.json"), "w") as fh:
            json.dump(meta, fh, indent=2)
    if not reports:
        raise NumericalFailure("all %d trials failed" % cfg.trials)
    return RunResult(reports, failures, outcomes, agg)


def _write_trial_artifacts(cfg, t, outcome, problem):
    if outcome.records:
        write_trace(os.path.join(cfg.out, "trace_trial%d.csv" % t), outcome.records)
    if outcome.params is not None:
        checkpoint.save_checkpoint(outcome.params, os.path.join(cfg.out, "checkpoint_trial%d.bin" % t))
    if problem.image_dims is not None:
        recovered = datasets.matrix_to_image(outcome.completed, problem.image_dims)
        datasets.save_image(recovered, os.path.join(cfg.out, "recovered_trial%d.png" % t))
        if cfg.plots:
            from . import plots

            masked = datasets.matrix_to_image(problem.observed.data, problem.image_dims)
            original = datasets.matrix_to_image(problem.truth, problem.image_dims)
            plots.plot_inpainting(original, masked, recovered,
                                  os.path.join(cfg.out, "inpainting_trial%d.png" % t))


SWEEP_FIELDS = ("param", "value") + AGGREGATE_FIELDS


def run_sweep(cfg, param, values):
    """One experiment per value of ``param``; writes ``sweep.csv`` (+ ``sweep.png``)."""
    cfg.validate()
    os.makedirs(cfg.out, exist_ok=True)
    rows = []
    for value in values:
        sub = dataclasses.replace(cfg, **{param: coerce(param, value)})
        sub.out = os.path.join(cfg.out, "%s=%s" % (param, value))
        res = run_experiment(sub)
        row = dict(res.aggregate)
        row.update(param=param, value=sub.__dict__[param])
        rows.append(row)
    write_csv(os.path.join(cfg.out, "sweep.csv"), SWEEP_FIELDS, rows)
    if cfg.plots:
        from . import plots

        metric = "nmae" if cfg.dataset == "movielens" else "psnr"
        numeric = [float(r["value"]) for r in rows]
        plots.plot_sweep(numeric, [r[metric + "_mean"] for r in rows],
                         [r[metric + "_sd"] for r in rows], os.path.join(cfg.out, "sweep.png"),
                         xlabel=param, ylabel=metric,
                         logx=all(v > 0 for v in numeric))
    return rows
