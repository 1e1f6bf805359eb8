"""Recovery metrics (PSNR, held-out relative MSE, global SSIM, NMAE) and aggregation."""
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ShapeError, UndefinedMetricError

SSIM_C1 = 0.01
SSIM_C2 = 0.03


def _pair(x, xhat):
    x = np.asarray(x, dtype=np.float64)
    xhat = np.asarray(xhat, dtype=np.float64)
    if x.shape != xhat.shape:
        raise ShapeError("shapes differ: %s vs %s" % (x.shape, xhat.shape))
    return x, xhat


def psnr(x, xhat):
    """``10 log10(mn max(X)^2 / ||Xhat - X||_F^2)``; ``inf`` on exact recovery."""
    x, xhat = _pair(x, xhat)
    err = float(np.sum((xhat - x) ** 2))
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(x.size * float(np.max(x)) ** 2 / err)


def mse_unobserved(x_true, xhat, mask):
    """Relative squared error over the unobserved entries only."""
    x_true, xhat = _pair(x_true, xhat)
    miss = np.asarray(mask) == 0
    if not np.any(miss):
        raise UndefinedMetricError("no unobserved entries")
    denom = float(np.sum(x_true[miss] ** 2))
    if denom == 0.0:
        raise UndefinedMetricError("true values are all zero on the unobserved set")
    return float(np.sum((xhat[miss] - x_true[miss]) ** 2)) / denom


def ssim_raw(x, xhat):
    """Single-window SSIM over the whole matrix, constants C1=0.01, C2=0.03."""
    x, xhat = _pair(x, xhat)
    if x.size == 0:
        raise UndefinedMetricError("empty matrix")
    mx, my = float(x.mean()), float(xhat.mean())
    vx, vy = float(x.var()), float(xhat.var())
    cov = float(np.mean((x - mx) * (xhat - my)))
    return ((2 * my * mx + SSIM_C1) * (2 * cov + SSIM_C2)
            / ((my ** 2 + mx ** 2 + SSIM_C1) * (vy + vx + SSIM_C2)))


def ssim(x, xhat):
    """:func:`ssim_raw` clamped at zero for reporting."""
    return max(0.0, ssim_raw(x, xhat))


def nmae(truth, predictions, x_max=5.0, x_min=1.0):
    """Mean absolute error over held-out ratings divided by the rating range."""
    truth = np.asarray(truth, dtype=np.float64).ravel()
    predictions = np.asarray(predictions, dtype=np.float64).ravel()
    if truth.size == 0:
        raise UndefinedMetricError("empty holdout")
    if truth.shape != predictions.shape:
        raise ShapeError("holdout has %d ratings, got %d predictions"
                         % (truth.size, predictions.size))
    return float(np.sum(np.abs(predictions - truth))) / ((x_max - x_min) * truth.size)


@dataclass
class TrialReport:
    """Metrics of one trial; metrics that do not apply are NaN."""

    seed: int
    psnr: float = math.nan
    mse: float = math.nan
    ssim: float = math.nan
    nmae: float = math.nan
    wall_time: float = 0.0

    def as_dict(self):
        return asdict(self)


METRIC_FIELDS = ("psnr", "mse", "ssim", "nmae")


def aggregate(reports):
    """Per-metric mean and population SD; returns ``(means, sds)`` dicts."""
    if not reports:
        raise ValueError("no reports to aggregate")
    means, sds = {}, {}
    for name in METRIC_FIELDS:
        vals = np.array([getattr(r, name) for r in reports], dtype=np.float64)
        means[name] = float(np.mean(vals))
        sds[name] = float(np.std(vals))
    return means, sds
