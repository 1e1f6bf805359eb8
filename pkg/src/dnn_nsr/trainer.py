"""Alternating proximal training with nonsmooth regularization and penalty annealing.

Each epoch updates, in order, the sparse hidden-output surrogates ``h``
(soft-thresholding), the low-rank weight surrogates ``V`` (SVT), and the
network parameters ``theta`` (extrapolated proximal-gradient step with a
backtracked Lipschitz estimate and box projection). Penalty weights ``mu``
follow a cosine schedule from ``mu_max`` down to ``mu_min``, so the
regularizers only take hold gradually.
"""
import dataclasses
import logging
import math
from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np

from . import fcnn
from .errors import NumericalFailure
from .numeric import make_rng
from .prox import clip_linf, soft_threshold, svt

log = logging.getLogger(__name__)

RETRY = "retry"
PROCEED = "proceed"
NO_ACTION = "none"


@dataclass
class TrainSchedule:
    """Hyperparameters plus the mutable schedule state (current mu, delta).

    ``alpha``/``beta`` may be scalars (shared by all layers) or per-layer
    sequences. ``omega`` is ``"adaptive"`` or a fixed extrapolation weight.
    ``zeta_h``/``zeta_v`` of ``None`` mean ``zeta_rel`` times the number of
    entries in the residual being tested.
    """

    max_epochs: int = 1000
    mu_max: float = 1e6
    mu_min: float = 1.0
    gamma: float = 1e3
    box_m: float = 1e3
    alpha: object = 0.1
    beta: object = 0.1
    lam: float = 1e-3
    delta: float = 0.99
    delta_min: float = 0.01
    delta_max: float = 0.99
    s1: float = 0.1
    s2: float = 0.5
    s3: float = 1.1
    epoch_e: int = 200
    zeta_h: object = None
    zeta_v: object = None
    zeta_rel: float = 1e-3
    omega: object = "adaptive"
    l0: float = 1.0
    max_backtracks: int = 60
    max_retries: int = 5
    hidden: tuple = (256, 128, 256)
    activation: str = "tanh"
    output_activation: str = "linear"
    seed: int = 0
    mu_h: list = field(default_factory=list)
    mu_v: list = field(default_factory=list)

    def __post_init__(self):
        if not self.gamma > 1:
            raise ValueError("gamma must exceed 1")
        if not 0 < self.mu_min <= self.mu_max:
            raise ValueError("need 0 < mu_min <= mu_max")
        if not 0 < self.delta_min <= self.delta_max < 1:
            raise ValueError("need 0 < delta_min <= delta_max < 1")
        if self.box_m <= 0:
            raise ValueError("box bound must be positive")
        if self.omega != "adaptive" and not float(self.omega) >= 0:
            raise ValueError("omega must be 'adaptive' or a nonnegative number")

    def per_layer(self, value, count):
        if np.ndim(value) == 0:
            return [float(value)] * count
        value = [float(v) for v in value]
        if len(value) != count:
            raise ValueError("expected %d per-layer values, got %d" % (count, len(value)))
        return value

    def with_mu(self, mu, n_layers):
        """Copy with every ``mu_h``/``mu_v`` set to ``mu``."""
        return dataclasses.replace(self, mu_h=[mu] * (n_layers - 1), mu_v=[mu] * n_layers)

    def penalties(self, aux):
        return fcnn.Penalties(aux.h, aux.v, self.mu_h, self.mu_v)


@dataclass
class AuxState:
    """Slack variables: ``h[i]`` mirrors hidden output ``i``, ``v[j]`` mirrors ``W_j``."""

    h: list
    v: list

    @classmethod
    def anchored(cls, params, trace):
        return cls([z.copy() for z in trace.hidden_outputs], [w.copy() for w in params.weights])


EpochRecord = namedtuple("EpochRecord", [
    "epoch", "q_value", "q_prev", "mu", "mu_theta", "omega", "lipschitz_theta",
    "backtrack_count", "c1", "c2", "delta", "retries", "restarted", "step_sq",
])


class ObjectiveValue(namedtuple("ObjectiveValue", ["smooth", "l1_term", "nuclear_term", "box_term"])):
    __slots__ = ()

    @property
    def total(self):
        return self.smooth.total + self.l1_term + self.nuclear_term + self.box_term


ThetaStep = namedtuple("ThetaStep", ["params", "theta", "lipschitz", "mu_theta", "backtracks",
                                     "smooth", "trace"])
Termination = namedtuple("Termination", ["c1_satisfied", "c2_satisfied", "c1", "c2"])
TrainResult = namedtuple("TrainResult", ["params", "records", "aux"])


class TrainingAborted(NumericalFailure):
    """Numerical failure during training; ``records`` holds the epochs completed."""

    def __init__(self, message, records):
        super().__init__(message)
        self.records = records


def cosine_mu(k, mu_min, mu_max, max_epochs):
    if max_epochs <= 0:
        return mu_max
    return mu_min + 0.5 * (mu_max - mu_min) * (1.0 + math.cos(math.pi * k / max_epochs))


def anneal_mu(k, schedule):
    """Cosine-annealed penalty weight for epoch ``k`` (same for every layer)."""
    if not 0 <= k <= max(schedule.max_epochs, 0):
        raise ValueError("epoch %d outside [0, %d]" % (k, schedule.max_epochs))
    return cosine_mu(k, schedule.mu_min, schedule.mu_max, schedule.max_epochs)


def update_h(trace, schedule):
    alphas = schedule.per_layer(schedule.alpha, len(trace.hidden_outputs))
    return [soft_threshold(z, a * mu)
            for z, a, mu in zip(trace.hidden_outputs, alphas, schedule.mu_h)]


def update_v(params, schedule):
    betas = schedule.per_layer(schedule.beta, params.n_layers)
    return [svt(w, b * mu) for w, b, mu in zip(params.weights, betas, schedule.mu_v)]


def extrapolate(theta_km1, theta_km2, omega):
    theta_km1 = np.asarray(theta_km1, dtype=np.float64)
    return theta_km1 + omega * (theta_km1 - np.asarray(theta_km2, dtype=np.float64))


def compute_omega(k, delta, l_prev, l_curr, gamma):
    """Adaptive extrapolation weight ``(gamma-1)/(2(gamma+1)) * sqrt(delta * l_prev/l_curr)``.

    At ``k == 1`` the Lipschitz ratio is taken as one.
    """
    c = (gamma - 1.0) / (2.0 * (gamma + 1.0))
    if delta <= 0:
        return 0.0
    if k <= 1:
        return c * math.sqrt(delta)
    return c * math.sqrt(delta * l_prev / l_curr)


def _descent_ok(g_new, g_hat, grad, step, lip):
    bound = g_hat + float(grad @ step) + 0.5 * lip * float(step @ step)
    # rounding slack relative to the magnitudes involved
    slack = 1e-12 * (abs(g_hat) + abs(g_new) + 1.0)
    return np.isfinite(g_new) and g_new <= bound + slack


def backtrack_theta(params, hat_theta, x, mask, aux, schedule, l0=None):
    """Doubling backtracking for ``L`` followed by the box-projected step.

    Tries ``L = l0 * 2**t``; the candidate ``clip(hat - grad / (gamma L), M)``
    is accepted once the descent-lemma bound holds between ``hat`` and the
    candidate. Raises NumericalFailure after ``schedule.max_backtracks``.
    """
    l0 = schedule.l0 if l0 is None else l0
    pen = schedule.penalties(aux)
    hat_params = params.with_theta(hat_theta)
    hat_trace = fcnn.forward(hat_params, x)
    g_hat = fcnn.smooth_objective(hat_params, x, mask, pen, schedule.lam, hat_trace).total
    grad = fcnn.grad_theta(hat_params, x, mask, pen, schedule.lam, hat_trace)
    if not (np.isfinite(g_hat) and np.all(np.isfinite(grad))):
        raise NumericalFailure("non-finite objective or gradient at the extrapolated point")
    lip = float(l0)
    for t in range(schedule.max_backtracks + 1):
        mu_theta = 1.0 / (schedule.gamma * lip)
        cand = clip_linf(hat_theta - mu_theta * grad, schedule.box_m)
        cand_params = params.with_theta(cand)
        with np.errstate(over="ignore", invalid="ignore"):
            cand_trace = fcnn.forward(cand_params, x)
            smooth = fcnn.smooth_objective(cand_params, x, mask, pen, schedule.lam, cand_trace)
        if _descent_ok(smooth.total, g_hat, grad, cand - hat_theta, lip):
            return ThetaStep(cand_params, cand, lip, mu_theta, t, smooth, cand_trace)
        lip *= 2.0
    raise NumericalFailure("no Lipschitz estimate validated within %d doublings"
                           % schedule.max_backtracks)


def estimate_lipschitz_theta(params, hat_theta, x, mask, aux, schedule, l0=None):
    """Smallest doubling-sequence ``L`` validating the descent lemma at the step."""
    return backtrack_theta(params, hat_theta, x, mask, aux, schedule, l0).lipschitz


def update_theta(params, aux, x, mask, schedule, theta_km1, theta_km2, omega=0.0, l0=None):
    """Extrapolate, then take the backtracked proximal-gradient step."""
    hat = extrapolate(theta_km1, theta_km2, omega)
    return backtrack_theta(params, hat, x, mask, aux, schedule, l0)


def _nuclear(mats):
    return [float(np.sum(np.linalg.svd(m, compute_uv=False))) for m in mats]


def objective_q(params, aux, x, mask, schedule, trace=None, smooth=None, nuclear=None):
    """Full objective: smooth part + l1 on ``h`` + nuclear on ``V`` + box indicator."""
    pen = schedule.penalties(aux)
    if smooth is None:
        smooth = fcnn.smooth_objective(params, x, mask, pen, schedule.lam, trace)
    alphas = schedule.per_layer(schedule.alpha, params.n_hidden)
    betas = schedule.per_layer(schedule.beta, params.n_layers)
    l1 = float(sum(a * np.abs(h).sum() for a, h in zip(alphas, aux.h)))
    if nuclear is None:
        nuclear = _nuclear(aux.v)
    nuc = float(sum(b * s for b, s in zip(betas, nuclear)))
    box = 0.0 if np.max(np.abs(params.theta())) <= schedule.box_m else math.inf
    return ObjectiveValue(smooth, l1, nuc, box)


def adapt_delta(q_curr, q_prev, k, schedule, delta=None):
    """Adjust ``delta`` after epoch ``k``; returns ``(delta, action)``.

    Warm epochs (``k <= epoch_e``) leave ``delta`` alone. Afterwards an
    objective increase shrinks ``delta`` by ``s2`` and asks for a retry of the
    epoch; a decrease grows it by ``s3`` and lets the termination test run.
    """
    delta = schedule.delta if delta is None else delta
    if k <= schedule.epoch_e:
        return delta, NO_ACTION
    if q_curr - q_prev > 0:
        return max(schedule.s2 * delta, schedule.delta_min), RETRY
    if q_curr - q_prev < 0:
        return min(schedule.s3 * delta, schedule.delta_max), PROCEED
    return delta, NO_ACTION


def check_termination(trace, aux, params, schedule):
    """Per-layer squared residual tests ``||h - z||^2 <= zeta`` and ``||V - W||^2 <= zeta``."""
    c1_ok, c2_ok = True, True
    c1 = c2 = 0.0
    n_h = len(trace.hidden_outputs)
    zh = (schedule.per_layer(schedule.zeta_h, n_h) if schedule.zeta_h is not None
          else [schedule.zeta_rel * z.size for z in trace.hidden_outputs])
    zv = (schedule.per_layer(schedule.zeta_v, params.n_layers) if schedule.zeta_v is not None
          else [schedule.zeta_rel * w.size for w in params.weights])
    for h, z, zeta in zip(aux.h, trace.hidden_outputs, zh):
        r = float(np.sum((h - z) ** 2))
        c1 += r
        c1_ok = c1_ok and r <= zeta
    for v, w, zeta in zip(aux.v, params.weights, zv):
        r = float(np.sum((v - w) ** 2))
        c2 += r
        c2_ok = c2_ok and r <= zeta
    return Termination(c1_ok, c2_ok, c1, c2)


def _descends(q_curr, q_prev):
    return q_curr <= q_prev + 1e-9 * (1.0 + abs(q_prev))


def train(x, schedule, params=None, callback=None):
    """Train the autoencoder on an ObservedMatrix; returns ``TrainResult``.

    Objective values recorded for epoch ``k`` (``q_value`` and ``q_prev``) are
    both evaluated with that epoch's penalty weights, so ``q_value <= q_prev``
    is the per-epoch descent property. When the extrapolated step would break
    it, the step is redone without extrapolation (``restarted``); after the warm
    phase an increase instead follows the delta-shrink / ``mu_max``-reduce retry
    branch, at most ``max_retries`` times, before the same fallback applies.

    ``callback(record, params)`` is invoked after every epoch.
    """
    data, mask = x.data, x.mask
    m = data.shape[0]
    if params is None:
        dims = fcnn.default_dims(m, schedule.hidden)
        params = fcnn.init_params(dims, make_rng(schedule.seed), schedule.activation,
                                  schedule.output_activation)
    params = params.with_theta(clip_linf(params.theta(), schedule.box_m))
    n_layers = params.n_layers
    K = int(schedule.max_epochs)
    sched = dataclasses.replace(schedule)
    records = []

    trace = fcnn.forward(params, data)
    aux = AuxState.anchored(params, trace)
    aux_nuclear = None
    theta_km1 = params.theta()
    theta_km2 = theta_km1.copy()
    lips = []
    delta = sched.delta
    mu_max = sched.mu_max

    for k in range(1, K + 1):
        l0 = sched.l0 if not lips else lips[-1] / 2.0
        retries = 0
        restarted = False
        while True:
            mu = cosine_mu(k, sched.mu_min, mu_max, K)
            cur = dataclasses.replace(sched, mu_max=mu_max, delta=delta).with_mu(mu, n_layers)
            h_new = update_h(trace, cur)
            v_new = update_v(params, cur)
            aux_new = AuxState(h_new, v_new)
            q_prev = objective_q(params, aux, data, mask, cur, trace=trace,
                                 nuclear=aux_nuclear).total
            if sched.omega == "adaptive":
                l_prev = lips[-2] if len(lips) > 1 else (lips[-1] if lips else 1.0)
                l_curr = lips[-1] if lips else 1.0
                omega = compute_omega(k, delta, l_prev, l_curr, sched.gamma)
            else:
                omega = float(sched.omega)
            try:
                step = update_theta(params, aux_new, data, mask, cur, theta_km1, theta_km2,
                                    omega, l0)
            except NumericalFailure as exc:
                if retries >= sched.max_retries:
                    raise TrainingAborted("epoch %d: %s" % (k, exc), records) from exc
                retries += 1
                mu_max = max(sched.s1 * mu_max, sched.mu_min)
                continue
            nuc_new = _nuclear(v_new)
            q_curr = objective_q(step.params, aux_new, data, mask, cur,
                                 smooth=step.smooth, nuclear=nuc_new).total
            if _descends(q_curr, q_prev):
                if k > sched.epoch_e:
                    delta, _ = adapt_delta(q_curr, q_prev, k, cur, delta)
                break
            if k > sched.epoch_e and retries < sched.max_retries:
                delta, _ = adapt_delta(q_curr, q_prev, k, cur, delta)
                retries += 1
                mu_max = max(sched.s1 * mu_max, sched.mu_min)
                log.debug("epoch %d: Q rose %.6g -> %.6g, retry %d", k, q_prev, q_curr, retries)
                continue
            # extrapolation overshot: plain proximal-gradient step from theta_{k-1}
            step = update_theta(params, aux_new, data, mask, cur, theta_km1, theta_km1, 0.0, l0)
            q_curr = objective_q(step.params, aux_new, data, mask, cur,
                                 smooth=step.smooth, nuclear=nuc_new).total
            omega = 0.0
            restarted = True
            break

        lips.append(step.lipschitz)
        term = check_termination(step.trace, aux_new, step.params, cur)
        step_sq = float(np.sum((step.theta - theta_km1) ** 2))
        rec = EpochRecord(k, q_curr, q_prev, mu, step.mu_theta, omega, step.lipschitz,
                          step.backtracks, term.c1, term.c2, delta, retries, restarted, step_sq)
        records.append(rec)
        if callback is not None:
            callback(rec, step.params)
        if not math.isfinite(q_curr):
            raise TrainingAborted("epoch %d: objective is not finite" % k, records)

        theta_km2, theta_km1 = theta_km1, step.theta
        params, trace, aux, aux_nuclear = step.params, step.trace, aux_new, nuc_new
        if k > sched.epoch_e and term.c1_satisfied and term.c2_satisfied:
            log.info("terminated at epoch %d: slack residuals below thresholds", k)
            break
    return TrainResult(params, records, aux)


def complete(params, x):
    """Observed entries from ``x``, network reconstruction everywhere else."""
    xhat = fcnn.forward(params, x.data).output
    return np.where(x.mask == 1, x.data, xhat)
