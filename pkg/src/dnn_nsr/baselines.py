"""Comparison methods: nuclear-norm soft-impute and a Frobenius-regularized autoencoder."""
import logging
from collections import namedtuple
from dataclasses import dataclass

import numpy as np

from . import fcnn
from .errors import NumericalFailure
from .numeric import make_rng
from .prox import svt

log = logging.getLogger(__name__)


@dataclass
class SoftImputeConfig:
    tau: float = 1.0
    max_iters: int = 500
    tol: float = 1e-6

    def __post_init__(self):
        if not self.tau > 0 or not self.tol > 0:
            raise ValueError("tau and tol must be positive")


def soft_impute_objective(m, x, tau):
    resid = x.mask * (m - x.data)
    return tau * float(np.sum(np.linalg.svd(m, compute_uv=False))) + 0.5 * float(np.sum(resid ** 2))


def soft_impute(x, cfg=None, history=None):
    """Fill ``x`` by iterating ``M <- svt(P_obs(X) + P_miss(M), tau)``.

    Stops when ``||M_new - M||_F / max(||M||_F, tiny)`` drops below ``cfg.tol``.
    If ``history`` is a list, the objective of each iterate is appended to it.
    The returned matrix agrees with ``x`` on observed entries.
    """
    cfg = cfg or SoftImputeConfig()
    if x.omega_count == 0:
        raise ValueError("no observed entries")
    obs = x.mask == 1
    m = np.zeros_like(x.data)
    for it in range(cfg.max_iters):
        m_new = svt(np.where(obs, x.data, m), cfg.tau)
        if history is not None:
            history.append(soft_impute_objective(m_new, x, cfg.tau))
        change = np.linalg.norm(m_new - m) / max(np.linalg.norm(m), 1e-300)
        m = m_new
        if change < cfg.tol:
            log.debug("soft-impute converged after %d iterations", it + 1)
            break
    return np.where(obs, x.data, m)


@dataclass
class AemcConfig:
    """Plain gradient descent on masked loss + ``lam * sum ||W||_F^2``."""

    max_epochs: int = 1000
    lam: float = 1e-3
    step: float = 1e-3
    hidden: tuple = (256, 128, 256)
    activation: str = "tanh"
    output_activation: str = "linear"
    seed: int = 0
    divergence: float = 1e12


AemcResult = namedtuple("AemcResult", ["params", "losses", "steps"])


def train_aemc(x, cfg=None, params=None):
    """Gradient descent with step halving whenever the loss would increase.

    Uses the same architecture defaults and initialization as the proximal
    trainer, so the two differ only in the nonsmooth terms and the update rule.
    """
    cfg = cfg or AemcConfig()
    if params is None:
        dims = fcnn.default_dims(x.shape[0], cfg.hidden)
        params = fcnn.init_params(dims, make_rng(cfg.seed), cfg.activation, cfg.output_activation)
    data, mask = x.data, x.mask
    theta = params.theta()
    step = cfg.step
    loss = fcnn.smooth_objective(params, data, mask, None, cfg.lam).total
    losses, steps = [loss], []
    for _ in range(cfg.max_epochs):
        grad = fcnn.grad_theta(params, data, mask, None, cfg.lam)
        while True:
            cand = params.with_theta(theta - step * grad)
            with np.errstate(over="ignore", invalid="ignore"):
                new_loss = fcnn.smooth_objective(cand, data, mask, None, cfg.lam).total
            if not np.isfinite(new_loss) or new_loss > cfg.divergence:
                if step < 1e-300:
                    raise NumericalFailure("AEMC training diverged (loss %g)" % new_loss)
                step *= 0.5
                continue
            if new_loss > loss:
                step *= 0.5
                if step < 1e-300:
                    raise NumericalFailure("AEMC step size underflow")
                continue
            break
        params, theta, loss = cand, cand.theta(), new_loss
        losses.append(loss)
        steps.append(step)
    return AemcResult(params, losses, steps)
