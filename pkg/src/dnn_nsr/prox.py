"""Closed-form proximal operators: l1 shrinkage, nuclear-norm SVT, l-inf box."""
import numpy as np

from .numeric import svd


def soft_threshold(x, t):
    """Elementwise shrinkage ``sign(x) * max(|x| - t, 0)``.

    This is the minimizer of ``t*||y||_1 + 0.5*||y - x||^2``. Entries with
    ``|x| == t`` map to exactly zero.
    """
    if t < 0:
        raise ValueError("threshold must be nonnegative, got %r" % t)
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def svt(w, tau):
    """Singular value thresholding: ``U diag(max(s - tau, 0)) V^T``."""
    if tau < 0:
        raise ValueError("tau must be nonnegative, got %r" % tau)
    u, s, vt = svd(w)
    shrunk = np.maximum(s - tau, 0.0)
    keep = shrunk > 0
    if not np.any(keep):
        return np.zeros_like(np.asarray(w, dtype=np.float64))
    return (u[:, keep] * shrunk[keep]) @ vt[keep]


def clip_linf(theta, m):
    """Projection onto the box ``||theta||_inf <= m``."""
    if m <= 0:
        raise ValueError("box bound must be positive, got %r" % m)
    return np.clip(np.asarray(theta, dtype=np.float64), -m, m)


def nuclear_norm(w):
    return float(np.sum(np.linalg.svd(w, compute_uv=False)))
