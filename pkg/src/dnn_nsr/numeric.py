"""Dense linear-algebra helpers, seeded generators and parameter (un)flattening.

Matrices are plain ``numpy.ndarray`` objects of dtype float64; ``as_matrix``
validates them at public boundaries.
"""
from collections import namedtuple

import numpy as np

from .errors import NumericalFailure, ShapeError

Svd = namedtuple("Svd", ["u", "singular_values", "vt"])


def as_matrix(a, name="matrix"):
    """Return ``a`` as a finite 2-D float64 array or raise."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError("%s must be 2-D, got shape %s" % (name, arr.shape))
    if not np.all(np.isfinite(arr)):
        raise ValueError("%s contains NaN or Inf" % name)
    return arr


def make_rng(seed):
    """Seeded generator backed by the counter-based Philox4x64 bit generator.

    Philox is used explicitly (never numpy's default) so that a given seed
    yields the same stream on every platform.
    """
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))


def svd(a):
    """Thin SVD with a deterministic sign convention.

    Each left singular vector is flipped so its largest-magnitude entry is
    nonnegative; the matching row of ``vt`` is flipped with it.
    """
    a = as_matrix(a)
    if a.size == 0:
        raise ShapeError("svd of an empty matrix")
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure("SVD did not converge: %s" % exc) from exc
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[idx, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return Svd(u * signs, s, vt * signs[:, None])


def param_count(layer_dims):
    return sum(d_out * d_in + d_out for d_in, d_out in zip(layer_dims[:-1], layer_dims[1:]))


def flatten(weights, biases):
    """Column-wise vec of every weight matrix, then every bias, in layer order."""
    parts = [np.asarray(w, dtype=np.float64).ravel(order="F") for w in weights]
    parts += [np.asarray(b, dtype=np.float64).ravel() for b in biases]
    return np.concatenate(parts)


def unflatten(theta, layer_dims):
    """Inverse of :func:`flatten`; returns ``(weights, biases)`` lists."""
    theta = np.asarray(theta, dtype=np.float64)
    layer_dims = [int(d) for d in layer_dims]
    expected = param_count(layer_dims)
    if theta.ndim != 1 or theta.size != expected:
        raise ShapeError("theta has %d entries, layer dims %s need %d"
                         % (theta.size, layer_dims, expected))
    weights, biases = [], []
    pos = 0
    for d_in, d_out in zip(layer_dims[:-1], layer_dims[1:]):
        size = d_in * d_out
        weights.append(theta[pos:pos + size].reshape((d_out, d_in), order="F").copy())
        pos += size
    for d_out in layer_dims[1:]:
        biases.append(theta[pos:pos + d_out].copy())
        pos += d_out
    return weights, biases
