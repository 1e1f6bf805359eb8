"""Fully connected autoencoder: forward pass, penalized smooth objective, gradient.

Columns of the input matrix are samples. Layer ``j`` computes
``a_j = W_j z_{j-1} + b_j`` and ``z_j = act(a_j)``; the first ``l`` outputs are
the hidden outputs that the sparsity slack variables track, the last one is the
reconstruction.
"""
from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np

from . import numeric
from .errors import ShapeError

_SCALE_A = 1.71
_SCALE_B = 2.0 / 3.0


def _sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


# tag -> (activation, derivative w.r.t. the pre-activation)
ACTIVATIONS = {
    "tanh": (np.tanh, lambda a: 1.0 - np.tanh(a) ** 2),
    "sigmoid": (_sigmoid, lambda a: _sigmoid(a) * (1.0 - _sigmoid(a))),
    "softplus": (lambda a: np.logaddexp(0.0, a), _sigmoid),
    "scaled_tanh": (lambda a: _SCALE_A * np.tanh(_SCALE_B * a),
                    lambda a: _SCALE_A * _SCALE_B * (1.0 - np.tanh(_SCALE_B * a) ** 2)),
    "linear": (lambda a: a, np.ones_like),
}


@dataclass
class NetworkParams:
    """Weights ``W_j`` (d_j x d_{j-1}) and biases ``b_j`` of an autoencoder.

    ``activation`` is used on every hidden layer, ``output_activation`` on
    the reconstruction layer.
    """

    layer_dims: tuple
    weights: list
    biases: list
    activation: str = "tanh"
    output_activation: str = "linear"

    def __post_init__(self):
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        dims = self.layer_dims
        if len(dims) < 2:
            raise ShapeError("need at least an input and an output layer")
        if dims[0] != dims[-1]:
            raise ShapeError("autoencoder input and output widths differ: %s" % (dims,))
        for tag in (self.activation, self.output_activation):
            if tag not in ACTIVATIONS:
                raise ValueError("unknown activation %r" % tag)
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise ShapeError("expected %d weight matrices and bias vectors" % (len(dims) - 1))
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64).ravel() for b in self.biases]
        for j, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[j + 1], dims[j]) or b.shape != (dims[j + 1],):
                raise ShapeError("layer %d has W %s, b %s for dims %s"
                                 % (j + 1, w.shape, b.shape, dims))

    @property
    def n_layers(self):
        return len(self.layer_dims) - 1

    @property
    def n_hidden(self):
        return len(self.layer_dims) - 2

    def theta(self):
        return numeric.flatten(self.weights, self.biases)

    def with_theta(self, theta):
        weights, biases = numeric.unflatten(theta, self.layer_dims)
        return NetworkParams(self.layer_dims, weights, biases,
                             self.activation, self.output_activation)

    def activation_of(self, j):
        """Activation tag of layer ``j`` (0-based)."""
        return self.output_activation if j == self.n_layers - 1 else self.activation

    def __eq__(self, other):
        if not isinstance(other, NetworkParams):
            return NotImplemented
        return (self.layer_dims == other.layer_dims
                and self.activation == other.activation
                and self.output_activation == other.output_activation
                and np.array_equal(self.theta(), other.theta()))


def init_params(layer_dims, rng, activation="tanh", output_activation="linear"):
    """Uniform Glorot initialization, biases zero."""
    weights, biases = [], []
    for d_in, d_out in zip(layer_dims[:-1], layer_dims[1:]):
        a = np.sqrt(6.0 / (d_in + d_out))
        weights.append(rng.uniform(-a, a, size=(d_out, d_in)))
        biases.append(np.zeros(d_out))
    return NetworkParams(tuple(layer_dims), weights, biases, activation, output_activation)


def default_dims(m, hidden=(256, 128, 256)):
    return (m,) + tuple(hidden) + (m,)


ForwardTrace = namedtuple("ForwardTrace", ["hidden_outputs", "output", "pre_activations"])


def forward(params, x):
    """Run the network on the columns of ``x``; keeps every layer's output."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != params.layer_dims[0]:
        raise ShapeError("input has shape %s, network expects %d rows"
                         % (x.shape, params.layer_dims[0]))
    z = x
    outs, pres = [], []
    for j, (w, b) in enumerate(zip(params.weights, params.biases)):
        a = w @ z + b[:, None]
        z = ACTIVATIONS[params.activation_of(j)][0](a)
        pres.append(a)
        outs.append(z)
    return ForwardTrace(outs[:-1], outs[-1], pres)


@dataclass
class Penalties:
    """Slack variables and penalty weights entering the smooth objective.

    ``h`` and ``v`` may be ``None`` to switch the corresponding penalty off
    (plain regularized autoencoder training).
    """

    h: list = None
    v: list = None
    mu_h: list = field(default_factory=list)
    mu_v: list = field(default_factory=list)


class SmoothObjectiveParts(namedtuple(
        "SmoothObjectiveParts", ["masked_loss", "frob_reg", "h_penalty", "v_penalty"])):
    __slots__ = ()

    @property
    def total(self):
        return self.masked_loss + self.frob_reg + self.h_penalty + self.v_penalty


def _check_penalties(params, n, pen):
    if pen is None:
        return
    if pen.h is not None:
        if len(pen.h) != params.n_hidden or len(pen.mu_h) != params.n_hidden:
            raise ShapeError("need one h matrix and mu_h per hidden layer")
        for i, h in enumerate(pen.h):
            if h.shape != (params.layer_dims[i + 1], n):
                raise ShapeError("h[%d] has shape %s" % (i, h.shape))
    if pen.v is not None:
        if len(pen.v) != params.n_layers or len(pen.mu_v) != params.n_layers:
            raise ShapeError("need one V matrix and mu_v per layer")
        for j, (v, w) in enumerate(zip(pen.v, params.weights)):
            if v.shape != w.shape:
                raise ShapeError("V[%d] has shape %s, W has %s" % (j, v.shape, w.shape))


def _check_data(params, x, mask):
    x = np.asarray(x, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if x.shape != mask.shape:
        raise ShapeError("data %s and mask %s differ in shape" % (x.shape, mask.shape))
    if x.ndim != 2 or x.shape[0] != params.layer_dims[0]:
        raise ShapeError("data has shape %s, network expects %d rows"
                         % (x.shape, params.layer_dims[0]))
    return x, mask


def smooth_objective(params, x, mask, penalties=None, lam=0.0, trace=None):
    """Masked squared loss + lam * sum ||W||_F^2 + quadratic slack penalties.

    The loss is the unnormalized ``||N * (X - Xhat)||_F^2``.
    """
    x, mask = _check_data(params, x, mask)
    _check_penalties(params, x.shape[1], penalties)
    if trace is None:
        trace = forward(params, x)
    masked_loss = float(np.sum((mask * (trace.output - x)) ** 2))
    frob = float(lam * sum(np.sum(w * w) for w in params.weights))
    h_pen = v_pen = 0.0
    if penalties is not None and penalties.h is not None:
        h_pen = float(sum(np.sum((z - h) ** 2) / (2.0 * mu)
                          for z, h, mu in zip(trace.hidden_outputs, penalties.h, penalties.mu_h)))
    if penalties is not None and penalties.v is not None:
        v_pen = float(sum(np.sum((w - v) ** 2) / (2.0 * mu)
                          for w, v, mu in zip(params.weights, penalties.v, penalties.mu_v)))
    return SmoothObjectiveParts(masked_loss, frob, h_pen, v_pen)


def grad_theta(params, x, mask, penalties=None, lam=0.0, trace=None):
    """Gradient of :func:`smooth_objective` with respect to the flat parameters."""
    x, mask = _check_data(params, x, mask)
    _check_penalties(params, x.shape[1], penalties)
    if trace is None:
        trace = forward(params, x)
    use_h = penalties is not None and penalties.h is not None
    use_v = penalties is not None and penalties.v is not None
    n_layers = params.n_layers
    inputs = [x] + list(trace.hidden_outputs)
    gw = [None] * n_layers
    gb = [None] * n_layers
    dz = 2.0 * mask * (trace.output - x)
    for j in range(n_layers - 1, -1, -1):
        delta = dz * ACTIVATIONS[params.activation_of(j)][1](trace.pre_activations[j])
        gw[j] = delta @ inputs[j].T + 2.0 * lam * params.weights[j]
        if use_v:
            gw[j] += (params.weights[j] - penalties.v[j]) / penalties.mu_v[j]
        gb[j] = delta.sum(axis=1)
        if j > 0:
            dz = params.weights[j].T @ delta
            if use_h:
                dz = dz + (trace.hidden_outputs[j - 1] - penalties.h[j - 1]) / penalties.mu_h[j - 1]
    return numeric.flatten(gw, gb)
