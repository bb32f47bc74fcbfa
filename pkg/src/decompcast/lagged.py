"""AR-Net: feed-forward maps from ``p`` lags to ``h`` additive forecast
effects, used for auto-regression and for each lagged covariate."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch


def layer_shapes(n_lags, n_forecasts, hidden_layers=()):
    """``(weight_shape, bias_shape or None)`` per layer.

    Hidden layers carry biases; the output layer (and the single layer of the
    linear variant) has none.
    """
    dims = [n_lags, *hidden_layers, n_forecasts]
    shapes = []
    for i in range(len(dims) - 1):
        last = i == len(dims) - 2
        shapes.append(((dims[i + 1], dims[i]), None if last else (dims[i + 1],)))
    return shapes


@dataclass
class ARNetParams:
    weights: list
    biases: list  # one per hidden layer

    def __post_init__(self):
        if len(self.biases) != len(self.weights) - 1:
            raise ValueError("need one bias per hidden layer")

    @property
    def n_lags(self):
        return self.weights[0].shape[1]

    @property
    def n_forecasts(self):
        return self.weights[-1].shape[0]

    @property
    def is_linear(self):
        return len(self.weights) == 1

    @property
    def first_layer(self):
        """The weights the sparsity penalty acts on."""
        return self.weights[0]

    @classmethod
    def zeros(cls, n_lags, n_forecasts, hidden_layers=()):
        shapes = layer_shapes(n_lags, n_forecasts, hidden_layers)
        return cls([np.zeros(w) for w, _ in shapes], [np.zeros(b) for _, b in shapes if b is not None])

    @classmethod
    def init(cls, n_lags, n_forecasts, hidden_layers=(), rng=None):
        """Zero weights for the linear variant; otherwise every layer uniform
        in ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]`` and biases zero."""
        params = cls.zeros(n_lags, n_forecasts, hidden_layers)
        if hidden_layers:
            rng = np.random.default_rng(rng)
            for w in params.weights:
                bound = 1.0 / np.sqrt(w.shape[1])
                w[...] = rng.uniform(-bound, bound, size=w.shape)
        return params


def forward(params, x):
    """Batched forward pass for ``x`` of shape ``(n, p)``.

    Returns the ``(n, h)`` outputs and the activations needed by
    :func:`backward`.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != params.n_lags:
        raise ShapeMismatch(f"expected inputs with {params.n_lags} lags, got shape {x.shape}")
    acts = [x]
    a = x
    for w, b in zip(params.weights[:-1], params.biases):
        a = np.maximum(a @ w.T + b, 0.0)
        acts.append(a)
    return a @ params.weights[-1].T, acts


def backward(params, acts, dy):
    """Gradients ``(dweights, dbiases)`` for upstream gradient ``dy``."""
    dws = [None] * len(params.weights)
    dbs = [None] * len(params.biases)
    g = dy
    for i in range(len(params.weights) - 1, -1, -1):
        dws[i] = g.T @ acts[i]
        if i == 0:
            break
        g = (g @ params.weights[i]) * (acts[i] > 0)
        dbs[i - 1] = g.sum(axis=0)
    return dws, dbs


def arnet_forward(lags, params):
    """AR effects for the next ``h`` steps from ``lags = (y[t-1], ..., y[t-p])``."""
    lags = np.asarray(lags, dtype=float)
    if lags.ndim != 1 or len(lags) != params.n_lags:
        raise ShapeMismatch(f"expected {params.n_lags} lags, got {lags.shape}")
    return forward(params, lags[None, :])[0][0]


def lagged_reg_forward(lags, params):
    """Effect of one covariate from its own recent history; identical to
    :func:`arnet_forward` with covariate inputs."""
    return arnet_forward(lags, params)


def lag_importance(params):
    """Relative importance of each lag: column sums of ``|W_1|``.

    For the linear variant these are the summed absolute coefficients over
    all horizon steps; per-step coefficients are ``params.weights[0]``.
    """
    return np.abs(params.first_layer).sum(axis=0)
