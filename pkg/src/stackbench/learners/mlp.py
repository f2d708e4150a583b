"""Feedforward all-sigmoid network trained by minibatch SGD with momentum.

Layer weights initialize uniform in +/- 1/sqrt(fan_in), biases at zero.
Classical momentum: v <- mu*v - lr*g; w <- w + v.  Row order reshuffles
every epoch from the fit rng, and an optional bootstrap_fraction fits on a
without-replacement subsample (the "bootstrap size" knob).
"""

from __future__ import annotations

import numpy as np

from ..core import Dataset, FitError, SeededRng
from .base import FittedModel, register_model, subsample_indices
from .specs import Mlp


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def init_params(n_features: int, hidden_sizes, gen: np.random.Generator):
    sizes = [n_features, *hidden_sizes, 1]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(gen.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out, dtype=np.float64))
    return weights, biases


def forward(weights, biases, X):
    """Activations per layer; activations[-1][:, 0] is the output probability."""
    acts = [X]
    a = X
    for W, b in zip(weights, biases):
        a = _sigmoid(a @ W + b)
        acts.append(a)
    return acts


def loss_and_grads(weights, biases, X, y):
    """Mean cross-entropy and its exact gradients (backprop)."""
    acts = forward(weights, biases, X)
    out = acts[-1][:, 0]
    eps = 1e-12
    clipped = np.clip(out, eps, 1.0 - eps)
    loss = float(-np.mean(y * np.log(clipped) + (1.0 - y) * np.log(1.0 - clipped)))

    n = X.shape[0]
    delta = ((out - y) / n)[:, None]          # sigmoid + cross-entropy
    grads_w = [None] * len(weights)
    grads_b = [None] * len(biases)
    for layer in range(len(weights) - 1, -1, -1):
        a_prev = acts[layer]
        grads_w[layer] = a_prev.T @ delta
        grads_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ weights[layer].T) * a_prev * (1.0 - a_prev)
    return loss, grads_w, grads_b


@register_model
class MlpModel(FittedModel):
    family = "mlp"

    def __init__(self, spec, n_features, seed, weights, biases):
        super().__init__(spec, n_features, seed)
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]

    def _predict(self, X):
        return forward(self.weights, self.biases, X)[-1][:, 0]

    def _params_doc(self):
        return {
            "weights": [[list(map(float, row)) for row in W] for W in self.weights],
            "biases": [list(map(float, b)) for b in self.biases],
        }

    @classmethod
    def _from_params(cls, spec, n_features, params):
        weights = [np.asarray(W, dtype=np.float64) for W in params["weights"]]
        biases = [np.asarray(b, dtype=np.float64) for b in params["biases"]]
        return cls(spec, n_features, 0, weights, biases)


def fit_mlp(spec: Mlp, data: Dataset, rng: SeededRng) -> MlpModel:
    y_all = data.labels.astype(np.float64)
    if y_all.min() == y_all.max():
        raise FitError("[mlp] training data holds a single class")
    X = data.features
    if spec.bootstrap_fraction is not None:
        rows = subsample_indices(
            data.n_rows, spec.bootstrap_fraction, rng.child("bootstrap").gen
        )
        X = X[rows]
        y_all = y_all[rows]
    n = X.shape[0]

    weights, biases = init_params(data.n_features, spec.hidden_sizes,
                                  rng.child("init").gen)
    vel_w = [np.zeros_like(W) for W in weights]
    vel_b = [np.zeros_like(b) for b in biases]
    shuffle_gen = rng.child("shuffle").gen
    lr = spec.learning_rate
    mu = spec.momentum

    for _ in range(spec.epochs):
        perm = shuffle_gen.permutation(n)
        for start in range(0, n, spec.batch_size):
            batch = perm[start:start + spec.batch_size]
            _, gw, gb = loss_and_grads(weights, biases, X[batch], y_all[batch])
            for i in range(len(weights)):
                vel_w[i] = mu * vel_w[i] - lr * gw[i]
                vel_b[i] = mu * vel_b[i] - lr * gb[i]
                weights[i] = weights[i] + vel_w[i]
                biases[i] = biases[i] + vel_b[i]

    return MlpModel(spec, data.n_features, rng.key_hash, weights, biases)
