"""Latent labelling rules and SGD training of small MLP classifiers.

Training data are fresh (g(z), label(z)) pairs drawn every epoch from a keyed
stream, so a run is fully determined by its ``TrainingConfig``.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .. import _kernels, rng as _rng
from ..errors import DomainError, TrainingError
from . import mlp
from .classifiers import MlpClassifier


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 100
    epochs: int = 20
    samples_per_epoch: int = 5000
    seed: int = 0
    init_gain: float = 1.0

    def __post_init__(self):
        if not self.learning_rate > 0 or self.batch_size < 1 or self.epochs < 1 or not self.init_gain > 0:
            raise DomainError("need learning_rate > 0, batch_size >= 1, epochs >= 1, init_gain > 0")


class TrainingResult(NamedTuple):
    model: MlpClassifier
    train_accuracy: float
    losses: list


# -- labelling rules -------------------------------------------------------

class SignOracle:
    """Label 0 where z[axis] >= threshold, else 1."""

    num_classes = 2

    def __init__(self, axis=0, threshold=0.0):
        self.axis, self.threshold = int(axis), float(threshold)

    def __call__(self, Z):
        return (Z[:, self.axis] < self.threshold).astype(np.int64)

    def to_dict(self):
        return {"kind": "sign", "axis": self.axis, "threshold": self.threshold}


class CheckerboardOracle:
    num_classes = 2

    def __call__(self, Z):
        return _kernels.checkerboard_parity(Z)

    def to_dict(self):
        return {"kind": "checkerboard"}


class WavyOracle:
    """Label 0 where z_0 + amplitude * sin(frequency * z_1) >= 0."""

    num_classes = 2

    def __init__(self, amplitude=0.5, frequency=2.0):
        self.amplitude, self.frequency = float(amplitude), float(frequency)

    def __call__(self, Z):
        return (Z[:, 0] + self.amplitude * np.sin(self.frequency * Z[:, 1]) < 0).astype(np.int64)

    def to_dict(self):
        return {"kind": "wavy", "amplitude": self.amplitude, "frequency": self.frequency}


class ArgmaxLinearOracle:
    """Label = argmax_k <w_k, z>; K cones through the origin."""

    def __init__(self, W):
        self.W = np.atleast_2d(np.asarray(W, dtype=float))
        self.num_classes = self.W.shape[0]

    @classmethod
    def random(cls, num_classes, dim, seed):
        return cls(_rng.substream(seed, _rng.INIT, 1).standard_normal((num_classes, dim)))

    def __call__(self, Z):
        return np.argmax(Z @ self.W.T, axis=1)

    def to_dict(self):
        return {"kind": "argmax_linear", "W": self.W.tolist()}


def oracle_from_dict(d):
    kind = d.get("kind")
    if kind == "sign":
        return SignOracle(d.get("axis", 0), d.get("threshold", 0.0))
    if kind == "checkerboard":
        return CheckerboardOracle()
    if kind == "wavy":
        return WavyOracle(d.get("amplitude", 0.5), d.get("frequency", 2.0))
    if kind == "argmax_linear":
        if "W" in d:
            return ArgmaxLinearOracle(d["W"])
        return ArgmaxLinearOracle.random(d["num_classes"], d["dim"], d.get("seed", 0))
    raise DomainError(f"unknown label oracle {kind!r}")


# -- training ----------------------------------------------------------------

def _softmax_xent(logits, y):
    shifted = logits - logits.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = -logp[np.arange(len(y)), y].mean()
    grad = np.exp(logp)
    grad[np.arange(len(y)), y] -= 1.0
    return loss, grad / len(y)


def train_mlp_classifier(g, label_oracle, cfg=None, hidden=(32, 32)):
    """SGD with momentum on cross-entropy over freshly generated samples."""
    cfg = cfg or TrainingConfig()
    K = label_oracle.num_classes
    widths = [g.image_dim, *hidden, K]
    params = mlp.init_params(widths, _rng.substream(cfg.seed, _rng.TRAIN, 0), cfg.init_gain)
    velocity = [(np.zeros_like(W), np.zeros_like(b)) for W, b in params]
    losses = []
    N = cfg.samples_per_epoch
    for epoch in range(cfg.epochs):
        Z = _rng.keyed_normals(cfg.seed, _rng.TRAIN, epoch * N, N, g.latent_dim)
        X, y = g.forward(Z), label_oracle(Z)
        epoch_loss = 0.0
        for lo in range(0, N, cfg.batch_size):
            xb, yb = X[lo:lo + cfg.batch_size], y[lo:lo + cfg.batch_size]
            logits, hidden_acts = mlp.forward(params, xb)
            loss, gout = _softmax_xent(logits, yb)
            if not math.isfinite(loss):
                raise TrainingError(f"loss became {loss} in epoch {epoch}", epoch, loss)
            grads = mlp.backward(params, xb, hidden_acts, gout)
            new_params, new_vel = [], []
            for (W, b), (vW, vb), (gW, gb) in zip(params, velocity, grads):
                vW = cfg.momentum * vW - cfg.learning_rate * gW
                vb = cfg.momentum * vb - cfg.learning_rate * gb
                new_params.append((W + vW, b + vb))
                new_vel.append((vW, vb))
            params, velocity = new_params, new_vel
            epoch_loss += loss * len(yb)
        losses.append(epoch_loss / N)
    model = MlpClassifier(params)
    accuracy = float(np.mean(model.predict(X) == y))
    return TrainingResult(model, accuracy, losses)
