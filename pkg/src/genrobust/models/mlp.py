"""Dense tanh networks: forward pass, Jacobians, backprop.

Parameters are a list of ``(W, b)`` pairs with ``W`` of shape (out, in).  All
hidden layers use tanh; the output layer is affine.
"""

import numpy as np


def init_params(widths, rng, gain=1.0):
    """Glorot-uniform weights, zero biases."""
    params = []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        limit = gain * np.sqrt(6.0 / (fan_in + fan_out))
        W = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        params.append((W, np.zeros(fan_out)))
    return params


def widths_of(params):
    return [params[0][0].shape[1]] + [W.shape[0] for W, _ in params]


def forward(params, X):
    """Return the output and the list of hidden activations."""
    h = X
    hidden = []
    for W, b in params[:-1]:
        h = np.tanh(h @ W.T + b)
        hidden.append(h)
    W, b = params[-1]
    return h @ W.T + b, hidden


def jacobian(params, X):
    """Per-row Jacobian of the output, shape (n, out, in)."""
    _, hidden = forward(params, X)
    n = X.shape[0]
    J = np.broadcast_to(params[-1][0], (n,) + params[-1][0].shape)
    for (W, _), h in zip(params[-2::-1], hidden[::-1]):
        J = (J * (1.0 - h * h)[:, None, :]) @ W
    return np.ascontiguousarray(J)


def vjp(params, X, U):
    """Rows of J(x)^T u for each (x, u) pair."""
    _, hidden = forward(params, X)
    g = U @ params[-1][0]
    for (W, _), h in zip(params[-2::-1], hidden[::-1]):
        g = (g * (1.0 - h * h)) @ W
    return g


def jvp(params, X, V):
    """Rows of J(x) v, by forward-mode propagation."""
    h = X
    t = V
    for W, b in params[:-1]:
        h = np.tanh(h @ W.T + b)
        t = (t @ W.T) * (1.0 - h * h)
    return t @ params[-1][0].T


def backward(params, X, hidden, grad_out):
    """Parameter gradients for a loss whose output-gradient is ``grad_out``."""
    grads = [None] * len(params)
    g = grad_out
    inputs = [X] + hidden
    for layer in range(len(params) - 1, -1, -1):
        W, _ = params[layer]
        a = inputs[layer]
        grads[layer] = (g.T @ a, g.sum(axis=0))
        if layer > 0:
            h = hidden[layer - 1]
            g = (g @ W) * (1.0 - h * h)
    return grads


def params_to_lists(params):
    return [{"W": W.tolist(), "b": b.tolist()} for W, b in params]


def params_from_lists(layers):
    params = []
    for layer in layers:
        W = np.asarray(layer["W"], dtype=float)
        b = np.asarray(layer["b"], dtype=float)
        if W.ndim != 2 or b.shape != (W.shape[0],):
            raise ValueError("malformed layer in MLP weights")
        params.append((W, b))
    return params
