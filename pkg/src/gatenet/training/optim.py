"""SGD with classical momentum and the poly learning-rate policy."""

from collections import OrderedDict

import numpy as np


class NumericError(RuntimeError):
    """Non-finite loss or gradient during training."""


def poly_lr(iteration, max_iter, base_lr, power=0.9):
    if max_iter <= 0:
        raise ValueError(f"max_iter must be positive, got {max_iter}")
    if not 0 <= iteration <= max_iter:
        raise ValueError(f"iteration {iteration} outside [0, {max_iter}]")
    return base_lr * (1.0 - iteration / max_iter) ** power


def decays(name):
    """Weight decay applies to convolution kernels, not biases."""
    return name.endswith(".weight")


def sgd_step(params, grads, state, lr, momentum=0.9, weight_decay=0.0005):
    """In-place update ``v = m*v + (g + wd*p); p -= lr*v``.

    ``params`` and ``grads`` are name-keyed mappings of arrays (or objects
    with a ``.data`` array); ``state`` holds the velocity buffers and is
    filled lazily.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name!r}")
    for name, p in params.items():
        arr = p.data if hasattr(p, "data") and not isinstance(p, np.ndarray) else p
        g = grads[name]
        if weight_decay and decays(name):
            g = g + weight_decay * arr
        v = state.get(name)
        if v is None:
            v = np.zeros_like(arr)
        v = momentum * v + g
        state[name] = v.astype(arr.dtype, copy=False)
        arr -= (lr * state[name]).astype(arr.dtype, copy=False)
    return params


class SGD:
    def __init__(self, params, momentum=0.9, weight_decay=0.0005):
        self.params = params
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.state = OrderedDict()

    def step(self, grads, lr):
        sgd_step(self.params, grads, self.state, lr, self.momentum, self.weight_decay)
