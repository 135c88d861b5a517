"""Adaptive-moment optimizer with bias correction."""

import numpy as np

from .params import ParamStore


class DivergenceError(RuntimeError):
    """Raised when gradients or the loss become non-finite."""


def adam_step(
    store: ParamStore,
    grads: dict[str, np.ndarray],
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> ParamStore:
    """One in-place Adam update; returns the store for chaining.

    Parameters without an entry in ``grads`` are left untouched.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient for parameter {name!r}")
    store.step += 1
    t = store.step
    corr1 = 1.0 - beta1**t
    corr2 = 1.0 - beta2**t
    for name, g in grads.items():
        g = g.astype(store.arrays[name].dtype, copy=False)
        m = store.m[name]
        v = store.v[name]
        m += (1.0 - beta1) * (g - m)
        v += (1.0 - beta2) * (g * g - v)
        store.arrays[name] -= lr * (m / corr1) / (np.sqrt(v / corr2) + eps)
    return store
