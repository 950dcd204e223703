"""Finite-difference check of the analytic BPTT gradients."""
from __future__ import annotations

import numpy as np

from ..rnn import init_params
from ..trainer import ObjectiveConfig, batch_loss, bptt_gradients, frame_change

__all__ = ["gradient_check"]


def gradient_check(kind: str, n_in: int = 8, n_hidden: int = 5, steps: int = 7, batch: int = 3,
                   seed: int = 1, h: float = 1e-5, scale: float = 0.3) -> dict[str, float]:
    """Max relative error per parameter tensor, analytic vs central differences.

    Parameters are the default init plus N(0, ``scale``) noise so that no
    gate sits at its symmetric starting point. Inputs are uniform in [0, 1]
    and epsilon is the median frame change, so both weights occur.
    """
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 1.0, (batch, steps + 1, n_in))
    inputs, targets = x[:, :-1], x[:, 1:]
    cfg = ObjectiveConfig(epsilon=float(np.median(frame_change(inputs, targets))))
    params = init_params(kind, n_in, n_hidden, seed=seed)
    for name in params.arrays:
        params.arrays[name] = params.arrays[name] + rng.normal(0.0, scale, params.arrays[name].shape)
    _, grads = bptt_gradients(params, inputs, targets, cfg, truncation=steps)
    errors = {}
    for name, a in params.arrays.items():
        num = np.zeros_like(a)
        for idx in np.ndindex(a.shape):
            orig = a[idx]
            a[idx] = orig + h
            up = batch_loss(params, inputs, targets, cfg)
            a[idx] = orig - h
            down = batch_loss(params, inputs, targets, cfg)
            a[idx] = orig
            num[idx] = (up - down) / (2.0 * h)
        denom = np.maximum(np.maximum(np.abs(num), np.abs(grads[name])), 1e-8)
        errors[name] = float(np.max(np.abs(num - grads[name]) / denom))
    return errors
