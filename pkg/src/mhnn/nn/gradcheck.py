from __future__ import annotations

import numpy as np

from .tensor import backward, no_grad


def relative_error(analytic, numeric, floor: float = 1e-8) -> np.ndarray:
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def gradient_check(loss_fn, params, h: float = 1e-5, max_per_param: int | None = None,
                   rng: np.random.Generator | None = None, details: bool = False):
    """Compare tape gradients with central differences.

    ``loss_fn()`` must rebuild the scalar loss from the current parameter
    values and be deterministic (64-bit, dropout off). ``params`` is a list
    of ``(name, Tensor)``. At most ``max_per_param`` entries of each tensor are
    probed (all of them when ``None``). Returns the max relative error, or a
    ``(max_error, per_name_max)`` pair when ``details`` is set.
    """
    params = list(params)
    for _, p in params:
        if p.data.dtype != np.float64:
            raise ValueError("gradient_check requires 64-bit parameters")
        p.grad = None
    loss = loss_fn()
    backward(loss)
    rng = rng or np.random.default_rng(0)

    worst = 0.0
    per_name = {}
    for name, p in params:
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_per_param is not None and flat.size > max_per_param:
            idx = np.sort(rng.choice(flat.size, max_per_param, replace=False))
        numeric = np.empty(idx.size)
        with no_grad():
            for n, i in enumerate(idx):
                orig = flat[i]
                flat[i] = orig + h
                up = float(loss_fn().data)
                flat[i] = orig - h
                down = float(loss_fn().data)
                flat[i] = orig
                numeric[n] = (up - down) / (2 * h)
        err = float(relative_error(analytic.reshape(-1)[idx], numeric).max()) if idx.size else 0.0
        per_name[name] = err
        worst = max(worst, err)
    return (worst, per_name) if details else worst
