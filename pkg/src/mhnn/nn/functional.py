"""Differentiable ops used by the network. All take and return ``Tensor``."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, accumulate, as_tensor, is_recording, make_result

BN_EPS = 1e-7
PROB_EPS = 1e-7


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"add: shape mismatch {a.shape} vs {b.shape}")

    def _backward(g):
        accumulate(a, g)
        accumulate(b, g)

    return make_result(a.data + b.data, (a, b), _backward)


def add_n(tensors) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    shape = tensors[0].shape
    if any(t.shape != shape for t in tensors):
        raise ValueError("add_n: shape mismatch")
    out = tensors[0].data.copy()
    for t in tensors[1:]:
        out = out + t.data

    def _backward(g):
        for t in tensors:
            accumulate(t, g)

    return make_result(out, tensors, _backward)


def concat(tensors, axis: int = 1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def _backward(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            index = [slice(None)] * g.ndim
            index[axis] = slice(lo, hi)
            accumulate(t, g[tuple(index)])

    return make_result(np.concatenate([t.data for t in tensors], axis=axis), tensors, _backward)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)

    def _backward(g):
        accumulate(x, g.reshape(x.shape))

    return make_result(x.data.reshape(shape), (x,), _backward)


def flatten(x) -> Tensor:
    """(B, ...) -> (B, prod(...))."""
    x = as_tensor(x)
    return reshape(x, (x.shape[0], -1))


def conv1d(x, weight, bias=None) -> Tensor:
    """Cross-correlation with zero 'same' padding: (B, Cin, T) -> (B, Cout, T)."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.data.ndim != 3:
        raise ValueError(f"conv1d expects (B, C, T), got {x.shape}")
    c_out, c_in, k = weight.shape
    if x.shape[1] != c_in:
        raise ValueError(f"conv1d: input has {x.shape[1]} channels, kernel expects {c_in}")
    if k % 2 == 0:
        raise ValueError("conv1d: kernel size must be odd")
    bsz, _, length = x.shape
    pad = (k - 1) // 2
    xp = np.zeros((bsz, c_in, length + 2 * pad), dtype=x.dtype)
    xp[:, :, pad : pad + length] = x.data
    # cols[b*T + t, c*k + j] = xp[b, c, t + j]
    s0, s1, s2 = xp.strides
    windows = np.ndarray((bsz, length, c_in, k), dtype=xp.dtype, buffer=xp, strides=(s0, s2, s1, s2))
    cols = windows.reshape(bsz * length, c_in * k)
    wmat = weight.data.reshape(c_out, c_in * k)
    out = cols @ wmat.T
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data
    out = out.reshape(bsz, length, c_out).transpose(0, 2, 1)
    parents = (x, weight) if bias is None else (x, weight, bias)

    def _backward(g):
        g2 = g.transpose(0, 2, 1).reshape(bsz * length, c_out)
        if weight.requires_grad:
            accumulate(weight, (g2.T @ cols).reshape(weight.shape))
        if bias is not None and bias.requires_grad:
            accumulate(bias, g.sum(axis=(0, 2)))
        if x.requires_grad:
            dcols = (g2 @ wmat).reshape(bsz, length, c_in, k)
            dxp = np.zeros_like(xp)
            for j in range(k):
                dxp[:, :, j : j + length] += dcols[:, :, :, j].transpose(0, 2, 1)
            accumulate(x, dxp[:, :, pad : pad + length])

    return make_result(np.ascontiguousarray(out), parents, _backward)


def batch_norm1d(
    x,
    gamma,
    beta,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = BN_EPS,
) -> Tensor:
    """Per-channel normalization over batch and time.

    In training mode the running statistics (plain arrays) are updated in
    place with an exponential moving average of the biased batch statistics.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if x.data.ndim != 3:
        raise ValueError(f"batch_norm1d expects (B, C, T), got {x.shape}")
    g_ = gamma.data[None, :, None]
    if training:
        n = x.shape[0] * x.shape[2]
        if n < 2:
            raise ValueError("degenerate batch")
        mean = x.data.mean(axis=(0, 2))
        var = x.data.var(axis=(0, 2))
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * var
    else:
        mean, var = running_mean, running_var
    inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    if not training and not (is_recording() and (x.requires_grad or gamma.requires_grad or beta.requires_grad)):
        # frozen statistics and nothing to differentiate: one fused affine map
        scale = gamma.data * inv_std
        shift = beta.data - mean.astype(x.dtype) * scale
        return Tensor(x.data * scale[None, :, None] + shift[None, :, None])
    xhat = (x.data - mean.astype(x.dtype)[None, :, None]) * inv_std[None, :, None]
    out = xhat * g_ + beta.data[None, :, None]

    def _backward(g):
        accumulate(gamma, (g * xhat).sum(axis=(0, 2)))
        accumulate(beta, g.sum(axis=(0, 2)))
        if not x.requires_grad:
            return
        dxhat = g * g_
        if training:
            m = x.shape[0] * x.shape[2]
            s1 = dxhat.sum(axis=(0, 2), keepdims=True)
            s2 = (dxhat * xhat).sum(axis=(0, 2), keepdims=True)
            dx = (inv_std[None, :, None] / m) * (m * dxhat - s1 - xhat * s2)
        else:
            dx = dxhat * inv_std[None, :, None]
        accumulate(x, dx)

    return make_result(out, (x, gamma, beta), _backward)


def relu(x) -> Tensor:
    x = as_tensor(x)

    def _backward(g):
        accumulate(x, g * (x.data > 0))

    return make_result(np.maximum(x.data, 0), (x,), _backward)


def leaky_relu(x, slope: float = 0.01) -> Tensor:
    """``max(0, x) + slope * min(0, x)``; the derivative at 0 is taken as ``slope``."""
    x = as_tensor(x)
    out = np.maximum(x.data, 0) + slope * np.minimum(x.data, 0)

    def _backward(g):
        accumulate(x, g * np.where(x.data > 0, 1.0, slope).astype(g.dtype))

    return make_result(out, (x,), _backward)


def dropout(x, p: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: survivors are scaled by ``1 / (1 - p)`` at train time."""
    if not 0 <= p < 1:
        raise ValueError("dropout probability must be in [0, 1)")
    x = as_tensor(x)
    if not training or p == 0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    mask = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)

    def _backward(g):
        accumulate(x, g * mask)

    return make_result(x.data * mask, (x,), _backward)


def linear(x, weight, bias=None) -> Tensor:
    """(B, in) -> (B, out) with ``weight`` of shape (out, in)."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.data.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ValueError(f"linear: input {x.shape} does not match weight {weight.shape}")
    out = x.data @ weight.data.T
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data
    parents = (x, weight) if bias is None else (x, weight, bias)

    def _backward(g):
        accumulate(x, g @ weight.data)
        accumulate(weight, g.T @ x.data)
        if bias is not None:
            accumulate(bias, g.sum(axis=0))

    return make_result(out, parents, _backward)


def softmax(logits) -> Tensor:
    logits = as_tensor(logits)
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def _backward(g):
        accumulate(logits, y * (g - (g * y).sum(axis=-1, keepdims=True)))

    return make_result(y, (logits,), _backward)


def _check_one_hot(labels: np.ndarray) -> None:
    ok = labels.ndim == 2 and np.all((labels == 0) | (labels == 1)) and np.all(labels.sum(axis=1) == 1)
    if not ok:
        raise ValueError("labels must be one-hot rows")


def cross_entropy(probs, labels, eps: float = PROB_EPS) -> Tensor:
    """Batch mean of ``-sum_k [y log p + (1 - y) log(1 - p)]``, probabilities
    clamped to ``[eps, 1 - eps]`` first."""
    probs = as_tensor(probs)
    y = np.asarray(labels.data if isinstance(labels, Tensor) else labels)
    if y.shape != probs.shape:
        raise ValueError(f"labels shape {y.shape} does not match probabilities {probs.shape}")
    _check_one_hot(y)
    y = y.astype(probs.dtype)
    p = np.clip(probs.data, eps, 1.0 - eps)
    per_sample = -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)).sum(axis=1)
    bsz = probs.shape[0]
    inside = (probs.data >= eps) & (probs.data <= 1.0 - eps)

    def _backward(g):
        dp = -(y / p - (1.0 - y) / (1.0 - p)) * inside / bsz
        accumulate(probs, (g * dp).astype(probs.dtype))

    return make_result(np.asarray(per_sample.mean(), dtype=probs.dtype), (probs,), _backward)


def one_hot(labels, num_classes: int, dtype=np.float64) -> np.ndarray:
    labels = np.asarray(labels)
    out = np.zeros((labels.size, num_classes), dtype=dtype)
    out[np.arange(labels.size), labels] = 1
    return out


def _pool_matrix(n_in: int, n_out: int, dtype) -> np.ndarray:
    """Column j averages input bins [floor(j*n/m), ceil((j+1)*n/m))."""
    mat = np.zeros((n_in, n_out), dtype=dtype)
    for j in range(n_out):
        lo = (j * n_in) // n_out
        hi = -((-(j + 1) * n_in) // n_out)
        mat[lo:hi, j] = 1.0 / (hi - lo)
    return mat


def adaptive_avg_pool1d(x, out_len: int) -> Tensor:
    x = as_tensor(x)
    n_in = x.shape[-1]
    if n_in == out_len:
        return x
    mat = _pool_matrix(n_in, out_len, x.dtype)

    def _backward(g):
        accumulate(x, g @ mat.T)

    return make_result(x.data @ mat, (x,), _backward)


def global_avg_pool1d(x) -> Tensor:
    """(B, C, T) -> (B, C)."""
    x = as_tensor(x)
    t = x.shape[-1]

    def _backward(g):
        accumulate(x, np.repeat(g[..., None] / t, t, axis=-1))

    return make_result(x.data.mean(axis=-1), (x,), _backward)


def tile_time(x, length: int) -> Tensor:
    """(B, F) -> (B, F, length), copying the vector to every time step."""
    x = as_tensor(x)

    def _backward(g):
        accumulate(x, g.sum(axis=-1))

    return make_result(np.repeat(x.data[..., None], length, axis=-1), (x,), _backward)
