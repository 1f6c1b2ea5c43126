"""Parameter containers built on the functional ops."""

from __future__ import annotations

import math

import numpy as np

from . import functional as F
from .tensor import Tensor


def parameter(data) -> Tensor:
    return Tensor(np.array(data), requires_grad=True)


def fan_in_uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> Tensor:
    bound = math.sqrt(6.0 / fan_in)
    return parameter(rng.uniform(-bound, bound, size=shape).astype(dtype))


class Module:
    """Minimal container: parameters are ``Tensor`` attributes with
    ``requires_grad``; buffers are numpy arrays listed in ``_buffer_names``;
    submodules are ``Module`` attributes or lists/dicts of them."""

    training: bool = True
    _buffer_names: tuple[str, ...] = ()

    def _children(self):
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, v in enumerate(value):
                    if isinstance(v, Module):
                        yield f"{name}.{i}", v
            elif isinstance(value, dict):
                for k, v in value.items():
                    if isinstance(v, Module):
                        yield f"{name}.{k}", v

    def named_parameters(self, prefix: str = ""):
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + name, value
        for name, child in self._children():
            yield from child.named_parameters(f"{prefix}{name}.")

    def named_buffers(self, prefix: str = ""):
        for name in self._buffer_names:
            yield prefix + name, getattr(self, name)
        for name, child in self._children():
            yield from child.named_buffers(f"{prefix}{name}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def train(self, mode: bool = True):
        self.training = mode
        for _, child in self._children():
            child.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class Conv1DBlock(Module):
    """Conv1D -> BatchNorm -> ReLU, length-preserving."""

    _buffer_names = ("bn_running_mean", "bn_running_var")

    def __init__(self, in_ch: int, out_ch: int, kernel_size: int, rng, dtype=np.float32, momentum=0.1):
        if kernel_size % 2 == 0:
            raise ValueError("kernel_size must be odd")
        self.kernel_size = kernel_size
        self.momentum = momentum
        self.kernel = fan_in_uniform(rng, (out_ch, in_ch, kernel_size), in_ch * kernel_size, dtype)
        self.bias = parameter(np.zeros(out_ch, dtype=dtype))
        self.bn_gamma = parameter(np.ones(out_ch, dtype=dtype))
        self.bn_beta = parameter(np.zeros(out_ch, dtype=dtype))
        self.bn_running_mean = np.zeros(out_ch, dtype=dtype)
        self.bn_running_var = np.ones(out_ch, dtype=dtype)

    @property
    def out_channels(self) -> int:
        return self.kernel.shape[0]

    def forward(self, x):
        y = F.conv1d(x, self.kernel, self.bias)
        y = F.batch_norm1d(
            y, self.bn_gamma, self.bn_beta, self.bn_running_mean, self.bn_running_var,
            training=self.training, momentum=self.momentum,
        )
        return F.relu(y)


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng, dtype=np.float32):
        self.weight = fan_in_uniform(rng, (out_features, in_features), in_features, dtype)
        self.bias = parameter(np.zeros(out_features, dtype=dtype))

    def forward(self, x):
        return F.linear(x, self.weight, self.bias)


class ConvStack(Module):
    """Plain sequence of Conv1D blocks, one per kernel size."""

    def __init__(self, in_ch: int, filters: int, kernels, rng, dtype=np.float32):
        self.blocks = []
        ch = in_ch
        for k in kernels:
            self.blocks.append(Conv1DBlock(ch, filters, k, rng, dtype))
            ch = filters

    def forward(self, x):
        for block in self.blocks:
            x = block(x)
        return x


class ResidualConvStack(Module):
    """Conv1D blocks with a skip around each consecutive pair; a trailing odd
    block is applied plainly. When the first pair changes the channel count
    the skip goes through a 1x1 projection."""

    def __init__(self, in_ch: int, filters: int, kernels, rng, dtype=np.float32):
        self.blocks = []
        ch = in_ch
        for k in kernels:
            self.blocks.append(Conv1DBlock(ch, filters, k, rng, dtype))
            ch = filters
        self.projection = None
        if in_ch != filters and len(kernels) >= 2:
            self.projection = fan_in_uniform(rng, (filters, in_ch, 1), in_ch, dtype)

    def forward(self, x):
        n = len(self.blocks)
        i = 0
        while i + 1 < n:
            shortcut = x
            if i == 0 and self.projection is not None:
                shortcut = F.conv1d(x, self.projection)
            x = self.blocks[i + 1](self.blocks[i](x))
            x = F.add(x, shortcut)
            i += 2
        if i < n:
            x = self.blocks[i](x)
        return x


class MLP(Module):
    """Stack of Linear -> LeakyReLU -> Dropout layers."""

    def __init__(self, in_features: int, width: int, depth: int, rng, slope=0.01, p=0.2,
                 dropout_rng=None, dtype=np.float32):
        self.slope = slope
        self.p = p
        self.dropout_rng = dropout_rng
        self.layers = []
        n = in_features
        for _ in range(depth):
            self.layers.append(Linear(n, width, rng, dtype))
            n = width

    def forward(self, x):
        for layer in self.layers:
            x = F.leaky_relu(layer(x), self.slope)
            x = F.dropout(x, self.p, self.training, self.dropout_rng)
        return x
