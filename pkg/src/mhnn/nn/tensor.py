"""Shape-tagged arrays with a reverse-mode tape.

Each op output keeps references to its parents and a closure that pushes the
upstream gradient into them. Nothing is recorded when no input requires a
gradient, which keeps pure inference cheap.
"""

from __future__ import annotations

import contextlib

import numpy as np

_recording = True


@contextlib.contextmanager
def no_grad():
    """Evaluate ops without recording the tape (inference, finite differences)."""
    global _recording
    previous, _recording = _recording, False
    try:
        yield
    finally:
        _recording = previous


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = tuple(_parents)
        self._backward = _backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __add__(self, other):
        from .functional import add

        return add(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"


def is_recording() -> bool:
    return _recording


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_result(data, parents, backward_fn) -> Tensor:
    """Wrap an op output, recording the graph edge only if a parent needs it."""
    if _recording and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, _parents=tuple(parents), _backward=backward_fn)
    return Tensor(data)


def accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    t.grad = g if t.grad is None else t.grad + g


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every leaf that requires it.

    Leaf gradients accumulate across calls; call ``zero_grad`` between steps.
    """
    if loss._backward is None:
        raise RuntimeError("backward called before forward: tensor has no recorded graph")
    if loss.data.size != 1:
        raise ValueError("backward expects a scalar loss")

    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    for node in order:
        if not node.is_leaf:
            node.grad = None
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node.is_leaf or node.grad is None:
            continue
        node._backward(node.grad)
