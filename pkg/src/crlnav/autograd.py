"""A small reverse-mode automatic differentiation engine over numpy float64 arrays.

Only the operations the policy, value and denoiser networks need are provided.
Broadcasting is supported for the elementwise binary ops; gradients are summed
back to the operand shapes.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")
    __array_priority__ = 100.0

    def __init__(self, data, requires_grad: bool = False,
                 _parents: tuple["Tensor", ...] = (), _backward: Callable | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = _parents if self.requires_grad else ()
        self._backward = _backward if self.requires_grad else None

    shape = property(lambda self: self.data.shape)
    ndim = property(lambda self: self.data.ndim)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def _accum(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def backward(self):
        """Populate ``.grad`` on every tensor in the graph that requires it."""
        if self.data.size != 1:
            raise ValueError(f"backward() needs a scalar loss, got shape {self.data.shape}")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self._accum(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # elementwise arithmetic

    def __add__(self, other):
        other = as_tensor(other)

        def bw(g):
            if self.requires_grad:
                self._accum(_unbroadcast(g, self.shape))
            if other.requires_grad:
                other._accum(_unbroadcast(g, other.shape))
        return Tensor(self.data + other.data, _parents=(self, other), _backward=bw)

    __radd__ = __add__

    def __neg__(self):
        return Tensor(-self.data, _parents=(self,), _backward=lambda g: self._accum(-g))

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)

        def bw(g):
            if self.requires_grad:
                self._accum(_unbroadcast(g * other.data, self.shape))
            if other.requires_grad:
                other._accum(_unbroadcast(g * self.data, other.shape))
        return Tensor(self.data * other.data, _parents=(self, other), _backward=bw)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        out = self.data / other.data

        def bw(g):
            if self.requires_grad:
                self._accum(_unbroadcast(g / other.data, self.shape))
            if other.requires_grad:
                other._accum(_unbroadcast(-g * out / other.data, other.shape))
        return Tensor(out, _parents=(self, other), _backward=bw)

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __pow__(self, k: float):
        out = self.data ** k
        return Tensor(out, _parents=(self,),
                      _backward=lambda g: self._accum(g * k * self.data ** (k - 1)))

    def __matmul__(self, other):
        other = as_tensor(other)

        def bw(g):
            if self.requires_grad:
                self._accum(g @ other.data.T)
            if other.requires_grad:
                other._accum(self.data.T @ g)
        return Tensor(self.data @ other.data, _parents=(self, other), _backward=bw)

    # reductions and shape

    def sum(self, axis=None, keepdims: bool = False):
        def bw(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self._accum(np.broadcast_to(g, self.shape))
        return Tensor(self.data.sum(axis=axis, keepdims=keepdims), _parents=(self,), _backward=bw)

    def mean(self, axis=None, keepdims: bool = False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Tensor(self.data.reshape(shape), _parents=(self,),
                      _backward=lambda g: self._accum(g.reshape(self.shape)))

    def __getitem__(self, key):
        def bw(g):
            full = np.zeros_like(self.data)
            np.add.at(full, key, g)
            self._accum(full)
        return Tensor(self.data[key], _parents=(self,), _backward=bw)

    # nonlinearities

    def tanh(self):
        out = np.tanh(self.data)
        return Tensor(out, _parents=(self,), _backward=lambda g: self._accum(g * (1.0 - out * out)))

    def relu(self):
        mask = self.data > 0
        return Tensor(self.data * mask, _parents=(self,), _backward=lambda g: self._accum(g * mask))

    def exp(self):
        out = np.exp(self.data)
        return Tensor(out, _parents=(self,), _backward=lambda g: self._accum(g * out))

    def log(self):
        return Tensor(np.log(self.data), _parents=(self,), _backward=lambda g: self._accum(g / self.data))

    def clip(self, lo: float, hi: float):
        """Clamp values; gradient flows only where the input lies inside [lo, hi]."""
        inside = (self.data >= lo) & (self.data <= hi)
        return Tensor(np.clip(self.data, lo, hi), _parents=(self,),
                      _backward=lambda g: self._accum(g * inside))


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def minimum(a, b) -> Tensor:
    """Elementwise minimum; ties route the gradient to ``a``."""
    a, b = as_tensor(a), as_tensor(b)
    take_a = a.data <= b.data

    def bw(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g * take_a, a.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g * ~take_a, b.shape))
    return Tensor(np.where(take_a, a.data, b.data), _parents=(a, b), _backward=bw)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        for t, part in zip(tensors, np.split(g, splits, axis=axis)):
            if t.requires_grad:
                t._accum(part)
    return Tensor(np.concatenate([t.data for t in tensors], axis=axis), _parents=tuple(tensors),
                  _backward=bw)


def depthwise_conv2d(x: Tensor, kernel: Tensor, bias: Tensor, stride: int = 2) -> Tensor:
    """Per-channel 3x3 convolution over NHWC input with 'same'-style padding of 1.

    ``kernel`` has shape (3, 3, C) and ``bias`` shape (C,). Output spatial size
    is ceil(H / stride).
    """
    B, H, W, C = x.shape
    kh, kw, kc = kernel.shape
    if kc != C:
        raise ValueError(f"kernel has {kc} channels, input has {C}")
    Ho, Wo = -(-H // stride), -(-W // stride)
    pad = np.pad(x.data, ((0, 0), (1, 1), (1, 1), (0, 0)))
    out = np.zeros((B, Ho, Wo, C))
    for i in range(kh):
        for j in range(kw):
            out += pad[:, i:i + stride * Ho:stride, j:j + stride * Wo:stride, :] * kernel.data[i, j]
    out += bias.data

    def bw(g):
        if kernel.requires_grad:
            gk = np.empty_like(kernel.data)
            for i in range(kh):
                for j in range(kw):
                    patch = pad[:, i:i + stride * Ho:stride, j:j + stride * Wo:stride, :]
                    gk[i, j] = np.einsum("bhwc,bhwc->c", patch, g)
            kernel._accum(gk)
        if bias.requires_grad:
            bias._accum(g.sum(axis=(0, 1, 2)))
        if x.requires_grad:
            gp = np.zeros_like(pad)
            for i in range(kh):
                for j in range(kw):
                    gp[:, i:i + stride * Ho:stride, j:j + stride * Wo:stride, :] += g * kernel.data[i, j]
            x._accum(gp[:, 1:H + 1, 1:W + 1, :])
    return Tensor(out, _parents=(x, kernel, bias), _backward=bw)


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None
