"""Reverse-mode automatic differentiation over NumPy arrays.

Minimal tape-based engine: each op builds a closure that scatters the output
gradient back to its parents. Convolutions route their im2col/col2im hot
loops through the selected kernel backend (compiled or pure NumPy).

dtype discipline: ops preserve the dtype of their inputs, so graphs can be
built in float64 for finite-difference checks and float32 for training.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from garmentgan import backend as K
from garmentgan.errors import ShapeMismatch


class Tensor:
    """Array node in the autodiff graph."""

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._backward: Callable[[np.ndarray], None] | None = None
        self._parents: tuple[Tensor, ...] = ()

    # -- construction helpers ------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"

    # -- operator sugar --------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        if not isinstance(other, Tensor) and np.isscalar(other):
            return add(self, -float(other))
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, p):
        return pow_scalar(self, p)

    def __truediv__(self, s):
        if isinstance(s, Tensor):
            raise TypeError("tensor/tensor division not supported; use mul + pow_scalar")
        return mul(self, 1.0 / float(s))

    # -- backward pass ---------------------------------------------------------

    def backward(self, grad: np.ndarray | None = None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a gradient requires a scalar output")
            grad = np.ones_like(self.data)
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        _accum(self, np.asarray(grad, dtype=self.data.dtype))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                # interior activations are not reused; free eagerly
                if node is not self and node._parents:
                    node.grad = None


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g.copy() if g.base is not None or g is t.data else g
    else:
        t.grad = t.grad + g


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum grad over axes that were broadcast to recover `shape`."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _make(data: np.ndarray, parents: Sequence[Tensor], backward: Callable[[np.ndarray], None]) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


# --- elementwise -----------------------------------------------------------


def add(a, b) -> Tensor:
    # python scalars stay scalars so float32 graphs are not promoted to float64
    if not isinstance(a, Tensor) and np.isscalar(a):
        a, b = b, a
    if not isinstance(b, Tensor) and np.isscalar(b):
        a = _as_tensor(a)
        s = float(b)

        def backward_s(g):
            _accum(a, g)

        return _make(a.data + s, (a,), backward_s)

    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data + b.data

    def backward(g):
        _accum(a, _unbroadcast(g, a.data.shape).astype(a.data.dtype, copy=False))
        _accum(b, _unbroadcast(g, b.data.shape).astype(b.data.dtype, copy=False))

    return _make(data, (a, b), backward)


def mul(a, b) -> Tensor:
    if not isinstance(a, Tensor) and np.isscalar(a):
        a, b = b, a
    if not isinstance(b, Tensor) and np.isscalar(b):
        a = _as_tensor(a)
        s = float(b)

        def backward_s(g):
            _accum(a, g * s)

        return _make(a.data * s, (a,), backward_s)

    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data * b.data

    def backward(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape).astype(a.data.dtype, copy=False))
        _accum(b, _unbroadcast(g * a.data, b.data.shape).astype(b.data.dtype, copy=False))

    return _make(data, (a, b), backward)


def pow_scalar(a, p: float) -> Tensor:
    a = _as_tensor(a)
    data = a.data ** p

    def backward(g):
        _accum(a, g * p * a.data ** (p - 1.0))

    return _make(data, (a,), backward)


def relu(a) -> Tensor:
    a = _as_tensor(a)
    mask = a.data > 0
    data = np.where(mask, a.data, 0.0).astype(a.data.dtype, copy=False)

    def backward(g):
        _accum(a, np.where(mask, g, 0.0).astype(a.data.dtype, copy=False))

    return _make(data, (a,), backward)


def leaky_relu(a, slope: float = 0.2) -> Tensor:
    a = _as_tensor(a)
    mask = a.data > 0
    data = np.where(mask, a.data, slope * a.data).astype(a.data.dtype, copy=False)

    def backward(g):
        _accum(a, np.where(mask, g, slope * g).astype(a.data.dtype, copy=False))

    return _make(data, (a,), backward)


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    # numerically stable split by sign
    x = a.data
    data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    data = data.astype(a.data.dtype, copy=False)

    def backward(g):
        _accum(a, (g * data * (1.0 - data)).astype(a.data.dtype, copy=False))

    return _make(data, (a,), backward)


def tanh(a) -> Tensor:
    a = _as_tensor(a)
    data = np.tanh(a.data)

    def backward(g):
        _accum(a, g * (1.0 - data * data))

    return _make(data, (a,), backward)


def log(a) -> Tensor:
    a = _as_tensor(a)
    data = np.log(a.data)

    def backward(g):
        _accum(a, g / a.data)

    return _make(data, (a,), backward)


def exp(a) -> Tensor:
    a = _as_tensor(a)
    data = np.exp(a.data)

    def backward(g):
        _accum(a, g * data)

    return _make(data, (a,), backward)


def absolute(a) -> Tensor:
    """|a| with sign(0) = 0 subgradient."""
    a = _as_tensor(a)
    data = np.abs(a.data)
    sign = np.sign(a.data)

    def backward(g):
        _accum(a, g * sign)

    return _make(data, (a,), backward)


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp values; gradient is passed through strictly inside (lo, hi)."""
    a = _as_tensor(a)
    data = np.clip(a.data, lo, hi)
    inside = (a.data > lo) & (a.data < hi)

    def backward(g):
        _accum(a, np.where(inside, g, 0.0).astype(a.data.dtype, copy=False))

    return _make(data, (a,), backward)


# --- reductions and shape ----------------------------------------------------


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    data = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size // max(data.size, 1)

    def backward(g):
        g = np.asarray(g)
        if not keepdims and axis is not None:
            g = np.expand_dims(g, axis)
        _accum(a, (np.broadcast_to(g, a.data.shape) / count).astype(a.data.dtype, copy=False))

    return _make(data, (a,), backward)


def total_sum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        g = np.asarray(g)
        if not keepdims and axis is not None:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.data.shape).astype(a.data.dtype, copy=False))

    return _make(data, (a,), backward)


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    data = a.data.reshape(shape)

    def backward(g):
        _accum(a, g.reshape(a.data.shape))

    return _make(data, (a,), backward)


def concat(parts: Iterable[Tensor], axis: int = 1) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]

    def backward(g):
        offset = 0
        for p, s in zip(parts, sizes):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(offset, offset + s)
            _accum(p, g[tuple(sl)])
            offset += s

    return _make(data, tuple(parts), backward)


def matmul(a, b) -> Tensor:
    """a @ b for 2-D or batched 3-D operands (NumPy matmul broadcasting)."""
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data @ b.data

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        _accum(a, _unbroadcast(ga, a.data.shape))
        _accum(b, _unbroadcast(gb, b.data.shape))

    return _make(data, (a, b), backward)


# --- convolutions ------------------------------------------------------------


def conv2d(x, w, b=None, stride: int = 1, pad: int = 0) -> Tensor:
    """2-D convolution. x: (N,Cin,H,W), w: (Cout,Cin,kh,kw), b: (Cout,)."""
    x, w = _as_tensor(x), _as_tensor(w)
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeMismatch(f"conv2d expects 4-D input/weight, got {x.data.shape} and {w.data.shape}")
    if x.data.shape[1] != w.data.shape[1]:
        raise ShapeMismatch(f"conv2d channel mismatch: input {x.data.shape[1]} vs weight {w.data.shape[1]}")
    n, cin, h, wd = x.data.shape
    cout, _, kh, kw = w.data.shape
    hout = K.conv_out_size(h, kh, stride, pad)
    wout = K.conv_out_size(wd, kw, stride, pad)
    cols = K.im2col(np.ascontiguousarray(x.data), kh, kw, stride, pad)
    wm = w.data.reshape(cout, -1)
    out = np.matmul(wm, cols).reshape(n, cout, hout, wout)
    parents: list[Tensor] = [x, w]
    if b is not None:
        b = _as_tensor(b)
        out = out + b.data.reshape(1, -1, 1, 1)
        parents.append(b)

    def backward(g):
        gm = g.reshape(n, cout, hout * wout)
        if w.requires_grad:
            gw = np.matmul(gm, cols.transpose(0, 2, 1)).sum(axis=0).reshape(w.data.shape)
            _accum(w, gw)
        if x.requires_grad:
            dcols = np.matmul(wm.T, gm)
            _accum(x, K.col2im(np.ascontiguousarray(dcols), h, wd, kh, kw, stride, pad))
        if b is not None and b.requires_grad:
            _accum(b, g.sum(axis=(0, 2, 3)))

    return _make(out, tuple(parents), backward)


def conv_transpose2d(x, w, b=None, stride: int = 1, pad: int = 0) -> Tensor:
    """Transposed 2-D convolution. x: (N,Cin,H,W), w: (Cin,Cout,kh,kw).

    Output spatial size: (H-1)*stride - 2*pad + kh.
    """
    x, w = _as_tensor(x), _as_tensor(w)
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeMismatch(f"conv_transpose2d expects 4-D input/weight, got {x.data.shape} and {w.data.shape}")
    if x.data.shape[1] != w.data.shape[0]:
        raise ShapeMismatch(f"conv_transpose2d channel mismatch: input {x.data.shape[1]} vs weight {w.data.shape[0]}")
    n, cin, h, wd = x.data.shape
    _, cout, kh, kw = w.data.shape
    hout = (h - 1) * stride - 2 * pad + kh
    wout = (wd - 1) * stride - 2 * pad + kw
    wm = w.data.reshape(cin, cout * kh * kw)
    cols = np.matmul(wm.T, x.data.reshape(n, cin, h * wd))
    out = K.col2im(np.ascontiguousarray(cols), hout, wout, kh, kw, stride, pad)
    parents: list[Tensor] = [x, w]
    if b is not None:
        b = _as_tensor(b)
        out = out + b.data.reshape(1, -1, 1, 1)
        parents.append(b)

    def backward(g):
        gcols = K.im2col(np.ascontiguousarray(g), kh, kw, stride, pad)  # (N, Cout*kh*kw, H*W)
        if x.requires_grad:
            gx = np.matmul(wm, gcols).reshape(x.data.shape)
            _accum(x, gx)
        if w.requires_grad:
            gw = np.matmul(x.data.reshape(n, cin, h * wd), gcols.transpose(0, 2, 1)).sum(axis=0)
            _accum(w, gw.reshape(w.data.shape))
        if b is not None and b.requires_grad:
            _accum(b, g.sum(axis=(0, 2, 3)))

    return _make(out, tuple(parents), backward)


# --- pooling / normalization --------------------------------------------------


def avg_pool2x2(a) -> Tensor:
    """2x2 average pooling with stride 2 (even spatial dims required)."""
    a = _as_tensor(a)
    n, c, h, w = a.data.shape
    if h % 2 or w % 2:
        raise ShapeMismatch(f"avg_pool2x2 requires even spatial dims, got {h}x{w}")
    r = reshape(a, (n, c, h // 2, 2, w // 2, 2))
    return mean(r, axis=(3, 5))


def max_pool2x2(a) -> Tensor:
    """2x2 max pooling with stride 2; gradient routed to the (first) argmax."""
    a = _as_tensor(a)
    n, c, h, w = a.data.shape
    if h % 2 or w % 2:
        raise ShapeMismatch(f"max_pool2x2 requires even spatial dims, got {h}x{w}")
    blocks = a.data.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    idx = blocks.argmax(axis=-1)
    data = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]

    def backward(g):
        gb = np.zeros_like(blocks)
        np.put_along_axis(gb, idx[..., None], g[..., None], axis=-1)
        gx = gb.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(a.data.shape)
        _accum(a, gx)

    return _make(data, (a,), backward)


def instance_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Per-sample, per-channel normalization with affine parameters.

    Composed from primitive ops, so gradients come for free.
    """
    x = _as_tensor(x)
    mu = mean(x, axis=(2, 3), keepdims=True)
    xc = x - mu
    var = mean(mul(xc, xc), axis=(2, 3), keepdims=True)
    inv = pow_scalar(add(var, eps), -0.5)
    g = reshape(_as_tensor(gamma), (1, -1, 1, 1))
    b = reshape(_as_tensor(beta), (1, -1, 1, 1))
    return add(mul(mul(xc, inv), g), b)
