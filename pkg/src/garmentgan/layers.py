"""Parameter containers, layer stacks, initialization, and the Adam optimizer.

Networks are pure functions of (ParamGroup, input). A stack is described by a
list of layer specs; `init_stack` allocates its parameters and `apply_stack`
runs it. Conv weights use the image-GAN N(0, 0.02) initialization.
"""

from __future__ import annotations

import zlib
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from garmentgan import autodiff as ad
from garmentgan.autodiff import Tensor

INIT_STD = 0.02


def rng_for(seed: int, tag: str) -> np.random.Generator:
    """Deterministic child RNG for a named purpose."""
    return np.random.default_rng(np.random.SeedSequence((int(seed), zlib.crc32(tag.encode()))))


class ParamGroup:
    """Ordered, named collection of trainable tensors."""

    def __init__(self, tensors: "OrderedDict[str, Tensor] | None" = None):
        self._tensors: OrderedDict[str, Tensor] = tensors if tensors is not None else OrderedDict()

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __setitem__(self, name: str, t: Tensor) -> None:
        self._tensors[name] = t

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __len__(self) -> int:
        return len(self._tensors)

    def names(self) -> list[str]:
        return list(self._tensors.keys())

    def items(self):
        return self._tensors.items()

    def tensors(self) -> list[Tensor]:
        return list(self._tensors.values())

    def copy(self) -> "ParamGroup":
        """Deep value copy; mutating the copy never touches the source."""
        out = OrderedDict()
        for k, t in self._tensors.items():
            out[k] = Tensor(t.data.copy(), requires_grad=True)
        return ParamGroup(out)

    def to_arrays(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((k, t.data) for k, t in self._tensors.items())

    @classmethod
    def from_arrays(cls, arrays) -> "ParamGroup":
        out = OrderedDict()
        for k, a in arrays.items():
            out[k] = Tensor(np.asarray(a), requires_grad=True)
        return cls(out)

    def zero_grads(self) -> None:
        for t in self._tensors.values():
            t.grad = None

    def grad_norm(self) -> float:
        total = 0.0
        for t in self._tensors.values():
            if t.grad is not None:
                total += float(np.sum(t.grad.astype(np.float64) ** 2))
        return float(np.sqrt(total))

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(t.data)) for t in self._tensors.values())

    def equals(self, other: "ParamGroup") -> bool:
        if self.names() != other.names():
            return False
        return all(np.array_equal(self[k].data, other[k].data) for k in self.names())


# --- layer specs -------------------------------------------------------------


@dataclass(frozen=True)
class Conv:
    name: str
    cin: int
    cout: int
    k: int
    stride: int = 1
    pad: int = 0
    norm: bool = False
    act: str = "none"  # none | relu | lrelu
    transpose: bool = False


@dataclass(frozen=True)
class ResBlock:
    name: str
    ch: int


LayerSpec = "Conv | ResBlock"


def _init_conv(params: ParamGroup, spec: Conv, rng: np.random.Generator, dtype) -> None:
    if spec.transpose:
        wshape = (spec.cin, spec.cout, spec.k, spec.k)
    else:
        wshape = (spec.cout, spec.cin, spec.k, spec.k)
    params[f"{spec.name}.w"] = Tensor(rng.normal(0.0, INIT_STD, size=wshape).astype(dtype), requires_grad=True)
    params[f"{spec.name}.b"] = Tensor(np.zeros(spec.cout, dtype=dtype), requires_grad=True)
    if spec.norm:
        params[f"{spec.name}.gamma"] = Tensor(np.ones(spec.cout, dtype=dtype), requires_grad=True)
        params[f"{spec.name}.beta"] = Tensor(np.zeros(spec.cout, dtype=dtype), requires_grad=True)


def init_stack(specs, rng: np.random.Generator, dtype=np.float32) -> ParamGroup:
    params = ParamGroup()
    for spec in specs:
        if isinstance(spec, Conv):
            _init_conv(params, spec, rng, dtype)
        elif isinstance(spec, ResBlock):
            for sub in _res_convs(spec):
                _init_conv(params, sub, rng, dtype)
        else:
            raise TypeError(f"unknown layer spec {spec!r}")
    return params


def _res_convs(spec: ResBlock) -> tuple[Conv, Conv]:
    return (
        Conv(f"{spec.name}.conv1", spec.ch, spec.ch, 3, 1, 1, norm=True, act="relu"),
        Conv(f"{spec.name}.conv2", spec.ch, spec.ch, 3, 1, 1, norm=True, act="none"),
    )


def _apply_conv(params: ParamGroup, spec: Conv, x: Tensor) -> Tensor:
    w = params[f"{spec.name}.w"]
    b = params[f"{spec.name}.b"]
    if spec.transpose:
        x = ad.conv_transpose2d(x, w, b, stride=spec.stride, pad=spec.pad)
    else:
        x = ad.conv2d(x, w, b, stride=spec.stride, pad=spec.pad)
    if spec.norm:
        x = ad.instance_norm(x, params[f"{spec.name}.gamma"], params[f"{spec.name}.beta"])
    if spec.act == "relu":
        x = ad.relu(x)
    elif spec.act == "lrelu":
        x = ad.leaky_relu(x, 0.2)
    return x


def apply_stack(specs, params: ParamGroup, x: Tensor, collect: list | None = None) -> Tensor:
    """Run a stack; optionally append each layer's output to `collect`."""
    for spec in specs:
        if isinstance(spec, Conv):
            x = _apply_conv(params, spec, x)
        elif isinstance(spec, ResBlock):
            c1, c2 = _res_convs(spec)
            y = _apply_conv(params, c1, x)
            y = _apply_conv(params, c2, y)
            x = ad.add(x, y)
        else:
            raise TypeError(f"unknown layer spec {spec!r}")
        if collect is not None:
            collect.append(x)
    return x


# --- optimizer ----------------------------------------------------------------


class Adam:
    """Adam over a ParamGroup; state keyed by parameter name."""

    def __init__(self, params: ParamGroup, lr: float, betas: tuple[float, float] = (0.5, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = float(lr)
        self.b1, self.b2 = float(betas[0]), float(betas[1])
        self.eps = float(eps)
        self.t = 0
        self._m = {k: np.zeros_like(t.data) for k, t in params.items()}
        self._v = {k: np.zeros_like(t.data) for k, t in params.items()}

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.b1**self.t
        bc2 = 1.0 - self.b2**self.t
        for k, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            m = self._m[k]
            v = self._v[k]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * (g * g)
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def zero_grad(self) -> None:
        self.params.zero_grads()
