"""Named parameter storage, initializers and the Adam update."""

from __future__ import annotations

import contextlib
from collections import OrderedDict
from typing import Iterator

import numpy as np

from . import tensor as _tensor
from .tensor import ConfigurationError, Tensor, UsageError


class ParamStore:
    """Ordered name -> Tensor map with Adam moment buffers and a step counter."""

    def __init__(self) -> None:
        self.params: OrderedDict[str, Tensor] = OrderedDict()
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self.params:
            raise ConfigurationError(f"duplicate parameter name {name!r}")
        t = Tensor(np.ascontiguousarray(data, dtype=_tensor.DTYPE), requires_grad=True, name=name)
        self.params[name] = t
        self.m[name] = np.zeros_like(t.data)
        self.v[name] = np.zeros_like(t.data)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __iter__(self) -> Iterator[str]:
        return iter(self.params)

    def __len__(self) -> int:
        return len(self.params)

    def items(self):
        return self.params.items()

    def count(self) -> int:
        return sum(int(np.prod(t.shape)) for t in self.params.values())

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    def set_trainable(self, flag: bool) -> None:
        for t in self.params.values():
            t.requires_grad = flag

    @contextlib.contextmanager
    def frozen(self):
        """Temporarily stop recording gradients for every parameter."""
        prev = {k: t.requires_grad for k, t in self.params.items()}
        self.set_trainable(False)
        try:
            yield self
        finally:
            for k, t in self.params.items():
                t.requires_grad = prev[k]

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.params.items()}


def adam_step(
    store: ParamStore,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """Bias-corrected Adam update in place. Gradients are left for the caller to clear."""
    trainable = [(k, t) for k, t in store.params.items() if t.requires_grad]
    for name, t in trainable:
        if t.grad is None:
            raise UsageError(f"adam_step: parameter {name!r} has no gradient")
    store.step += 1
    bc1 = 1.0 - beta1**store.step
    bc2 = 1.0 - beta2**store.step
    b1, b2 = _tensor.DTYPE(beta1), _tensor.DTYPE(beta2)
    for name, t in trainable:
        g = t.grad
        m = store.m[name]
        v = store.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        update = (lr / bc1) * m / (np.sqrt(v / _tensor.DTYPE(bc2)) + _tensor.DTYPE(eps))
        t.data -= update.astype(_tensor.DTYPE)


# -- initializers -------------------------------------------------------


def _fans(shape: tuple[int, ...]) -> tuple[int, int]:
    if len(shape) == 2:
        return shape[1], shape[0]
    receptive = int(np.prod(shape[2:]))
    return shape[1] * receptive, shape[0] * receptive


def he_uniform(rng: np.random.Generator, shape) -> np.ndarray:
    fan_in, _ = _fans(tuple(shape))
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(_tensor.DTYPE)


def glorot_uniform(rng: np.random.Generator, shape) -> np.ndarray:
    fan_in, fan_out = _fans(tuple(shape))
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(_tensor.DTYPE)
