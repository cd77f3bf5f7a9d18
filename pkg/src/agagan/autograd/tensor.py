"""Tape-free reverse-mode autodiff over float32 numpy arrays.

Every op returns a new :class:`Tensor` holding references to its parents and a
closure that maps the output gradient to parent gradients.  ``backward`` walks
the recorded graph in reverse topological order.  The graph is released as
soon as the caller drops the output, so clearing the tape per step amounts to
letting the previous loss go out of scope.
"""

from __future__ import annotations

import contextlib
import threading

import numpy as np

DTYPE = np.float32


class ConfigurationError(ValueError):
    """Raised when tensor shapes or layer settings are inconsistent."""


class UsageError(RuntimeError):
    """Raised when the autodiff or optimizer API is used out of contract."""


_state = threading.local()


@contextlib.contextmanager
def precision(dtype):
    """Run the engine in another float dtype inside the block.

    Training always uses float32.  Verification switches to float64 so that
    finite differences through deep compositions are not drowned by rounding.
    Only tensors created inside the block pick up the new dtype.
    """
    global DTYPE
    dtype = np.dtype(dtype)
    if dtype.kind != "f":
        raise ConfigurationError(f"precision needs a float dtype, got {dtype}")
    prev = DTYPE
    DTYPE = dtype.type
    try:
        yield
    finally:
        DTYPE = prev


def is_grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    prev = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        self.name = name

    # -- metadata -------------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    # -- autodiff -------------------------------------------------------
    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``grad``."""
        if self.data.size != 1:
            raise UsageError(f"backward() needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise UsageError("backward() on a tensor that does not require grad")
        order = _topological_order(self)
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.grad is None:
                    node.grad = np.array(g, dtype=DTYPE, copy=True)
                else:
                    node.grad = node.grad + g
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # -- operator sugar ---------------------------------------------------
    def __add__(self, other):
        from . import functional as F

        return F.add(self, as_tensor(other))

    __radd__ = __add__

    def __sub__(self, other):
        from . import functional as F

        return F.add(self, F.scale(as_tensor(other), -1.0))

    def __rsub__(self, other):
        from . import functional as F

        return F.add(as_tensor(other), F.scale(self, -1.0))

    def __mul__(self, other):
        from . import functional as F

        if isinstance(other, (int, float)):
            return F.scale(self, float(other))
        return F.hadamard(self, as_tensor(other))

    __rmul__ = __mul__

    def __neg__(self):
        from . import functional as F

        return F.scale(self, -1.0)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_result(data: np.ndarray, parents, backward) -> Tensor:
    """Wrap an op result, recording the graph edge only when needed."""
    req = is_grad_enabled() and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=req)
    if req:
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _topological_order(root: Tensor) -> list[Tensor]:
    # iterative DFS; deep generators overflow the recursion limit otherwise
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order
