"""Central finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import tensor as _tensor
from .tensor import Tensor, no_grad


def _scalar(out: Tensor) -> float:
    return float(np.asarray(out.data, dtype=np.float64).sum())


def gradcheck(
    f: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    eps: float = 1e-3,
    max_elements: int | None = None,
    rng: np.random.Generator | None = None,
) -> dict[str, float]:
    """Compare analytic gradients of scalar ``f(*inputs)`` against central differences.

    Returns, per input (keyed by ``name`` or position), the max absolute
    discrepancy divided by the largest gradient magnitude of that input.
    The forward pass runs in the engine dtype; the difference quotient uses
    the actually representable perturbation and is formed in float64.
    ``max_elements`` restricts the probe to a random subset of entries.
    """
    for t in inputs:
        t.grad = None
    out = f(*inputs)
    out.backward()
    analytic = [np.zeros(t.shape, _tensor.DTYPE) if t.grad is None else t.grad.copy() for t in inputs]

    report: dict[str, float] = {}
    for pos, t in enumerate(inputs):
        flat = t.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_elements is not None and flat.size > max_elements:
            idx = (rng or np.random.default_rng(0)).choice(flat.size, max_elements, replace=False)
        num = np.zeros(idx.size, dtype=np.float64)
        with no_grad():
            for k, i in enumerate(idx):
                orig = flat[i]
                xp = flat.dtype.type(orig + eps)
                xm = flat.dtype.type(orig - eps)
                flat[i] = xp
                fp = _scalar(f(*inputs))
                flat[i] = xm
                fm = _scalar(f(*inputs))
                flat[i] = orig
                num[k] = (fp - fm) / (float(xp) - float(xm))
        ana = analytic[pos].reshape(-1)[idx].astype(np.float64)
        denom = max(np.abs(num).max(initial=0.0), np.abs(ana).max(initial=0.0), 1e-12)
        report[t.name or str(pos)] = float(np.abs(ana - num).max(initial=0.0) / denom)
    for t in inputs:
        t.grad = None
    return report
