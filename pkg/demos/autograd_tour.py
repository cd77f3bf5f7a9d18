"""
Gradients by hand and by the engine
===================================

Build a tiny conv net from the functional kernels, check its gradient
against finite differences, then fit a scalar with Adam.
"""

import numpy as np

from agagan.autograd import ParamStore, Tensor, adam_step, gradcheck, precision
from agagan.autograd import functional as F

rng = np.random.default_rng(0)

# A 3x3 conv followed by a sigmoid; the sum gives a scalar to differentiate.
x = Tensor(rng.normal(size=(1, 2, 6, 6)), requires_grad=True)
w = Tensor(rng.normal(size=(3, 2, 3, 3)) * 0.3, requires_grad=True)
b = Tensor(np.zeros(3), requires_grad=True)


def net(x, w, b):
    return F.sum_(F.sigmoid(F.conv2d(x, w, b, 1, 1)))


net(x, w, b).backward()
print("d(out)/dw has shape", w.grad.shape)

# Central differences in float64 agree with the analytic gradient.
with precision(np.float64):
    x64, w64, b64 = (Tensor(t.data.astype(np.float64), requires_grad=True) for t in (x, w, b))
    errors = gradcheck(net, [x64, w64, b64], eps=1e-6)
print("worst relative error per input:", {k: f"{v:.1e}" for k, v in errors.items()})

# Adam pulls theta towards 3 on (theta - 3)^2.
store = ParamStore()
theta = store.add("theta", np.array([0.0]))
for step in range(300):
    F.sum_(F.square(F.add_scalar(theta, -3.0))).backward()
    adam_step(store, lr=0.1)
    store.zero_grad()
    if step % 100 == 99:
        print(f"step {step + 1}: theta = {theta.data[0]:.4f}")
