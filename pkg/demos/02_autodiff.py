"""The tape-based autodiff engine: gradients, a finite-difference check and FLOP counting."""

import numpy as np

from gsifn import tensor as T

with T.default_dtype(np.float64):
    rng = np.random.default_rng(0)
    x = T.parameter(rng.normal(size=(4, 3)))
    w = T.parameter(rng.normal(size=(3, 2)))

    def loss():
        return T.mean(T.square(T.tanh(T.matmul(x, w))))

    value = loss()
    T.backward(value)
    print(f"loss = {float(value.data):.6f}")
    print("dL/dw from the tape:\n", w.grad)

    # central differences on one entry
    step = 1e-6
    w.data[1, 0] += step
    up = float(loss().data)
    w.data[1, 0] -= 2 * step
    down = float(loss().data)
    w.data[1, 0] += step
    print(f"finite difference for w[1,0]: {(up - down) / (2 * step):.10f}  tape: {w.grad[1, 0]:.10f}")

# matmul work is counted as two FLOPs per multiply-accumulate
with T.count_ops() as counter:
    T.matmul(T.Tensor(np.ones((8, 16))), T.Tensor(np.ones((16, 4))))
print(f"(8x16) @ (16x4): {counter.matmul} FLOPs = 2 * 8 * 16 * 4")

# a fully masked attention row is an error, not a silent uniform distribution
try:
    T.softmax(T.Tensor(np.zeros((1, 3))), np.full((1, 3), T.NEG_INF))
except T.FullyMaskedRowError as exc:
    print("fully masked row:", exc)
