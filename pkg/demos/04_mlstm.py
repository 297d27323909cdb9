"""Matrix-memory LSTM: recurrent and parallel evaluation agree, and the stabilizer keeps large inputs finite."""

import numpy as np

from gsifn import tensor as T
from gsifn.mlstm import MLSTMCell, mlstm_forward, mlstm_parallel
from gsifn.tensor import Tensor

rng = np.random.default_rng(0)
with T.default_dtype(np.float64):
    cell = MLSTMCell(6, 6, T.make_rng(0))
    x = Tensor(rng.normal(size=(2, 12, 6)))
    step_by_step = mlstm_forward(x, cell).data
    all_at_once = mlstm_parallel(x, cell).data
    print(f"recurrent vs parallel, max difference: {np.max(np.abs(step_by_step - all_at_once)):.2e}")

    # outputs at step t only depend on inputs up to t
    y = x.data.copy()
    y[:, 8:] += 10.0
    moved = mlstm_forward(Tensor(y), cell).data
    print("first 8 outputs unchanged after editing steps 8..11:", np.array_equal(moved[:, :8], step_by_step[:, :8]))

big = Tensor((rng.uniform(-1, 1, size=(1000, 20, 6)) * 1e3).astype(np.float32))
out = mlstm_forward(big, MLSTMCell(6, 6, T.make_rng(1)))
print("inputs scaled to 1e3, all outputs finite:", bool(np.isfinite(out.data).all()))

unstable = MLSTMCell(6, 6, T.make_rng(1), stabilize=False)
try:
    mlstm_forward(big, unstable)
except ArithmeticError as exc:
    print("without the stabilizer:", type(exc).__name__, "-", exc)
