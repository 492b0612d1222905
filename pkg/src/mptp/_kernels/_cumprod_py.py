"""Pure numpy fallback for the cumulative transfer-matrix product."""

import numpy as np


def cumprod_matmul(steps):
    """Return phi with phi[0] = I and phi[j+1] = steps[j] @ phi[j]."""
    steps = np.asarray(steps, dtype=float)
    m, d, d2 = steps.shape
    if d != d2:
        raise ValueError("transfer matrices must be square")
    out = np.empty((m + 1, d, d))
    out[0] = np.eye(d)
    for j in range(m):
        np.matmul(steps[j], out[j], out=out[j + 1])
    return out
