"""NumPy implementations of the hot kernels (fallback for the compiled module)."""
import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BACKEND = "python"

ABSORBED = -1
NEGATIVE = -2


def select_event(alpha, v1, v2):
    """Direct-method draw: returns ``(tau, index)``.

    ``index`` is ``ABSORBED`` when the total rate is zero and ``NEGATIVE`` if
    any rate is negative (or NaN); ``tau`` is then meaningless.
    """
    alpha = alpha.tolist() if hasattr(alpha, "tolist") else alpha
    total = 0.0
    for a in alpha:
        if not a >= 0.0:
            return 0.0, NEGATIVE
        total += a
    if total <= 0.0:
        return math.inf, ABSORBED
    tau = math.log(1.0 / v1) / total
    target = v2 * total
    acc = 0.0
    last = 0
    for j, a in enumerate(alpha):
        if a > 0.0:
            acc += a
            last = j
            if target < acc:
                return tau, j
    return tau, last


def conv1d_forward(x, w):
    """Valid true convolution of ``x`` (B, Cin, L) with ``w`` (Cout, Cin, K)."""
    k = w.shape[2]
    win = sliding_window_view(x, k, axis=2)
    return np.einsum("bclk,ock->bol", win, w[:, :, ::-1], optimize=True)


def conv1d_backward(gy, x, w):
    """Gradients of :func:`conv1d_forward` with respect to ``x`` and ``w``."""
    k = w.shape[2]
    lout = gy.shape[2]
    win = sliding_window_view(x, k, axis=2)
    gw = np.einsum("bol,bclk->ock", gy, win, optimize=True)[:, :, ::-1]
    wf = w[:, :, ::-1]
    gx = np.zeros_like(x)
    for j in range(k):
        gx[:, :, j:j + lout] += np.einsum("bol,oc->bcl", gy, wf[:, :, j])
    return gx, np.ascontiguousarray(gw)
