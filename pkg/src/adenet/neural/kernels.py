"""Backend selection for the LSTM sequence kernels.

The compiled Cython extension is used when importable; otherwise the pure
numpy implementation takes over. Set ADENET_PURE_PYTHON=1 to force the
fallback (useful for benchmarking and debugging).
"""

import os

import numpy as np

from . import _lstm_py

_cy = None
if os.environ.get("ADENET_PURE_PYTHON", "0") not in ("1", "true", "yes"):
    try:
        from . import _lstm_cy as _cy
    except ImportError:
        _cy = None

BACKEND = "cython" if _cy is not None else "numpy"


def lstm_forward(pre, Wh):
    """Recurrence over precomputed input projections; see _lstm_py.lstm_forward."""
    pre = np.ascontiguousarray(pre)
    Wh = np.ascontiguousarray(Wh, dtype=pre.dtype)
    if _cy is None:
        return _lstm_py.lstm_forward(pre, Wh)
    T, H4 = pre.shape
    H = H4 // 4
    h = np.empty((T, H), dtype=pre.dtype)
    c = np.empty((T, H), dtype=pre.dtype)
    gates = np.empty((T, H4), dtype=pre.dtype)
    scratch = np.empty(H4, dtype=pre.dtype)
    _cy.lstm_forward_into(pre, Wh, h, c, gates, scratch)
    return h, c, gates


def lstm_backward(dh_out, h, c, gates, Wh):
    """BPTT over one direction; see _lstm_py.lstm_backward."""
    dh_out = np.ascontiguousarray(dh_out)
    if _cy is None:
        return _lstm_py.lstm_backward(dh_out, h, c, gates, Wh)
    T, H = dh_out.shape
    dpre = np.empty((T, 4 * H), dtype=dh_out.dtype)
    dWh = np.zeros_like(Wh)
    dh_next = np.empty(H, dtype=dh_out.dtype)
    dc_next = np.empty(H, dtype=dh_out.dtype)
    _cy.lstm_backward_into(dh_out, h, c, gates, Wh, dpre, dWh, dh_next, dc_next)
    return dpre, dWh
