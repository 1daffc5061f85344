"""Pure-numpy LSTM sequence kernels (fallback for the compiled extension).

Gate layout along the last axis is [input, forget, candidate, output] in
blocks of H. The input projection x @ Wx + b is precomputed by the caller
(it has no sequential dependency); these kernels run only the recurrence.
"""

import numpy as np


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def lstm_forward(pre, Wh):
    """Run the recurrence over pre-activations.

    pre: (T, 4H) input projections plus bias
    Wh:  (H, 4H) recurrent weights
    Returns (h, c, gates): hidden outputs (T, H), cell states (T, H), and
    post-nonlinearity gate values (T, 4H), all needed by the backward pass.
    """
    T, H4 = pre.shape
    H = H4 // 4
    h = np.empty((T, H), dtype=pre.dtype)
    c = np.empty((T, H), dtype=pre.dtype)
    gates = np.empty((T, H4), dtype=pre.dtype)
    h_prev = np.zeros(H, dtype=pre.dtype)
    c_prev = np.zeros(H, dtype=pre.dtype)
    for t in range(T):
        z = pre[t] + h_prev @ Wh
        i = _sigmoid(z[:H])
        f = _sigmoid(z[H : 2 * H])
        g = np.tanh(z[2 * H : 3 * H])
        o = _sigmoid(z[3 * H :])
        c_prev = f * c_prev + i * g
        h_prev = o * np.tanh(c_prev)
        gates[t, :H] = i
        gates[t, H : 2 * H] = f
        gates[t, 2 * H : 3 * H] = g
        gates[t, 3 * H :] = o
        c[t] = c_prev
        h[t] = h_prev
    return h, c, gates


def lstm_backward(dh_out, h, c, gates, Wh):
    """Backprop through time for one direction.

    dh_out: (T, H) upstream gradient on the hidden outputs
    Returns (dpre, dWh): gradient on the pre-activations (T, 4H) and on the
    recurrent weights (H, 4H). The caller maps dpre onto Wx, b, and x.
    """
    T, H = dh_out.shape
    dpre = np.empty((T, 4 * H), dtype=dh_out.dtype)
    dWh = np.zeros_like(Wh)
    dh_next = np.zeros(H, dtype=dh_out.dtype)
    dc_next = np.zeros(H, dtype=dh_out.dtype)
    for t in range(T - 1, -1, -1):
        i = gates[t, :H]
        f = gates[t, H : 2 * H]
        g = gates[t, 2 * H : 3 * H]
        o = gates[t, 3 * H :]
        c_prev = c[t - 1] if t > 0 else np.zeros(H, dtype=dh_out.dtype)
        dh = dh_out[t] + dh_next
        tc = np.tanh(c[t])
        do = dh * tc
        dc = dc_next + dh * o * (1.0 - tc * tc)
        di = dc * g
        dg = dc * i
        df = dc * c_prev
        dc_next = dc * f
        dz = dpre[t]
        dz[:H] = di * i * (1.0 - i)
        dz[H : 2 * H] = df * f * (1.0 - f)
        dz[2 * H : 3 * H] = dg * (1.0 - g * g)
        dz[3 * H :] = do * o * (1.0 - o)
        if t > 0:
            dWh += np.outer(h[t - 1], dz)
        dh_next = dz @ Wh.T
    return dpre, dWh
