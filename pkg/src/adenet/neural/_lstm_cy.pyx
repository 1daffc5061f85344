# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled LSTM sequence kernels.

Same contract as _lstm_py: gate layout [input, forget, candidate, output],
caller precomputes the input projection, the kernel runs the recurrence.
The recurrent matmul is written out by hand because the per-step matrices
are small enough that BLAS call overhead dominates.
"""

import numpy as np

cimport cython
from libc.math cimport exp, tanh


ctypedef fused floating:
    float
    double


cdef inline double _sig(double x) noexcept nogil:
    return 1.0 / (1.0 + exp(-x))


def lstm_forward_into(floating[:, ::1] pre, floating[:, ::1] Wh,
                      floating[:, ::1] h, floating[:, ::1] c,
                      floating[:, ::1] gates, floating[::1] z):
    cdef Py_ssize_t T = pre.shape[0]
    cdef Py_ssize_t H = Wh.shape[0]
    cdef Py_ssize_t t, j, k
    cdef double hk, ig, fg, gg, og, cc
    with nogil:
        for t in range(T):
            for j in range(4 * H):
                z[j] = pre[t, j]
            if t > 0:
                for k in range(H):
                    hk = h[t - 1, k]
                    if hk != 0.0:
                        for j in range(4 * H):
                            z[j] += <floating> (hk * Wh[k, j])
            for j in range(H):
                ig = _sig(z[j])
                fg = _sig(z[H + j])
                gg = tanh(z[2 * H + j])
                og = _sig(z[3 * H + j])
                cc = ig * gg
                if t > 0:
                    cc += fg * c[t - 1, j]
                gates[t, j] = <floating> ig
                gates[t, H + j] = <floating> fg
                gates[t, 2 * H + j] = <floating> gg
                gates[t, 3 * H + j] = <floating> og
                c[t, j] = <floating> cc
                h[t, j] = <floating> (og * tanh(cc))


def lstm_backward_into(floating[:, ::1] dh_out, floating[:, ::1] h,
                       floating[:, ::1] c, floating[:, ::1] gates,
                       floating[:, ::1] Wh, floating[:, ::1] dpre,
                       floating[:, ::1] dWh,
                       floating[::1] dh_next, floating[::1] dc_next):
    cdef Py_ssize_t T = dh_out.shape[0]
    cdef Py_ssize_t H = Wh.shape[0]
    cdef Py_ssize_t t, j, k
    cdef double ig, fg, gg, og, dh, tc, dc, di, dg, df, do, acc, hk
    with nogil:
        for j in range(H):
            dh_next[j] = 0.0
            dc_next[j] = 0.0
        for t in range(T - 1, -1, -1):
            for j in range(H):
                ig = gates[t, j]
                fg = gates[t, H + j]
                gg = gates[t, 2 * H + j]
                og = gates[t, 3 * H + j]
                dh = dh_out[t, j] + dh_next[j]
                tc = tanh(<double> c[t, j])
                do = dh * tc
                dc = dc_next[j] + dh * og * (1.0 - tc * tc)
                di = dc * gg
                dg = dc * ig
                df = 0.0
                if t > 0:
                    df = dc * c[t - 1, j]
                dc_next[j] = <floating> (dc * fg)
                dpre[t, j] = <floating> (di * ig * (1.0 - ig))
                dpre[t, H + j] = <floating> (df * fg * (1.0 - fg))
                dpre[t, 2 * H + j] = <floating> (dg * (1.0 - gg * gg))
                dpre[t, 3 * H + j] = <floating> (do * og * (1.0 - og))
            if t > 0:
                for k in range(H):
                    hk = h[t - 1, k]
                    if hk != 0.0:
                        for j in range(4 * H):
                            dWh[k, j] += <floating> (hk * dpre[t, j])
            for k in range(H):
                acc = 0.0
                for j in range(4 * H):
                    acc += Wh[k, j] * dpre[t, j]
                dh_next[k] = <floating> acc
