# cython: language_level=3
"""Compiled LSTM recurrence. Same contract as ``_recurrence_py``.

The per-step hidden projections go through BLAS ``dgemm``; gate
nonlinearities and state updates are plain C loops.
"""

import numpy as np

from libc.math cimport exp, tanh, fabs
from scipy.linalg.cython_blas cimport dgemm


cdef inline double _sigmoid(double x) nogil:
    cdef double z = exp(-fabs(x))
    if x >= 0:
        return 1.0 / (1.0 + z)
    return z / (1.0 + z)


def lstm_forward(const double[:, :, ::1] xg, const double[:, ::1] U, bint reverse=False):
    cdef int N = xg.shape[0], T = xg.shape[1], G = xg.shape[2]
    cdef int H = G // 4
    h_arr = np.zeros((N, T, H))
    c_arr = np.zeros((N, T, H))
    g_arr = np.empty((N, T, G))
    cdef double[:, :, ::1] h = h_arr
    cdef double[:, :, ::1] c = c_arr
    cdef double[:, :, ::1] gates = g_arr
    cdef double[:, ::1] hp = np.zeros((N, H))
    cdef double[:, ::1] cp = np.zeros((N, H))
    cdef double[:, ::1] a = np.zeros((N, G))
    cdef double one = 1.0, zero = 0.0
    cdef int s, t, n, j
    cdef double ig, fg, gg, og, cc
    with nogil:
        for s in range(T):
            t = T - 1 - s if reverse else s
            if H > 0:
                dgemm(b"N", b"N", &G, &N, &H, &one, <double*>&U[0, 0], &G,
                      &hp[0, 0], &H, &zero, &a[0, 0], &G)
            for n in range(N):
                for j in range(H):
                    ig = _sigmoid(a[n, j] + xg[n, t, j])
                    fg = _sigmoid(a[n, H + j] + xg[n, t, H + j])
                    gg = tanh(a[n, 2 * H + j] + xg[n, t, 2 * H + j])
                    og = _sigmoid(a[n, 3 * H + j] + xg[n, t, 3 * H + j])
                    gates[n, t, j] = ig
                    gates[n, t, H + j] = fg
                    gates[n, t, 2 * H + j] = gg
                    gates[n, t, 3 * H + j] = og
                    cc = fg * cp[n, j] + ig * gg
                    cp[n, j] = cc
                    c[n, t, j] = cc
                    hp[n, j] = og * tanh(cc)
                    h[n, t, j] = hp[n, j]
    return h_arr, c_arr, g_arr


def lstm_backward_dxg(const double[:, :, ::1] dh, const double[:, ::1] U,
                      const double[:, :, ::1] c, const double[:, :, ::1] gates,
                      bint reverse=False):
    """Gradient with respect to the pre-projected gate inputs only."""
    cdef int N = dh.shape[0], T = dh.shape[1], H = dh.shape[2]
    cdef int G = 4 * H
    dxg_arr = np.zeros((N, T, G))
    cdef double[:, :, ::1] dxg = dxg_arr
    cdef double[:, ::1] dh_next = np.zeros((N, H))
    cdef double[:, ::1] dc_next = np.zeros((N, H))
    cdef double[:, ::1] da = np.zeros((N, G))
    cdef double one = 1.0, zero = 0.0
    cdef int s, t, tp, n, j
    cdef double ig, fg, gg, og, tc, dht, dc, cprev
    with nogil:
        for s in range(T):
            t = s if reverse else T - 1 - s
            tp = t + 1 if reverse else t - 1
            for n in range(N):
                for j in range(H):
                    ig = gates[n, t, j]
                    fg = gates[n, t, H + j]
                    gg = gates[n, t, 2 * H + j]
                    og = gates[n, t, 3 * H + j]
                    cprev = c[n, tp, j] if (tp >= 0 and tp < T) else 0.0
                    tc = tanh(c[n, t, j])
                    dht = dh[n, t, j] + dh_next[n, j]
                    dc = dc_next[n, j] + dht * og * (1.0 - tc * tc)
                    da[n, j] = dc * gg * ig * (1.0 - ig)
                    da[n, H + j] = dc * cprev * fg * (1.0 - fg)
                    da[n, 2 * H + j] = dc * ig * (1.0 - gg * gg)
                    da[n, 3 * H + j] = dht * tc * og * (1.0 - og)
                    dc_next[n, j] = dc * fg
                for j in range(G):
                    dxg[n, t, j] = da[n, j]
            if H > 0:
                dgemm(b"T", b"N", &H, &N, &G, &one, <double*>&U[0, 0], &G,
                      &da[0, 0], &G, &zero, &dh_next[0, 0], &H)
    return dxg_arr
