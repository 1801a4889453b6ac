"""Pure numpy LSTM recurrence over a whole sequence.

Both functions take pre-projected gate inputs ``xg = x @ W + b`` of shape
(N, T, 4H) with gate order (input, forget, cell, output). Initial hidden and
cell states are zero. ``reverse=True`` runs the recurrence from the last
frame to the first; outputs stay indexed by original frame position.
"""

import numpy as np


def _sigmoid(x):
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


def lstm_forward(xg, U, reverse=False):
    """Run the recurrence; returns ``(h, c, gates)`` with activated gates."""
    N, T, G = xg.shape
    H = G // 4
    h = np.zeros((N, T, H))
    c = np.zeros((N, T, H))
    gates = np.empty((N, T, G))
    hp = np.zeros((N, H))
    cp = np.zeros((N, H))
    steps = range(T - 1, -1, -1) if reverse else range(T)
    for t in steps:
        a = xg[:, t] + hp @ U
        act = gates[:, t]
        act[:, : 2 * H] = _sigmoid(a[:, : 2 * H])
        act[:, 2 * H : 3 * H] = np.tanh(a[:, 2 * H : 3 * H])
        act[:, 3 * H :] = _sigmoid(a[:, 3 * H :])
        i, f, g, o = act[:, :H], act[:, H : 2 * H], act[:, 2 * H : 3 * H], act[:, 3 * H :]
        cp = f * cp + i * g
        hp = o * np.tanh(cp)
        c[:, t] = cp
        h[:, t] = hp
    return h, c, gates


def lstm_backward(dh, U, h, c, gates, reverse=False):
    """Backpropagate ``dh`` (N, T, H) through time; returns ``(dxg, dU)``."""
    N, T, H = dh.shape
    G = 4 * H
    dxg = np.empty((N, T, G))
    dh_next = np.zeros((N, H))
    dc_next = np.zeros((N, H))
    zeros = np.zeros((N, H))
    steps = range(T) if reverse else range(T - 1, -1, -1)
    for t in steps:
        tp = t + 1 if reverse else t - 1
        c_prev = c[:, tp] if 0 <= tp < T else zeros
        act = gates[:, t]
        i, f, g, o = act[:, :H], act[:, H : 2 * H], act[:, 2 * H : 3 * H], act[:, 3 * H :]
        tc = np.tanh(c[:, t])
        dht = dh[:, t] + dh_next
        dc = dc_next + dht * o * (1.0 - tc * tc)
        da = dxg[:, t]
        da[:, :H] = dc * g * i * (1.0 - i)
        da[:, H : 2 * H] = dc * c_prev * f * (1.0 - f)
        da[:, 2 * H : 3 * H] = dc * i * (1.0 - g * g)
        da[:, 3 * H :] = dht * tc * o * (1.0 - o)
        dc_next = dc * f
        dh_next = da @ U.T
    h_prev = np.zeros_like(h)
    if reverse:
        h_prev[:, :-1] = h[:, 1:]
    else:
        h_prev[:, 1:] = h[:, :-1]
    dU = h_prev.reshape(-1, H).T @ dxg.reshape(-1, G)
    return dxg, dU
