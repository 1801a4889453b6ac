"""Stacked bidirectional LSTMs, mean pooling and a two-logit head."""

from __future__ import annotations

import numpy as np

from . import diffcore as dc
from .errors import ConfigError

# class indices of the logits
SPOOF = 0
BONAFIDE = 1


def init_lstm_direction(rng, d_in, hidden):
    bound = 1.0 / np.sqrt(hidden)
    return {
        "wx": rng.uniform(-bound, bound, (d_in, 4 * hidden)),
        "wh": rng.uniform(-bound, bound, (hidden, 4 * hidden)),
        "b": rng.uniform(-bound, bound, 4 * hidden),
    }


def init_classifier(rng, d_in, hidden_sizes):
    params = {}
    width = d_in
    for layer, hidden in enumerate(hidden_sizes):
        for direction in ("fwd", "bwd"):
            for key, value in init_lstm_direction(rng, width, hidden).items():
                params[f"lstm{layer}_{direction}_{key}"] = value
        width = 2 * hidden
    bound = 1.0 / np.sqrt(width)
    params["head_w"] = rng.uniform(-bound, bound, (width, 2))
    params["head_b"] = np.zeros(2)
    return params


def lstm_direction(x, wx, wh, b, reverse):
    return dc.lstm_sequence(dc.affine(x, wx, b), wh, reverse=reverse)


def bilstm_layer(x, params, prefix):
    fwd = lstm_direction(x, params[f"{prefix}_fwd_wx"], params[f"{prefix}_fwd_wh"],
                         params[f"{prefix}_fwd_b"], reverse=False)
    bwd = lstm_direction(x, params[f"{prefix}_bwd_wx"], params[f"{prefix}_bwd_wh"],
                         params[f"{prefix}_bwd_b"], reverse=True)
    return dc.concat([fwd, bwd], axis=-1)


def bilstm_forward(x, params, n_layers):
    """(N, T, D) -> (N, T, 2*H_last); zero initial states in every direction."""
    x = dc.as_tensor(x)
    if x.ndim == 2:
        x = dc.reshape(x, (1,) + x.shape)
    for layer in range(n_layers):
        wx = params[f"lstm{layer}_fwd_wx"]
        if dc.as_tensor(wx).shape[0] != x.shape[-1]:
            raise ConfigError(f"BiLSTM layer {layer} expects width {dc.as_tensor(wx).shape[0]}, got {x.shape[-1]}")
        x = bilstm_layer(x, params, f"lstm{layer}")
    return x


def pool_and_logits(seq, head_w, head_b):
    """Time-mean of (N, T, C) followed by an affine map to two logits."""
    seq = dc.as_tensor(seq)
    if seq.shape[-2] < 1:
        raise ConfigError("cannot pool an empty sequence")
    return dc.affine(dc.mean(seq, axis=-2), head_w, head_b)
