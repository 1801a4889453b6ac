"""Temporal branch: layered toy encoder, sigmoid layer weighting, breath gating."""

from __future__ import annotations

import numpy as np

from . import diffcore as dc
from .errors import ConfigError, InputError

WINDOW = 400
HOP = 320
CONV_TAPS = 3


def init_encoder(rng, n_layers, dim):
    """Parameter arrays for ``toy_encoder``; keys are prefixed per layer."""
    p = {
        "w_in": rng.standard_normal((WINDOW, dim)) / np.sqrt(WINDOW),
        # nonzero bias: quiet frames still carry features the breath gate can scale
        "b_in": rng.standard_normal(dim),
    }
    for i in range(n_layers):
        p[f"conv{i}_w"] = rng.standard_normal((CONV_TAPS * dim, dim)) * 0.5 / np.sqrt(CONV_TAPS * dim)
        p[f"conv{i}_b"] = np.zeros(dim)
    return p


def toy_encoder(wave, params, n_layers):
    """Frame the waveform (window 400, hop 320) and run ``n_layers`` residual
    causal-convolution + GELU layers; returns the list of per-layer outputs,
    each (N, T, D) with ``T = (S - 400)//320 + 1``.
    """
    wave = dc.as_tensor(wave)
    if wave.ndim == 1:
        wave = dc.reshape(wave, (1, -1))
    N, S = wave.shape
    if S < WINDOW:
        raise InputError(f"waveform of {S} samples is shorter than one {WINDOW}-sample window")
    if n_layers < 1:
        raise ConfigError(f"encoder needs at least one layer, got {n_layers}")
    mu = dc.mean(wave, axis=1, keepdims=True)
    centered = dc.sub(wave, mu)
    var = dc.mean(dc.mul(centered, centered), axis=1, keepdims=True)
    x = dc.div(centered, dc.sqrt(dc.add(var, 1e-7)))
    frames = dc.unfold(dc.reshape(x, (N, S, 1)), WINDOW, HOP)
    h = dc.gelu(dc.affine(frames, params["w_in"], params["b_in"]))
    layers = []
    for i in range(n_layers):
        ctx = dc.unfold(dc.pad_time(h, CONV_TAPS - 1), CONV_TAPS, 1)
        h = dc.layer_norm(dc.add(h, dc.gelu(dc.affine(ctx, params[f"conv{i}_w"], params[f"conv{i}_b"]))))
        layers.append(h)
    return layers


def sls_aggregate(layers, u, b):
    """Weight each layer by ``sigmoid(u . mean_t(h_i) + b)`` and sum.

    ``layers`` is a list of (N, T, D) tensors or one (N, L, T, D) tensor.
    Returns ``(x_tilde, weights)`` with weights of shape (N, L).
    """
    H = dc.stack(layers, axis=1) if isinstance(layers, (list, tuple)) else dc.as_tensor(layers)
    u, b = dc.as_tensor(u), dc.as_tensor(b)
    if H.ndim != 4 or u.shape != (H.shape[-1],):
        raise ConfigError(f"SLS shape mismatch: stack {H.shape}, scorer {u.shape}")
    pooled = dc.mean(H, axis=2)                                  # (N, L, D)
    score = dc.add(dc.reshape(dc.matmul(pooled, dc.reshape(u, (-1, 1))), pooled.shape[:2]), b)
    w = dc.sigmoid(score)                                        # (N, L)
    weighted = dc.mul(H, dc.reshape(w, w.shape + (1, 1)))
    return dc.sum_(weighted, axis=1), w


def film_gate(mask, W1, W2):
    """``G = 1 + sigmoid(relu(m W1) W2)`` per frame; mask (N, T) -> (N, T, D)."""
    m = dc.as_tensor(np.asarray(mask, dtype=np.float64)[..., None])
    hidden = dc.relu(dc.matmul(m, W1))
    return dc.add(dc.sigmoid(dc.matmul(hidden, W2)), 1.0)


def breathfilm(x_tilde, mask, W1, W2):
    """Scale each frame of ``x_tilde`` (N, T, D) by its breath gate.

    Returns ``(x_temp, gate)``.
    """
    x_tilde = dc.as_tensor(x_tilde)
    mask = np.asarray(mask)
    if mask.ndim == 1:
        mask = mask[None]
    if mask.shape != x_tilde.shape[:2]:
        raise InputError(
            f"breath mask covers {mask.shape[-1]} frames but features have T={x_tilde.shape[1]}"
        )
    gate = film_gate(mask, W1, W2)
    return dc.mul(gate, x_tilde), gate
