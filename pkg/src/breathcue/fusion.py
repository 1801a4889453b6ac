"""Multi-head cross-attention: frequency features query temporal features."""

from __future__ import annotations

import numpy as np

from . import diffcore as dc
from .errors import ConfigError


def init_attention(rng, dim, heads):
    if dim % heads:
        raise ConfigError(f"model width {dim} is not divisible by {heads} heads")
    scale = 1.0 / np.sqrt(dim)
    return {
        "wq": rng.standard_normal((dim, dim)) * scale,
        "wk": rng.standard_normal((dim, dim)) * scale,
        "wv": rng.standard_normal((dim, dim)) * scale,
        "wo": rng.standard_normal((dim, dim)) * scale,
        "bo": np.zeros(dim),
    }


def _split_heads(x, heads):
    N, T, D = x.shape
    return dc.transpose(dc.reshape(x, (N, T, heads, D // heads)), (0, 2, 1, 3))


def cross_attention(x_freq, x_temp, params, heads):
    """Queries from ``x_freq`` (N, Q, D), keys/values from ``x_temp`` (N, T, D).

    Per head ``softmax(Q K^T / sqrt(d_head)) V``; heads are concatenated and
    passed through the output projection. Returns ``(fused, attention)``
    where attention has shape (N, heads, Q, T).
    """
    x_freq, x_temp = dc.as_tensor(x_freq), dc.as_tensor(x_temp)
    if x_freq.ndim == 2:
        x_freq = dc.reshape(x_freq, (1,) + x_freq.shape)
    if x_temp.ndim == 2:
        x_temp = dc.reshape(x_temp, (1,) + x_temp.shape)
    D = x_freq.shape[-1]
    if x_temp.shape[-1] != D:
        raise ConfigError(f"fusion width mismatch: queries {x_freq.shape}, keys {x_temp.shape}")
    if D % heads:
        raise ConfigError(f"model width {D} is not divisible by {heads} heads")
    d_head = D // heads
    q = _split_heads(dc.matmul(x_freq, params["wq"]), heads)
    k = _split_heads(dc.matmul(x_temp, params["wk"]), heads)
    v = _split_heads(dc.matmul(x_temp, params["wv"]), heads)
    scores = dc.matmul(q, dc.transpose(k, (0, 1, 3, 2)))
    attn = dc.softmax(scores, axis=-1, scale=1.0 / np.sqrt(d_head))
    ctx = dc.matmul(attn, v)                                     # (N, h, Q, d_head)
    N, _, Q, _ = ctx.shape
    merged = dc.reshape(dc.transpose(ctx, (0, 2, 1, 3)), (N, Q, D))
    return dc.affine(merged, params["wo"], params["bo"]), attn
