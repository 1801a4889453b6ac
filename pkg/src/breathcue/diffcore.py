"""Dense float64 tensors with reverse-mode gradients recorded on a tape.

Operations run eagerly on numpy arrays. While a :class:`Tape` is active (as a
context manager) every operation that touches a tensor with
``requires_grad=True`` appends a record holding its backward closure;
:meth:`Tape.backward` replays those records in exact reverse order.

    >>> W = Tensor([[3.0]], requires_grad=True)
    >>> with Tape() as tape:
    ...     y = affine(Tensor([[2.0]]), W, Tensor([1.0]))
    >>> tape.backward(y)
    >>> tape.grad(W)
    array([[2.]])

Outside a tape nothing is recorded, which is how inference runs.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .errors import ConfigError, InputError

SELU_ALPHA = 1.6732632423543772
SELU_SCALE = 1.0507009873554805

_local = threading.local()


def _tape_stack():
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def active_tape():
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    __slots__ = ("data", "requires_grad", "name")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def numpy(self):
        return self.data

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}{flag})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    @property
    def T(self):
        return transpose(self)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def detach(x):
    """Same values, cut from any tape: gradients never reach ``x`` through it."""
    return Tensor(as_tensor(x).data, requires_grad=False)


@dataclass
class _Record:
    name: str
    inputs: tuple
    output: Tensor
    backward: Callable[[np.ndarray], Sequence]


class Tape:
    """Ordered record of executed kernels plus accumulated leaf gradients."""

    def __init__(self):
        self.records: list[_Record] = []
        self._grads: dict[int, np.ndarray] = {}
        self._keep: dict[int, Tensor] = {}

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc):
        _tape_stack().remove(self)
        return False

    def __len__(self):
        return len(self.records)

    def backward(self, loss, grad=None, visit=None):
        """Propagate from ``loss`` (scalar unless ``grad`` is given).

        ``visit``, if a list, receives the name of every record in the order
        the reverse pass walks them.
        """
        loss = as_tensor(loss)
        if grad is None:
            if loss.size != 1:
                raise ConfigError(f"backward needs a scalar loss, got shape {loss.shape}")
            grad = np.ones_like(loss.data)
        pending = {id(loss): np.asarray(grad, dtype=np.float64)}
        self._keep[id(loss)] = loss
        produced = set()
        for rec in reversed(self.records):
            if visit is not None:
                visit.append(rec.name)
            produced.add(id(rec.output))
            g = pending.pop(id(rec.output), None)
            if g is None:
                continue
            for x, gx in zip(rec.inputs, rec.backward(g)):
                if gx is None or not x.requires_grad:
                    continue
                key = id(x)
                if key in pending:
                    pending[key] = pending[key] + gx
                else:
                    pending[key] = gx
                    self._keep[key] = x
        for key, g in pending.items():
            if key in produced:
                continue
            if key in self._grads:
                self._grads[key] = self._grads[key] + g
            else:
                self._grads[key] = g

    def grad(self, x):
        """Accumulated gradient of a leaf; exactly zero if it was never reached."""
        g = self._grads.get(id(x))
        if g is None:
            return np.zeros_like(x.data)
        return g

    def gradients(self, params):
        return [self.grad(p) for p in params]


def custom_op(name, out_data, inputs, backward):
    """Register a kernel result; ``backward(g)`` returns one gradient per input."""
    tape = active_tape()
    inputs = tuple(as_tensor(x) for x in inputs)
    if tape is None or not any(x.requires_grad for x in inputs):
        return Tensor(out_data)
    out = Tensor(out_data, requires_grad=True)
    tape.records.append(_Record(name, inputs, out, backward))
    return out


def unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _stable_sigmoid(x):
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


# elementwise arithmetic


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return custom_op(
        "add", a.data + b.data, (a, b),
        lambda g: (unbroadcast(g, a.shape), unbroadcast(g, b.shape)),
    )


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return custom_op(
        "sub", a.data - b.data, (a, b),
        lambda g: (unbroadcast(g, a.shape), unbroadcast(-g, b.shape)),
    )


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return custom_op(
        "mul", a.data * b.data, (a, b),
        lambda g: (unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)),
    )


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data
    return custom_op(
        "div", out, (a, b),
        lambda g: (unbroadcast(g / b.data, a.shape), unbroadcast(-g * out / b.data, b.shape)),
    )


def matmul(a, b):
    """Batched matrix product; ``b`` may be a plain matrix shared across the batch."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ConfigError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out = np.matmul(a.data, b.data)

    def backward(g):
        ga = gb = None
        if a.requires_grad:
            ga = unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        if b.requires_grad:
            if b.ndim == 2 and a.ndim > 2:
                gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return ga, gb

    return custom_op("matmul", out, (a, b), backward)


def affine(x, W, b=None):
    """``x @ W (+ b)`` applied to the last axis of ``x``."""
    x, W = as_tensor(x), as_tensor(W)
    if W.ndim != 2 or x.ndim < 1 or x.shape[-1] != W.shape[0]:
        raise ConfigError(f"affine shape mismatch: input {x.shape}, weight {W.shape}")
    if b is not None:
        b = as_tensor(b)
        if b.shape != (W.shape[1],):
            raise ConfigError(f"affine bias shape {b.shape} does not match weight {W.shape}")
    squeeze = x.ndim == 1
    if squeeze:
        x = reshape(x, (1, -1))
    y = matmul(x, W)
    if b is not None:
        y = add(y, b)
    return reshape(y, (-1,)) if squeeze else y


# nonlinearities


def sigmoid(x):
    x = as_tensor(x)
    y = _stable_sigmoid(x.data)
    return custom_op("sigmoid", y, (x,), lambda g: (g * y * (1.0 - y),))


def tanh(x):
    x = as_tensor(x)
    y = np.tanh(x.data)
    return custom_op("tanh", y, (x,), lambda g: (g * (1.0 - y * y),))


def relu(x):
    x = as_tensor(x)
    mask = x.data > 0
    return custom_op("relu", x.data * mask, (x,), lambda g: (g * mask,))


def selu(x):
    x = as_tensor(x)
    pos = x.data > 0
    ex = np.exp(np.minimum(x.data, 0.0))
    y = SELU_SCALE * np.where(pos, x.data, SELU_ALPHA * (ex - 1.0))
    dy = SELU_SCALE * np.where(pos, 1.0, SELU_ALPHA * ex)
    return custom_op("selu", y, (x,), lambda g: (g * dy,))


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(x):
    """GELU, tanh approximation."""
    x = as_tensor(x)
    v = x.data
    u = _GELU_C * (v + 0.044715 * v ** 3)
    t = np.tanh(u)
    y = 0.5 * v * (1.0 + t)
    dy = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * _GELU_C * (1.0 + 3 * 0.044715 * v * v)
    return custom_op("gelu", y, (x,), lambda g: (g * dy,))


def exp(x):
    x = as_tensor(x)
    y = np.exp(x.data)
    return custom_op("exp", y, (x,), lambda g: (g * y,))


def log(x):
    x = as_tensor(x)
    return custom_op("log", np.log(x.data), (x,), lambda g: (g / x.data,))


def sqrt(x):
    x = as_tensor(x)
    y = np.sqrt(x.data)
    return custom_op("sqrt", y, (x,), lambda g: (g * 0.5 / y,))


def absolute(x):
    x = as_tensor(x)
    return custom_op("abs", np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),))


def clip(x, lo=None, hi=None):
    """Clamp values; gradient passes only where the input was inside the bounds."""
    x = as_tensor(x)
    y = np.clip(x.data, lo, hi)
    inside = y == x.data
    return custom_op("clip", y, (x,), lambda g: (g * inside,))


# reductions and shape manipulation


def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum_(x, axis=None, keepdims=False):
    x = as_tensor(x)
    axes = _norm_axis(axis, x.ndim)
    y = x.data.sum(axis=axes, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)

    return custom_op("sum", y, (x,), backward)


def mean(x, axis=None, keepdims=False):
    x = as_tensor(x)
    axes = _norm_axis(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    return mul(sum_(x, axis=axes, keepdims=keepdims), 1.0 / count)


def reshape(x, shape):
    x = as_tensor(x)
    return custom_op("reshape", x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def transpose(x, axes=None):
    x = as_tensor(x)
    if axes is None:
        axes = tuple(range(x.ndim))[::-1]
    inverse = np.argsort(axes)
    return custom_op(
        "transpose", np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inverse),)
    )


def _is_fancy(index):
    items = index if isinstance(index, tuple) else (index,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def getitem(x, index):
    x = as_tensor(x)
    fancy = _is_fancy(index)

    def backward(g):
        out = np.zeros_like(x.data)
        if fancy:
            np.add.at(out, index, g)
        else:
            out[index] = g
        return (out,)

    return custom_op("getitem", x.data[index], (x,), backward)


def concat(xs, axis=-1):
    xs = [as_tensor(x) for x in xs]
    y = np.concatenate([x.data for x in xs], axis=axis)
    bounds = np.cumsum([x.shape[axis] for x in xs])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return custom_op("concat", y, xs, backward)


def stack(xs, axis=0):
    xs = [as_tensor(x) for x in xs]
    y = np.stack([x.data for x in xs], axis=axis)

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(xs)))

    return custom_op("stack", y, xs, backward)


def pad_time(x, left, right=0):
    """Zero-pad axis 1 of an (N, T, C) tensor."""
    x = as_tensor(x)
    y = np.pad(x.data, ((0, 0), (left, right), (0, 0)))
    T = x.shape[1]
    return custom_op("pad_time", y, (x,), lambda g: (g[:, left : left + T],))


# signal-shaped kernels


def unfold(x, size, step):
    """Sliding windows along axis 1: (N, T, C) -> (N, T', size*C).

    Window ``t`` covers input frames ``[t*step, t*step + size)``; only full
    windows are produced, so ``T' = (T - size)//step + 1``.
    """
    x = as_tensor(x)
    N, T, C = x.shape
    if T < size:
        raise InputError(f"sequence length {T} shorter than window {size}")
    Tp = (T - size) // step + 1
    win = np.lib.stride_tricks.sliding_window_view(x.data, size, axis=1)[:, ::step][:, :Tp]
    y = np.ascontiguousarray(np.swapaxes(win, 2, 3)).reshape(N, Tp, size * C)

    def backward(g):
        g4 = g.reshape(N, Tp, size, C)
        gx = np.zeros_like(x.data)
        end = step * (Tp - 1) + 1
        for k in range(size):
            gx[:, k : k + end : step] += g4[:, :, k]
        return (gx,)

    return custom_op("unfold", y, (x,), backward)


def adaptive_bins(T, bins):
    """Index ranges [start, end) covering ``T`` steps with ``bins`` windows."""
    return [((i * T) // bins, -((-(i + 1) * T) // bins)) for i in range(bins)]


def adaptive_max_pool(x, bins):
    """Max over axis 1 of (N, T, C) inside each adaptive bin."""
    x = as_tensor(x)
    N, T, C = x.shape
    if T < bins:
        raise InputError(f"cannot pool {T} steps into {bins} bins")
    ranges = adaptive_bins(T, bins)
    y = np.empty((N, bins, C))
    arg = np.empty((N, bins, C), dtype=np.intp)
    for i, (s, e) in enumerate(ranges):
        idx = np.argmax(x.data[:, s:e], axis=1)
        arg[:, i] = idx + s
        y[:, i] = np.take_along_axis(x.data, (idx + s)[:, None, :], axis=1)[:, 0]

    def backward(g):
        gx = np.zeros_like(x.data)
        n_idx = np.arange(N)[:, None, None]
        c_idx = np.arange(C)[None, None, :]
        np.add.at(gx, (n_idx, arg, c_idx), g)
        return (gx,)

    return custom_op("adaptive_max_pool", y, (x,), backward)


def adaptive_avg_pool(x, bins):
    x = as_tensor(x)
    N, T, C = x.shape
    if T < bins:
        raise InputError(f"cannot pool {T} steps into {bins} bins")
    ranges = adaptive_bins(T, bins)
    y = np.stack([x.data[:, s:e].mean(axis=1) for s, e in ranges], axis=1)

    def backward(g):
        gx = np.zeros_like(x.data)
        for i, (s, e) in enumerate(ranges):
            gx[:, s:e] += g[:, i : i + 1] / (e - s)
        return (gx,)

    return custom_op("adaptive_avg_pool", y, (x,), backward)


def softmax(x, axis=-1, scale=1.0):
    """Softmax of ``scale * x``, stabilized by subtracting the max."""
    x = as_tensor(x)
    z = scale * x.data
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (scale * y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return custom_op("softmax", y, (x,), backward)


def rowwise_softmax(x, scale=1.0):
    x = as_tensor(x)
    if x.ndim < 1 or x.shape[-1] < 1:
        raise ConfigError(f"softmax needs at least one column, got shape {x.shape}")
    return softmax(x, axis=-1, scale=scale)


def log_softmax(x, axis=-1):
    x = as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    y = z - lse
    p = np.exp(y)

    def backward(g):
        return (g - p * g.sum(axis=axis, keepdims=True),)

    return custom_op("log_softmax", y, (x,), backward)


def l2_normalize(x, axis=-1):
    x = as_tensor(x)
    norm = np.sqrt((x.data ** 2).sum(axis=axis, keepdims=True))
    if np.any(norm == 0):
        raise InputError("cannot normalize a zero-norm vector")
    y = x.data / norm

    def backward(g):
        return ((g - y * (g * y).sum(axis=axis, keepdims=True)) / norm,)

    return custom_op("l2_normalize", y, (x,), backward)


def layer_norm(x, eps=1e-5):
    """Zero-mean, unit-variance rows along the last axis (no affine part)."""
    x = as_tensor(x)
    mu = x.data.mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(x.data.var(axis=-1, keepdims=True) + eps)
    xhat = (x.data - mu) * inv

    def backward(g):
        gm = g.mean(axis=-1, keepdims=True)
        gx = (g * xhat).mean(axis=-1, keepdims=True)
        return (inv * (g - gm - xhat * gx),)

    return custom_op("layer_norm", xhat, (x,), backward)


def cosine_similarity(a, b, axis=-1):
    """Cosine similarity along ``axis`` with broadcasting between ``a`` and ``b``."""
    a, b = as_tensor(a), as_tensor(b)
    na = np.sqrt((a.data ** 2).sum(axis=axis, keepdims=True))
    nb = np.sqrt((b.data ** 2).sum(axis=axis, keepdims=True))
    if np.any(na == 0) or np.any(nb == 0):
        raise InputError("cosine similarity of a zero-norm vector is undefined")
    dot = (a.data * b.data).sum(axis=axis, keepdims=True)
    s = dot / (na * nb)

    def backward(g):
        g = np.expand_dims(g, axis)
        ga = g * (b.data / (na * nb) - s * a.data / na ** 2)
        gb = g * (a.data / (na * nb) - s * b.data / nb ** 2)
        return unbroadcast(ga, a.shape), unbroadcast(gb, b.shape)

    return custom_op("cosine_similarity", np.squeeze(s, axis=axis), (a, b), backward)


def batch_norm(x, gamma, beta, running_mean, running_var, training,
               momentum=0.1, eps=1e-5):
    """Normalize the last (channel) axis over all other axes.

    In training mode batch statistics are used and the running buffers (plain
    numpy arrays) are updated in place with ``momentum``; the running variance
    uses the unbiased estimate. In inference mode the running buffers are used.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    axes = tuple(range(x.ndim - 1))
    if training:
        m = x.data.size // x.shape[-1]
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var * (m / max(m - 1, 1))
    else:
        mu, var = running_mean, running_var
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    y = gamma.data * xhat + beta.data

    def backward(g):
        dgamma = (g * xhat).sum(axis=axes)
        dbeta = g.sum(axis=axes)
        dxhat = g * gamma.data
        if training:
            dx = inv / m * (
                m * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes)
            )
        else:
            dx = dxhat * inv
        return dx, dgamma, dbeta

    return custom_op("batch_norm", y, (x, gamma, beta), backward)


def lstm_sequence(xg, U, reverse=False):
    """Whole-sequence LSTM over pre-projected gates (N, T, 4H) -> hidden (N, T, H)."""
    xg, U = as_tensor(xg), as_tensor(U)
    if xg.ndim != 3 or U.ndim != 2 or xg.shape[2] != U.shape[1] or U.shape[1] != 4 * U.shape[0]:
        raise ConfigError(f"lstm shape mismatch: gates {xg.shape}, recurrent {U.shape}")
    h, c, gates = kernels.lstm_forward(xg.data, U.data, reverse)

    def backward(g):
        dxg, dU = kernels.lstm_backward(g, U.data, h, c, gates, reverse)
        return dxg, dU

    return custom_op("lstm_sequence", h, (xg, U), backward)
