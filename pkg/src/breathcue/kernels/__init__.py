"""Hot-loop kernels with a compiled backend and a numpy fallback.

The compiled Cython module is used when it imports; set
``BREATHCUE_PURE_PYTHON=1`` to force the numpy implementation. ``BACKEND``
names the active choice and :func:`use_backend` switches at runtime (used by
the tests and the benchmark to compare the two).
"""

import os

import numpy as np

from . import _recurrence_py

try:
    from . import _recurrence_cy
except ImportError:  # extension not built
    _recurrence_cy = None

AVAILABLE = ("numpy",) + (("cython",) if _recurrence_cy is not None else ())

BACKEND = "numpy"
if _recurrence_cy is not None and not os.environ.get("BREATHCUE_PURE_PYTHON"):
    BACKEND = "cython"


def use_backend(name):
    """Select ``"cython"`` or ``"numpy"``; returns the previous backend name."""
    global BACKEND
    if name not in AVAILABLE:
        raise ValueError(f"backend {name!r} not available; have {AVAILABLE}")
    previous, BACKEND = BACKEND, name
    return previous


def lstm_forward(xg, U, reverse=False):
    xg = np.ascontiguousarray(xg, dtype=np.float64)
    U = np.ascontiguousarray(U, dtype=np.float64)
    if BACKEND == "cython":
        return _recurrence_cy.lstm_forward(xg, U, bool(reverse))
    return _recurrence_py.lstm_forward(xg, U, reverse)


def lstm_backward(dh, U, h, c, gates, reverse=False):
    if BACKEND != "cython":
        return _recurrence_py.lstm_backward(dh, U, h, c, gates, reverse)
    dh = np.ascontiguousarray(dh, dtype=np.float64)
    U = np.ascontiguousarray(U, dtype=np.float64)
    dxg = _recurrence_cy.lstm_backward_dxg(dh, U, c, gates, bool(reverse))
    H = dh.shape[2]
    h_prev = np.zeros_like(h)
    if reverse:
        h_prev[:, :-1] = h[:, 1:]
    else:
        h_prev[:, 1:] = h[:, :-1]
    dU = h_prev.reshape(-1, H).T @ dxg.reshape(-1, 4 * H)
    return dxg, dU
