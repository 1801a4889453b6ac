import os
import subprocess
import sys

import numpy as np
import pytest

from breathcue import kernels
from breathcue.kernels import _recurrence_py

needs_cython = pytest.mark.skipif("cython" not in kernels.AVAILABLE, reason="compiled kernel not built")


def _inputs(seed, N=3, T=7, H=5):
    r = np.random.default_rng(seed)
    return r.standard_normal((N, T, 4 * H)), r.standard_normal((H, 4 * H)) * 0.5, r.standard_normal((N, T, H))


@needs_cython
@pytest.mark.parametrize("reverse", [False, True])
@pytest.mark.parametrize("seed", range(5))
def test_backends_agree(seed, reverse):
    xg, U, dh = _inputs(seed)
    out = {}
    for name in ("numpy", "cython"):
        prev = kernels.use_backend(name)
        try:
            h, c, gates = kernels.lstm_forward(xg, U, reverse)
            out[name] = (h, c, gates) + tuple(kernels.lstm_backward(dh, U, h, c, gates, reverse))
        finally:
            kernels.use_backend(prev)
    for a, b in zip(out["numpy"], out["cython"]):
        assert np.allclose(a, b, rtol=1e-12, atol=1e-13)


def test_numpy_forward_matches_plain_loop():
    xg, U, _ = _inputs(0, N=1, T=4, H=2)
    h = np.zeros(2)
    c = np.zeros(2)
    sig = lambda z: 1 / (1 + np.exp(-z))
    ref = []
    for t in range(4):
        z = xg[0, t] + h @ U
        i, f, g, o = sig(z[:2]), sig(z[2:4]), np.tanh(z[4:6]), sig(z[6:])
        c = f * c + i * g
        h = o * np.tanh(c)
        ref.append(h)
    assert np.allclose(_recurrence_py.lstm_forward(xg, U)[0][0], ref, atol=1e-14)


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.use_backend("fortran")


def test_env_var_selects_numpy_fallback():
    env = dict(os.environ, BREATHCUE_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from breathcue import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"


@needs_cython
def test_compiled_backend_is_default():
    env = {k: v for k, v in os.environ.items() if k != "BREATHCUE_PURE_PYTHON"}
    out = subprocess.run([sys.executable, "-c", "from breathcue import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "cython"
