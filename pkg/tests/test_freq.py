import logging

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from breathcue.errors import ConfigError, InputError
from breathcue.freq import (BatchNormState, SincBank, pool_norm_project, hamming, pre_emphasis, sinc_filterbank,
                            sinc_kernels)


def test_pre_emphasis_examples():
    x = np.array([0.3, -1.0, 2.0])
    assert np.array_equal(pre_emphasis(x, 0.0), x)
    assert np.array_equal(pre_emphasis(np.ones(5), 1.0), [1, 0, 0, 0, 0])
    assert np.allclose(pre_emphasis([1.0, 2.0, 3.0], 0.97), [1.0, 1.03, 1.06], atol=1e-12)
    with pytest.raises(ConfigError):
        pre_emphasis(x, 1.5)


def _response_db(h, f_pass, f_stop, sr=16000):
    n = np.arange(h.size)
    mag = lambda f: abs(np.sum(h * np.exp(-2j * np.pi * f * n / sr)))
    return 20 * np.log10(mag(f_pass) / mag(f_stop))


def test_band_pass_selectivity():
    h = sinc_kernels(np.array([1000.0]), np.array([2000.0]), 129, 16000).data[:, 0]
    assert _response_db(h, 1500, 4000) >= 20
    assert np.allclose(h, h[::-1])  # linear phase


def test_all_pass_limit_tracks_input(rng):
    bank = SincBank.from_cutoffs([0.0], [8000.0], kernel_size=65, stride=1, min_band_hz=50.0)
    x = rng.standard_normal(4000)
    y = sinc_filterbank(x, bank).data[0, :, 0]
    aligned = x[32:32 + y.size]
    assert np.corrcoef(y, aligned)[0, 1] > 0.99


def test_mel_init_and_constraints():
    bank = SincBank.mel_init(16, 65, 160)
    lo, hi = (t.data for t in bank.cutoffs())
    assert np.all(lo >= 0) and np.all(hi <= 8000) and np.all(hi > lo)
    assert np.all(np.diff(lo) > 0)
    with pytest.raises(ConfigError):
        SincBank.mel_init(4, 64, 160)


def test_enforce_constraints_clamps_and_logs(caplog):
    bank = SincBank.from_cutoffs([100.0, 500.0], [1000.0, 2000.0])
    bank.low_raw.data = np.array([-200.0, 7990.0])
    bank.band_raw.data = np.array([50000.0, 10.0])
    with caplog.at_level(logging.WARNING, logger="breathcue.freq"):
        bank.enforce_constraints()
    assert "clamped" in caplog.text
    lo, hi = (t.data for t in bank.cutoffs())
    assert np.all(lo >= 0) and np.all(hi <= 8000) and np.all(hi - lo >= 50 - 1e-9)


@given(st.lists(st.tuples(st.floats(-1e5, 1e5), st.floats(-1e5, 1e5)), min_size=1, max_size=6))
def test_cutoff_ordering_after_any_update(raw):
    bank = SincBank.mel_init(len(raw))
    bank.low_raw.data = np.array([a for a, _ in raw])
    bank.band_raw.data = np.array([b for _, b in raw])
    bank.enforce_constraints()
    lo, hi = (t.data for t in bank.cutoffs())
    assert np.all(0 <= lo) and np.all(lo < hi) and np.all(hi <= bank.nyquist)


def test_filterbank_shape():
    bank = SincBank.mel_init(16, 65, 160)
    out = sinc_filterbank(np.zeros((2, 64600)), bank)
    assert out.shape == (2, (64600 - 65) // 160 + 1, 16)


def test_hamming_endpoints():
    w = hamming(5)
    assert w[0] == pytest.approx(0.08) and w[2] == pytest.approx(1.0)


def test_pool_project_examples(rng):
    inc = np.tile(np.arange(64.0)[None, :, None], (1, 1, 2))
    pooled = pool_norm_project(inc, np.ones(2), np.zeros(2), BatchNormState.fresh(2), np.eye(2), np.zeros(2),
                               training=False)
    # inference with fresh stats is a near-identity batch norm; SELU is monotone on positives
    bins_last = np.arange(1, 64, 2.0)
    expected = 1.0507009873554805 * bins_last / np.sqrt(1 + 1e-5)
    assert np.allclose(pooled.data[0, :, 0], expected)
    out = pool_norm_project(rng.standard_normal((3, 401, 4)), np.ones(4), np.zeros(4), BatchNormState.fresh(4),
                            rng.standard_normal((4, 10)), np.zeros(10), training=True)
    assert out.shape == (3, 32, 10)


def test_pool_project_too_short():
    with pytest.raises(InputError, match="fewer than 32"):
        pool_norm_project(np.ones((1, 31, 2)), np.ones(2), np.zeros(2), BatchNormState.fresh(2), np.eye(2),
                          np.zeros(2), training=False)
