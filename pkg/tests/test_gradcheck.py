"""Finite-difference checks for every differentiable kernel and composite block.

Each entry builds (kernel, inputs, wrt) from a seed; every entry runs for
SEEDS seeds in double precision at the library's step and tolerance.
"""

import numpy as np
import pytest

from breathcue import diffcore as dc
from breathcue import kernels
from breathcue.classifier import bilstm_forward, init_classifier, pool_and_logits
from breathcue.freq import BatchNormState, SincBank, pool_norm_project, sinc_filterbank, sinc_kernels
from breathcue.fusion import cross_attention, init_attention
from breathcue.gradcheck import STEP, TOLERANCE, gradcheck, relative_error
from breathcue.losses import (BonaFideCenter, LossWeights, augment_bonafide, batch_objective, center_loss,
                              contrast_loss, feature_loss, pscl, total_loss, weighted_ce,
                              weighted_ce_from_logits)
from breathcue.temporal import breathfilm, init_encoder, sls_aggregate, toy_encoder

SEEDS = range(20)


def away_from_zero(a, margin=0.05):
    return a + np.sign(a) * margin + (a == 0) * margin


def _center(rng, D):
    return BonaFideCenter(D, c=rng.standard_normal(D), initialized=True)


def _pos(rng, shape):
    return rng.uniform(0.5, 2.0, shape)


# each builder: rng -> (callable, list of arrays, wrt indices or None)
KERNELS = {
    "affine": lambda r: (dc.affine, [r.standard_normal((3, 4)), r.standard_normal((4, 2)), r.standard_normal(2)], None),
    "matmul_batched": lambda r: (dc.matmul, [r.standard_normal((2, 3, 4)), r.standard_normal((4, 5))], None),
    "add_broadcast": lambda r: (dc.add, [r.standard_normal((3, 4)), r.standard_normal(4)], None),
    "sub": lambda r: (dc.sub, [r.standard_normal((3, 4)), r.standard_normal((3, 1))], None),
    "mul": lambda r: (dc.mul, [r.standard_normal((3, 4)), r.standard_normal((1, 4))], None),
    "div": lambda r: (dc.div, [r.standard_normal((3, 4)), _pos(r, (3, 4))], None),
    "sigmoid": lambda r: (dc.sigmoid, [r.standard_normal((3, 4)) * 3], None),
    "tanh": lambda r: (dc.tanh, [r.standard_normal((3, 4))], None),
    "relu": lambda r: (dc.relu, [away_from_zero(r.standard_normal((3, 4)))], None),
    "selu": lambda r: (dc.selu, [away_from_zero(r.standard_normal((3, 4)))], None),
    "gelu": lambda r: (dc.gelu, [r.standard_normal((3, 4)) * 2], None),
    "exp": lambda r: (dc.exp, [r.standard_normal((3, 4))], None),
    "log": lambda r: (dc.log, [_pos(r, (3, 4))], None),
    "sqrt": lambda r: (dc.sqrt, [_pos(r, (3, 4))], None),
    "absolute": lambda r: (dc.absolute, [away_from_zero(r.standard_normal((3, 4)))], None),
    "clip": lambda r: (lambda x: dc.clip(x, -0.5, 0.5),
                       [np.where(np.abs(a := r.standard_normal((3, 4))) - 0.5 < 0.05, a * 0.5, a)], None),
    "sum_axis": lambda r: (lambda x: dc.sum_(x, axis=1, keepdims=True), [r.standard_normal((3, 4))], None),
    "mean_pool": lambda r: (lambda x: dc.mean(x, axis=-2), [r.standard_normal((2, 5, 3))], None),
    "reshape_transpose": lambda r: (lambda x: dc.transpose(dc.reshape(x, (2, 6)), (1, 0)),
                                    [r.standard_normal((3, 4))], None),
    "getitem_fancy": lambda r: (lambda x: dc.getitem(x, np.array([0, 2, 2, 1])), [r.standard_normal((3, 4))], None),
    "concat": lambda r: (lambda a, b: dc.concat([a, b], axis=-1), [r.standard_normal((2, 3)), r.standard_normal((2, 2))], None),
    "stack": lambda r: (lambda a, b: dc.stack([a, b], axis=1), [r.standard_normal((2, 3)), r.standard_normal((2, 3))], None),
    "pad_time": lambda r: (lambda x: dc.pad_time(x, 2, 1), [r.standard_normal((2, 4, 3))], None),
    "unfold_convolution": lambda r: (lambda x, w: dc.matmul(dc.unfold(x, 5, 3), w),
                                     [r.standard_normal((2, 20, 1)), r.standard_normal((5, 2))], None),
    "adaptive_max_pool": lambda r: (lambda x: dc.adaptive_max_pool(x, 4), [r.standard_normal((2, 11, 3))], None),
    "adaptive_avg_pool": lambda r: (lambda x: dc.adaptive_avg_pool(x, 4), [r.standard_normal((2, 11, 3))], None),
    "softmax": lambda r: (lambda x: dc.softmax(x, axis=-1, scale=0.7), [r.standard_normal((2, 3, 5))], None),
    "rowwise_softmax": lambda r: (dc.rowwise_softmax, [r.standard_normal((2, 5))], None),
    "log_softmax": lambda r: (lambda x: dc.log_softmax(x, axis=-1), [r.standard_normal((3, 4))], None),
    "l2_normalize": lambda r: (dc.l2_normalize, [r.standard_normal((3, 4))], None),
    "layer_norm": lambda r: (dc.layer_norm, [r.standard_normal((2, 3, 6))], None),
    "cosine_similarity": lambda r: (dc.cosine_similarity, [r.standard_normal((3, 4)), r.standard_normal(4)], None),
    "batch_norm_train": lambda r: (
        lambda x, g, b: dc.batch_norm(x, g, b, np.zeros(3), np.ones(3), training=True),
        [r.standard_normal((2, 5, 3)), _pos(r, 3), r.standard_normal(3)], None),
    "batch_norm_infer": lambda r: (
        lambda x, g, b, stats=(r.standard_normal(3), _pos(r, 3)): dc.batch_norm(
            x, g, b, stats[0], stats[1], training=False),
        [r.standard_normal((2, 5, 3)), _pos(r, 3), r.standard_normal(3)], None),
    "lstm_cell_forward": lambda r: (lambda xg, U: dc.lstm_sequence(xg, U),
                                    [r.standard_normal((2, 4, 12)), r.standard_normal((3, 12)) * 0.5], None),
    "lstm_cell_reverse": lambda r: (lambda xg, U: dc.lstm_sequence(xg, U, reverse=True),
                                    [r.standard_normal((2, 4, 12)), r.standard_normal((3, 12)) * 0.5], None),
    "sinc_kernels": lambda r: (lambda lo, hi: sinc_kernels(lo, hi, 33, 16000),
                               [r.uniform(50, 3000, 3), r.uniform(3500, 7900, 3)], None),
}


def _sls(r):
    return (lambda h, u, b: sls_aggregate(h, u, b)[0],
            [r.standard_normal((2, 3, 4, 5)), r.standard_normal(5), r.standard_normal(())], None)


def _film(r):
    mask = (r.uniform(size=(2, 6)) > 0.5).astype(float)
    return (lambda x, w1, w2: breathfilm(x, mask, w1, w2)[0],
            [r.standard_normal((2, 6, 4)), r.standard_normal((1, 3)), r.standard_normal((3, 4))], None)


def _sinc_bank(r):
    wave = r.standard_normal((1, 200))

    def run(low, band):
        bank = SincBank(low, band, kernel_size=33, stride=16, sample_rate=16000, min_band_hz=50.0)
        return sinc_filterbank(wave, bank)

    return run, [r.uniform(100, 3000, 3), r.uniform(200, 2000, 3)], None


def _pool_project(r):
    def run(fmap, gamma, beta, w, b):
        return pool_norm_project(fmap, gamma, beta, BatchNormState.fresh(3), w, b, training=True, steps=4)

    return run, [r.standard_normal((2, 9, 3)), _pos(r, 3), r.standard_normal(3), r.standard_normal((3, 4)),
                 r.standard_normal(4)], None


def _attention(r):
    D, h = 4, 2
    names = ("wq", "wk", "wv", "wo", "bo")
    init = init_attention(r, D, h)

    def run(xf, xt, *weights):
        return cross_attention(xf, xt, dict(zip(names, weights)), h)[0]

    return run, [r.standard_normal((2, 3, D)), r.standard_normal((2, 5, D))] + [init[k] for k in names], None


def _bilstm(r):
    params = init_classifier(r, 3, (3, 2))
    names = sorted(params)

    def run(x, *weights):
        p = dict(zip(names, weights))
        return pool_and_logits(bilstm_forward(x, p, 2), p["head_w"], p["head_b"])

    return run, [r.standard_normal((2, 4, 3))] + [params[k] for k in names], None


def _encoder(r):
    params = init_encoder(r, 2, 3)
    names = sorted(params)
    mask = np.array([[0, 1, 1]])

    def run(wave, *weights):
        p = dict(zip(names, weights))
        layers = toy_encoder(wave, p, 2)
        x, _ = sls_aggregate(layers, np.ones(3) * 0.3, 0.1)
        return breathfilm(x, mask, np.ones((1, 2)), np.full((2, 3), 0.5))[0]

    # waveform -> x_temp end to end, three frames
    return run, [r.standard_normal((1, 400 + 2 * 320))] + [params[k] for k in names], [0, 1, 2]


def _pscl(r):
    return (lambda z: pscl(z, 0.1), [r.standard_normal((4, 5))], None)


def _center_loss(r):
    c = _center(r, 5)
    return (lambda z: center_loss(z, c), [r.standard_normal((4, 5))], None)


def _contrast(r):
    c = _center(r, 5)
    return (lambda z: contrast_loss(z, c), [r.standard_normal((4, 5))], None)


def _wce(r):
    labels = r.integers(0, 2, 5)
    return (lambda logits: weighted_ce(dc.softmax(logits, axis=-1), labels), [r.standard_normal((5, 2))], None)


def _wce_logits(r):
    labels = r.integers(0, 2, 5)
    return (lambda logits: weighted_ce_from_logits(logits, labels), [r.standard_normal((5, 2))], None)


def _augmented_pscl(r):
    return (lambda z: pscl(augment_bonafide(z, 0.1, 3, 4), 0.1), [r.standard_normal((2, 5))], None)


def _objective(r):
    labels = np.array([1, 1, 0, 0, 1, 0])
    center = _center(r, 4)
    w = LossWeights()

    def run(logits, emb):
        parts = batch_objective(logits, emb, labels, center.copy(), w, seed=9)
        return total_loss(weighted_ce_from_logits(logits, labels),
                          feature_loss(parts.pscl, parts.center, parts.contrast), w.lam)

    return run, [r.standard_normal((6, 2)), r.standard_normal((6, 4))], None


COMPOSITES = {
    "sls": _sls, "breathfilm": _film, "sinc_filterbank_cutoffs": _sinc_bank, "pool_norm_project": _pool_project,
    "cross_attention": _attention, "bilstm_and_head": _bilstm, "temporal_branch_end_to_end": _encoder,
    "pscl": _pscl, "pscl_with_augmentation": _augmented_pscl, "center_loss": _center_loss,
    "contrast_loss": _contrast, "weighted_ce": _wce, "weighted_ce_from_logits": _wce_logits,
    "total_objective": _objective,
}


def _run_all(name, builder):
    failures = []
    for seed in SEEDS:
        fn, inputs, wrt = builder(np.random.default_rng(seed))
        rep = gradcheck(fn, inputs, seed=seed, name=name, wrt=wrt)
        if not rep.passed:
            failures.append(str(rep))
    return failures


@pytest.mark.parametrize("name", sorted(KERNELS))
def test_kernel_gradcheck(name):
    assert _run_all(name, KERNELS[name]) == []


@pytest.mark.parametrize("name", sorted(COMPOSITES))
def test_composite_gradcheck(name):
    assert _run_all(name, COMPOSITES[name]) == []


@pytest.mark.parametrize("backend", kernels.AVAILABLE)
def test_lstm_gradcheck_each_backend(backend):
    previous = kernels.use_backend(backend)
    try:
        assert _run_all("lstm_cell_forward", KERNELS["lstm_cell_forward"]) == []
        assert _run_all("lstm_cell_reverse", KERNELS["lstm_cell_reverse"]) == []
    finally:
        kernels.use_backend(previous)


def test_gradcheck_settings():
    assert STEP == 1e-5 and TOLERANCE == 1e-4


def test_sigmoid_derivative_at_zero():
    x = dc.Tensor(np.array(0.0), requires_grad=True)
    with dc.Tape() as tape:
        y = dc.sigmoid(x)
    tape.backward(y)
    assert tape.grad(x) == pytest.approx(0.25, abs=1e-15)
    assert gradcheck(dc.sigmoid, [np.array(0.0)], seed=0).passed


def test_gradcheck_catches_wrong_gradient():
    def bad_square(x):
        return dc.custom_op("bad_square", x.data ** 2, (x,), lambda g: (g * x.data,))  # missing factor 2

    rep = gradcheck(bad_square, [np.array([1.0, 2.0])], seed=3)
    assert not rep.passed and rep.max_rel_error > 0.1


def test_gradcheck_reports_non_finite():
    rep = gradcheck(dc.log, [np.array([-1.0])], seed=11, name="log")
    assert not rep.passed
    assert "log" in str(rep) and "seed=11" in str(rep)


def test_relative_error_floor():
    assert relative_error(np.array([1.0, 1e-12]), np.array([1.0, 0.0])) < 1e-8
    assert relative_error(np.array([1.0]), np.array([1.1])) == pytest.approx(0.1 / 1.1)
