import logging
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from breathcue import diffcore as dc
from breathcue.errors import ConfigError, InputError, StateError
from breathcue.losses import (BonaFideCenter, LossWeights, augment_bonafide, batch_objective, center_loss,
                              contrast_loss, feature_loss, pscl, total_loss, update_center, weighted_ce,
                              weighted_ce_from_logits)

nonzero_rows = arrays(np.float64, st.tuples(st.integers(1, 5), st.just(4)),
                      elements=st.floats(-10, 10)).filter(lambda a: np.all(np.linalg.norm(a, axis=1) > 1e-3))


def centered(c):
    return BonaFideCenter(len(c), c=np.asarray(c, dtype=float), initialized=True)


# augmentation


def test_augment_examples():
    z = np.array([[1.0, -2.0]])
    assert np.array_equal(augment_bonafide(z, 0.0, 3, 0).data, np.repeat(z, 3, axis=0))
    assert augment_bonafide(z, 0.1, 0, 0).shape == (0, 2)
    a = augment_bonafide(z, 0.1, 5, 42).data
    assert np.array_equal(a, augment_bonafide(z, 0.1, 5, 42).data)
    assert not np.array_equal(a, augment_bonafide(z, 0.1, 5, 43).data)
    mc = augment_bonafide(z, 0.1, 10_000, 7).data
    assert np.all(np.abs(mc.mean(axis=0) - z[0]) < 0.01)
    assert np.std(mc[:, 0]) == pytest.approx(0.1, rel=0.05)
    with pytest.raises(ConfigError):
        augment_bonafide(z, 0.1, -1, 0)


# PSCL


def test_pscl_examples():
    r = np.random.default_rng(0)
    for tau in (0.05, 1.0, 7.0):
        assert pscl(r.standard_normal((2, 5)), tau).data == 0.0
        assert pscl(np.tile(r.standard_normal(5), (3, 1)), tau).data == pytest.approx(math.log(2), abs=1e-12)
    z = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    assert pscl(z, 1.0).data == pytest.approx(0.7732, abs=1e-4)
    assert pscl(r.standard_normal((1, 3)), 0.1).data == 0.0
    with pytest.raises(InputError):
        pscl(np.array([[1.0, 0.0], [0.0, 0.0], [1.0, 1.0]]), 0.1)
    with pytest.raises(ConfigError):
        pscl(z, 0.0)


@given(nonzero_rows, st.floats(0.05, 5), st.floats(0.1, 100))
def test_pscl_nonnegative_and_scale_invariant(z, tau, scale):
    v = float(pscl(z, tau).data)
    assert v >= -1e-12
    assert float(pscl(z * scale, tau).data) == pytest.approx(v, rel=1e-9, abs=1e-9)


@given(arrays(np.float64, (2, 4), elements=st.floats(-10, 10)).filter(lambda a: np.all(np.linalg.norm(a, axis=1) > 1e-3)),
       st.floats(0.01, 10))
def test_pscl_two_members_is_zero(z, tau):
    assert float(pscl(z, tau).data) == 0.0


# center and contrast


def test_center_examples():
    c = np.array([1.0, 2.0, -1.0])
    cen = centered(c)
    perp = np.array([2.0, -1.0, 0.0])
    assert center_loss(np.array([c, c]), cen).data == pytest.approx(0.0, abs=1e-12)
    assert center_loss(np.array([-c]), cen).data == pytest.approx(1.0, abs=1e-12)
    assert center_loss(np.array([perp]), cen).data == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(StateError):
        center_loss(np.array([c]), BonaFideCenter(3))
    with pytest.raises(StateError):
        center_loss(np.array([c]), centered(np.zeros(3)))


def test_update_center_examples(caplog):
    c = centered([1.0, 0.0])
    update_center(c, np.array([0.0, 1.0]))
    assert np.allclose(c.c, [0.9, 0.1])
    frozen = BonaFideCenter(2, momentum=1.0, c=np.array([3.0, 4.0]), initialized=True)
    update_center(frozen, np.array([9.0, 9.0]))
    assert np.array_equal(frozen.c, [3.0, 4.0])
    fresh = BonaFideCenter(2)
    update_center(fresh, np.array([2.0, 2.0]))
    assert fresh.initialized and np.array_equal(fresh.c, [2.0, 2.0])
    with caplog.at_level(logging.INFO, logger="breathcue.losses"):
        update_center(fresh, None)
    assert np.array_equal(fresh.c, [2.0, 2.0]) and "unchanged" in caplog.text


def test_contrast_examples(caplog):
    c = np.array([0.0, 0.0, 1.0])
    assert contrast_loss(np.array([-c, -2 * c]), centered(c)).data == pytest.approx(0.0, abs=1e-12)
    assert contrast_loss(np.array([c, 3 * c]), centered(c)).data == pytest.approx(2.0, abs=1e-12)
    e1, e2 = np.eye(3)[0], np.eye(3)[1]
    assert contrast_loss(np.array([e1, e2]), centered(c)).data == pytest.approx(1.0, abs=1e-12)
    assert contrast_loss(np.zeros((0, 3)), centered(c)).data == 0.0
    single = contrast_loss(np.array([e1]), centered(c)).data
    assert single == pytest.approx(0.5)
    with caplog.at_level(logging.WARNING, logger="breathcue.losses"):
        v = contrast_loss(np.array([e1, -e1]), centered(c)).data
    assert v == pytest.approx(0.5) and "zero-norm" in caplog.text


@given(nonzero_rows, arrays(np.float64, 4, elements=st.floats(-10, 10)).filter(lambda a: np.linalg.norm(a) > 1e-3),
       st.floats(0.01, 100))
def test_center_and_contrast_ranges(z, c, scale):
    a = float(center_loss(z, centered(c)).data)
    b = float(contrast_loss(z, centered(c)).data)
    assert -1e-12 <= a <= 1 + 1e-12 and -1e-12 <= b <= 2 + 1e-12
    assert float(center_loss(z, centered(c * scale)).data) == pytest.approx(a, abs=1e-12)
    assert float(contrast_loss(z, centered(c * scale)).data) == pytest.approx(b, abs=1e-12)


def test_center_receives_no_gradient():
    cen = centered([1.0, 1.0])
    before = cen.c.copy()
    z = dc.Tensor(np.array([[1.0, -1.0], [0.5, 2.0]]), requires_grad=True)
    with dc.Tape() as tape:
        loss = dc.add(center_loss(z, cen), contrast_loss(z, cen))
    tape.backward(loss)
    assert np.array_equal(cen.c, before)
    assert all(id(x) != id(cen.c) for rec in tape.records for x in rec.inputs)


# combination and cross-entropy


def test_feature_and_total_examples():
    assert feature_loss(0.0, 0.0, 0.0).data == 0.0
    assert feature_loss(0.6931, 0.5, 1.0, 1.0, 1.0).data == pytest.approx(2.1931, abs=1e-12)
    assert feature_loss(0.7, 0.5, 1.0, 0.0, 0.0).data == pytest.approx(0.7)
    assert total_loss(1.0, 2.0, 0.5).data == 2.0
    assert total_loss(1.3, 2.0, 0.0).data == pytest.approx(1.3)
    assert total_loss(1.3, 0.0, 0.5).data == pytest.approx(1.3)


@given(st.floats(0, 5), st.floats(0, 1), st.floats(0, 2), st.floats(0, 3), st.floats(0, 3), st.floats(0, 2))
def test_feature_total_linear(p, c, k, alpha, beta, lam):
    feat = float(feature_loss(p, c, k, alpha, beta).data)
    assert feat == pytest.approx(p + alpha * c + beta * k, abs=1e-12)
    assert float(total_loss(0.4, feat, lam).data) == pytest.approx(0.4 + lam * feat, abs=1e-12)


def test_weighted_ce_examples(caplog):
    assert weighted_ce(np.array([[0.0, 1.0]]), [1]).data == pytest.approx(0.0, abs=1e-15)
    assert weighted_ce(np.array([[0.5, 0.5]]), [1]).data == pytest.approx(0.9 * math.log(2), abs=1e-12)
    assert weighted_ce(np.array([[0.5, 0.5]]), [0]).data == pytest.approx(0.1 * math.log(2), abs=1e-12)
    assert 0.9 * math.log(2) == pytest.approx(0.6238, abs=1e-4)
    with caplog.at_level(logging.WARNING, logger="breathcue.losses"):
        v = weighted_ce(np.array([[1.0, 0.0]]), [1]).data
    assert v == pytest.approx(-0.9 * math.log(1e-12)) and "clamped" in caplog.text
    with pytest.raises(InputError):
        weighted_ce(np.array([[0.5, 0.5]]), [1, 0])


@given(arrays(np.float64, (4, 2), elements=st.floats(-8, 8)), st.lists(st.integers(0, 1), min_size=4, max_size=4))
def test_ce_from_logits_matches_probability_form(logits, labels):
    probs = np.exp(logits - logits.max(axis=1, keepdims=True))
    probs /= probs.sum(axis=1, keepdims=True)
    a = float(weighted_ce_from_logits(logits, labels).data)
    b = float(weighted_ce(probs, labels).data)
    assert a == pytest.approx(b, rel=1e-9, abs=1e-12)


def test_loss_weights_validation():
    with pytest.raises(ConfigError):
        LossWeights(tau=0)
    with pytest.raises(ConfigError):
        LossWeights(alpha=-1)
    with pytest.raises(ConfigError):
        LossWeights(momentum=1.5)
    w = LossWeights()
    assert (w.lam, w.alpha, w.beta, w.delta, w.aug_count, w.w_bona, w.w_spoof, w.momentum) == \
        (0.5, 1.0, 1.0, 0.1, 3, 0.9, 0.1, 0.9)


def test_batch_objective_parts(rng):
    labels = np.array([1, 0, 1, 0, 0])
    logits, emb = rng.standard_normal((5, 2)), rng.standard_normal((5, 4))
    center = BonaFideCenter(4)
    parts = batch_objective(logits, emb, labels, center, LossWeights(), seed=1)
    assert center.initialized and np.allclose(center.c, emb[labels == 1].mean(axis=0))
    v = parts.values()
    assert v["feature"] == pytest.approx(v["pscl"] + v["center"] + v["contrast"])
    assert v["total"] == pytest.approx(v["ce"] + 0.5 * v["feature"])
    ce_only = batch_objective(logits, emb, labels, center, LossWeights(), seed=1, use_feature=False)
    assert ce_only.values()["total"] == pytest.approx(v["ce"])
    no_pscl = batch_objective(logits, emb, labels, center, LossWeights(), seed=1, use_pscl=False).values()
    assert no_pscl["pscl"] == 0.0 and no_pscl["center"] == pytest.approx(v["center"])
    spoof_only = batch_objective(logits, emb, np.zeros(5, int), BonaFideCenter(4), LossWeights(), seed=1).values()
    assert spoof_only["pscl"] == 0.0 and spoof_only["contrast"] == 0.0
