"""Feature-refinement losses (bona fide-anchored contrastive, center, contrast)
plus the class-weighted cross-entropy and the combined objective.

Embedding sets are (n, D) tensors or lists of (D,) tensors. The bona fide
center is a buffer updated by an explicit momentum rule; losses read it as
a constant so no gradient ever reaches it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import diffcore as dc
from .classifier import BONAFIDE, SPOOF
from .errors import ConfigError, InputError, StateError

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12
_MASK_FILL = -1e9


@dataclass
class LossWeights:
    lam: float = 0.5
    alpha: float = 1.0
    beta: float = 1.0
    tau: float = 0.1
    delta: float = 0.1
    aug_count: int = 3
    w_bona: float = 0.9
    w_spoof: float = 0.1
    momentum: float = 0.9

    def __post_init__(self):
        for name in ("lam", "alpha", "beta", "delta", "w_bona", "w_spoof"):
            if getattr(self, name) < 0:
                raise ConfigError(f"loss weight {name} must be nonnegative, got {getattr(self, name)}")
        if self.tau <= 0:
            raise ConfigError(f"temperature must be positive, got {self.tau}")
        if self.aug_count < 0 or int(self.aug_count) != self.aug_count:
            raise ConfigError(f"aug_count must be a nonnegative integer, got {self.aug_count}")
        if not 0.0 <= self.momentum <= 1.0:
            raise ConfigError(f"center momentum must lie in [0, 1], got {self.momentum}")


def _as_matrix(embeddings):
    if isinstance(embeddings, (list, tuple)):
        if not embeddings:
            return None
        return dc.stack([dc.as_tensor(z) for z in embeddings], axis=0)
    z = dc.as_tensor(embeddings)
    if z.ndim == 1:
        z = dc.reshape(z, (1, -1))
    return z if z.shape[0] else None


def augment_bonafide(z, delta, count, seed):
    """``count`` noisy copies ``z + delta * eps`` of each row of ``z``.

    Copies of one embedding are contiguous. The noise is a constant, so
    gradients flow back to ``z`` unchanged.
    """
    if count < 0:
        raise ConfigError(f"augmentation count must be nonnegative, got {count}")
    Z = _as_matrix(z)
    if Z is None or count == 0:
        D = dc.as_tensor(z).shape[-1] if not isinstance(z, (list, tuple)) else 0
        return dc.Tensor(np.zeros((0, D)))
    n, D = Z.shape
    rng = np.random.default_rng(seed)
    noise = delta * rng.standard_normal((n, count, D))
    tiled = dc.getitem(Z, np.repeat(np.arange(n), count))
    return dc.add(tiled, noise.reshape(n * count, D))


def pscl(bona, tau):
    """Bona fide-only contrastive loss.

    For anchor i the log-probability of each positive p is taken against all
    other bona fide members, and the loss averages ``-log`` over all ordered
    pairs (i, p), i != p. Zero for fewer than two members.
    """
    if tau <= 0:
        raise ConfigError(f"temperature must be positive, got {tau}")
    Z = _as_matrix(bona)
    if Z is None or Z.shape[0] < 2:
        return dc.Tensor(0.0)
    n = Z.shape[0]
    U = dc.l2_normalize(Z, axis=-1)
    sim = dc.mul(dc.matmul(U, dc.transpose(U)), 1.0 / tau)
    eye = np.eye(n, dtype=bool)
    logp = dc.log_softmax(dc.add(sim, np.where(eye, _MASK_FILL, 0.0)), axis=-1)
    off = np.where(eye, 0.0, 1.0 / (n * (n - 1)))
    return dc.mul(dc.sum_(dc.mul(logp, off)), -1.0)


@dataclass
class BonaFideCenter:
    dim: int
    momentum: float = 0.9
    c: np.ndarray = field(default=None)
    initialized: bool = False

    def __post_init__(self):
        if self.c is None:
            self.c = np.zeros(self.dim)

    def copy(self):
        return BonaFideCenter(self.dim, self.momentum, self.c.copy(), self.initialized)


def update_center(center, z_mean):
    """First call adopts ``z_mean``; later calls blend with momentum.

    ``z_mean=None`` (no bona fide member in the batch) leaves the center alone.
    """
    if z_mean is None:
        log.info("batch has no bona fide samples; center unchanged")
        return center
    z_mean = np.asarray(dc.as_tensor(z_mean).data, dtype=np.float64)
    if not np.all(np.isfinite(z_mean)):
        raise InputError("center update received a non-finite batch mean")
    if not center.initialized:
        center.c = z_mean.copy()
        center.initialized = True
    else:
        center.c = center.momentum * center.c + (1.0 - center.momentum) * z_mean
    return center


def _center_direction(center):
    if not center.initialized:
        raise StateError("bona fide center used before initialization")
    norm = np.linalg.norm(center.c)
    if not np.isfinite(norm) or norm == 0.0:
        raise StateError("bona fide center has zero or non-finite norm")
    return center.c / norm


def _cos_to(Z, direction):
    U = dc.l2_normalize(Z, axis=-1)
    return dc.reshape(dc.matmul(U, direction[:, None]), (Z.shape[0],))


def center_loss(bona, center):
    """Mean of ``(1 - cos(z, c)) / 2`` over bona fide embeddings; 0 if empty."""
    direction = _center_direction(center)
    Z = _as_matrix(bona)
    if Z is None:
        return dc.Tensor(0.0)
    return dc.mean(dc.mul(dc.sub(1.0, _cos_to(Z, direction)), 0.5))


def contrast_loss(fakes, center):
    """Push spoof embeddings and their pairwise midpoints away from the center.

    Mean of ``(1 + cos(z, c)) / 2`` over singles plus the same mean over all
    unordered pair mixes ``(z_n + z_m) / 2``. Mixes with zero norm are skipped.
    """
    direction = _center_direction(center)
    Z = _as_matrix(fakes)
    if Z is None:
        return dc.Tensor(0.0)
    loss = dc.mean(dc.mul(dc.add(1.0, _cos_to(Z, direction)), 0.5))
    n = Z.shape[0]
    if n < 2:
        return loss
    rows, cols = np.triu_indices(n, k=1)
    mixed = dc.mul(dc.add(dc.getitem(Z, rows), dc.getitem(Z, cols)), 0.5)
    norms = np.linalg.norm(mixed.data, axis=-1)
    keep = norms > 0
    if not keep.all():
        log.warning("skipping %d zero-norm mixed spoof pairs", int((~keep).sum()))
        if not keep.any():
            return loss
        mixed = dc.getitem(mixed, np.flatnonzero(keep))
    pair_term = dc.mean(dc.mul(dc.add(1.0, _cos_to(mixed, direction)), 0.5))
    return dc.add(loss, pair_term)


def feature_loss(pscl_value, center_value, contrast_value, alpha=1.0, beta=1.0):
    return dc.add(dc.add(pscl_value, dc.mul(center_value, alpha)), dc.mul(contrast_value, beta))


def weighted_ce(probs, labels, w_bona=0.9, w_spoof=0.1):
    """Batch mean of ``-w_label * ln p_label``; labels use 1=bona fide, 0=spoof."""
    probs = dc.as_tensor(probs)
    labels = np.asarray(labels, dtype=int)
    if probs.ndim != 2 or probs.shape[1] != 2 or probs.shape[0] != labels.shape[0]:
        raise InputError(f"probabilities {probs.shape} do not match {labels.shape[0]} labels")
    picked = dc.getitem(probs, (np.arange(labels.shape[0]), labels))
    if np.any(picked.data < PROB_FLOOR):
        log.warning("true-class probability below %g clamped", PROB_FLOOR)
        picked = dc.clip(picked, PROB_FLOOR, None)
    weights = np.where(labels == BONAFIDE, w_bona, w_spoof)
    return dc.mean(dc.mul(dc.log(picked), -weights))


def weighted_ce_from_logits(logits, labels, w_bona=0.9, w_spoof=0.1):
    """Same objective as ``weighted_ce`` computed through a log-softmax."""
    logits = dc.as_tensor(logits)
    labels = np.asarray(labels, dtype=int)
    logp = dc.log_softmax(logits, axis=-1)
    picked = dc.getitem(logp, (np.arange(labels.shape[0]), labels))
    floor = np.log(PROB_FLOOR)
    if np.any(picked.data < floor):
        log.warning("true-class probability below %g clamped", PROB_FLOOR)
        picked = dc.clip(picked, floor, None)
    weights = np.where(labels == BONAFIDE, w_bona, w_spoof)
    return dc.mean(dc.mul(picked, -weights))


def total_loss(ce, feat, lam=0.5):
    return dc.add(ce, dc.mul(feat, lam))


@dataclass
class LossParts:
    total: dc.Tensor
    ce: dc.Tensor
    feature: dc.Tensor
    pscl: dc.Tensor
    center: dc.Tensor
    contrast: dc.Tensor

    def values(self):
        return {k: float(getattr(self, k).data) for k in
                ("total", "ce", "feature", "pscl", "center", "contrast")}


def batch_objective(logits, embeddings, labels, center, weights, seed,
                    use_feature=True, use_pscl=True, use_center=True, use_contrast=True):
    """Full training objective for one batch.

    The center is initialized from this batch's bona fide mean when still
    unset, so center and contrast terms are defined on the very first step;
    the momentum update itself is left to the caller.
    """
    labels = np.asarray(labels, dtype=int)
    ce = weighted_ce_from_logits(logits, labels, weights.w_bona, weights.w_spoof)
    zero = dc.Tensor(0.0)
    if not use_feature:
        return LossParts(ce, ce, zero, zero, zero, zero)
    E = dc.as_tensor(embeddings)
    bona_idx = np.flatnonzero(labels == BONAFIDE)
    fake_idx = np.flatnonzero(labels == SPOOF)
    bona = dc.getitem(E, bona_idx) if bona_idx.size else None
    fakes = dc.getitem(E, fake_idx) if fake_idx.size else None
    if bona is not None and weights.aug_count:
        augmented = augment_bonafide(bona, weights.delta, weights.aug_count, seed)
        bona_all = dc.concat([bona, augmented], axis=0)
    else:
        bona_all = bona
    if not center.initialized and bona is not None:
        update_center(center, bona.data.mean(axis=0))
    p = pscl(bona_all, weights.tau) if (use_pscl and bona_all is not None) else zero
    have_center = center.initialized
    cen = center_loss(bona_all, center) if (use_center and have_center and bona_all is not None) else zero
    con = contrast_loss(fakes, center) if (use_contrast and have_center and fakes is not None) else zero
    feat = feature_loss(p, cen, con, weights.alpha, weights.beta)
    return LossParts(total_loss(ce, feat, weights.lam), ce, feat, p, cen, con)
