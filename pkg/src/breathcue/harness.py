"""Training and evaluation orchestration."""

from __future__ import annotations

import logging
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt_io
from . import diffcore as dc
from .breathmask import TARGET_SAMPLES, frame_count, intervals_to_mask, normalize_duration, override_mask, read_annotations
from .classifier import BONAFIDE, SPOOF
from .errors import InputError, NumericError
from .losses import batch_objective, update_center
from .metrics import ScoreRecord, format_breakdown, format_report, pooled_breakdown, summary, write_scores
from .model import ENCODER_PREFIX, VARIANTS, Model, detection_scores
from .synth import rawboost_lite, read_manifest, read_wav

log = logging.getLogger(__name__)

ANNOTATION_FILE = "breath.txt"
MANIFEST_FILE = "manifest.tsv"
BREATH_SUBSET = ("no_breath", "breath_removed")
SPECTRAL_SUBSET = ("comb_artifact", "lowpass")


# data


@dataclass
class Split:
    utt_ids: list
    labels: np.ndarray          # 1 bona fide, 0 spoof
    styles: list
    waves: np.ndarray           # (N, S) float32
    masks: np.ndarray           # (N, T) uint8
    skipped: list = field(default_factory=list)

    def __len__(self):
        return len(self.utt_ids)

    def subset(self, keep):
        idx = np.flatnonzero(keep)
        return Split([self.utt_ids[i] for i in idx], self.labels[idx], [self.styles[i] for i in idx],
                     self.waves[idx], self.masks[idx], list(self.skipped))

    def label_names(self):
        return ["bonafide" if y == BONAFIDE else "spoof" for y in self.labels]


def load_split(split_dir, mask_mode="normal", n_samples=TARGET_SAMPLES):
    """Read a manifest directory into memory.

    Only ``mask_mode == "normal"`` opens the breath annotation file; the
    intervals column of the manifest is never used for masks.
    """
    split_dir = Path(split_dir)
    manifest = split_dir / MANIFEST_FILE
    if not manifest.exists():
        raise InputError(f"no manifest at {manifest}")
    records = read_manifest(manifest)
    if not records:
        raise InputError(f"manifest {manifest} is empty")
    T = frame_count(n_samples)
    annotations = read_annotations(split_dir / ANNOTATION_FILE) if mask_mode == "normal" else None
    ids, labels, styles, waves, masks, skipped = [], [], [], [], [], []
    for r in records:
        try:
            samples, sr = read_wav(split_dir / r.relpath)
        except (OSError, EOFError, InputError) as exc:
            log.warning("skipping unreadable utterance %s: %s", r.utt_id, exc)
            skipped.append(r.utt_id)
            continue
        if sr != 16000:
            log.warning("skipping %s: sample rate %d, expected 16000", r.utt_id, sr)
            skipped.append(r.utt_id)
            continue
        if annotations is not None:
            if r.utt_id not in annotations:
                log.warning("no breath annotation for %s; using an empty mask", r.utt_id)
            mask = intervals_to_mask(annotations.get(r.utt_id, []), T)
        else:
            mask = override_mask(np.zeros(T, dtype=np.uint8), mask_mode)
        ids.append(r.utt_id)
        labels.append(BONAFIDE if r.label == "bonafide" else SPOOF)
        styles.append(r.style)
        waves.append(normalize_duration(samples, n_samples).astype(np.float32))
        masks.append(mask.astype(np.uint8))
    if not ids:
        raise InputError(f"no readable utterances in {split_dir}")
    return Split(ids, np.array(labels, dtype=int), styles, np.stack(waves), np.stack(masks), skipped)


# optimizer


class AdamW:
    """Adam with decoupled weight decay and a learning rate per parameter."""

    def __init__(self, params, lrs, weight_decay=1e-4, betas=(0.9, 0.999), eps=1e-8):
        self.params = params
        self.lrs = lrs
        self.weight_decay = weight_decay
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self, grads):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k in sorted(self.params):
            p, g, lr = self.params[k], grads[k], self.lrs[k]
            self.m[k] = self.b1 * self.m[k] + (1.0 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1.0 - self.b2) * g * g
            update = (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)
            p.data = np.asarray(p.data * (1.0 - lr * self.weight_decay) - lr * update)


def learning_rates(model, cfg):
    return {k: (cfg.encoder_lr if k.startswith(ENCODER_PREFIX) else cfg.lr) for k in model.params}


def should_stop(history, patience=2):
    """True once each of the last ``patience`` epochs failed to improve on its predecessor."""
    if len(history) <= patience:
        return False
    return all(history[-1 - j] >= history[-2 - j] for j in range(patience))


# training


@dataclass
class TrainResult:
    history: list
    checkpoints: list
    final: ckpt_io.Checkpoint | None
    final_path: Path | None
    stopped_early: bool
    seconds: float


def _batch_waves(split, idx, cfg, epoch, step):
    waves = split.waves[idx].astype(np.float64)
    if cfg.rawboost != "off":
        seeds = np.random.SeedSequence([cfg.seed, 7, epoch, step]).generate_state(len(idx))
        waves = np.stack([rawboost_lite(w, cfg.rawboost, int(s)) for w, s in zip(waves, seeds)])
    return waves


def train(cfg, train_split=None, out_dir=None, progress=None):
    """Train per ``cfg``; returns per-epoch checkpoints and the averaged model."""
    t0 = time.perf_counter()
    out_dir = Path(out_dir or cfg.out_dir)
    if train_split is None:
        train_split = load_split(cfg.train_dir, "normal")
    model = Model.init(cfg.model_dims(), seed=cfg.seed, variant=cfg.variant)
    weights = cfg.loss_weights()
    variant = VARIANTS[cfg.variant]
    opt = AdamW(model.params, learning_rates(model, cfg), cfg.weight_decay,
                (cfg.adam_beta1, cfg.adam_beta2), cfg.adam_eps)
    bank = model.sinc_bank()
    order_rng = np.random.default_rng([cfg.seed, 1])
    history, paths = [], []
    stopped = False
    N = len(train_split)
    for epoch in range(1, cfg.max_epochs + 1):
        order = order_rng.permutation(N)
        losses = []
        for step, start in enumerate(range(0, N, cfg.batch_size)):
            idx = np.sort(order[start:start + cfg.batch_size])
            waves = _batch_waves(train_split, idx, cfg, epoch, step)
            labels = train_split.labels[idx]
            aug_seed = [cfg.seed, 2, epoch, step]
            with dc.Tape() as tape:
                out = model.forward(waves, train_split.masks[idx], training=True)
                parts = batch_objective(
                    out.logits, out.embedding, labels, model.center, weights, aug_seed,
                    variant.use_feature, variant.use_pscl, variant.use_center, variant.use_contrast,
                )
                value = float(parts.total.data)
                if not np.isfinite(value):
                    raise NumericError(
                        f"non-finite loss at epoch {epoch} step {step}: {parts.values()}; "
                        f"last good checkpoint: {paths[-1] if paths else 'none'}"
                    )
                tape.backward(parts.total)
                grads = {k: tape.grad(p) for k, p in model.params.items()}
            bad = [k for k, g in grads.items() if not np.all(np.isfinite(g))]
            if bad:
                raise NumericError(f"non-finite gradient for {bad[0]} at epoch {epoch} step {step}")
            opt.step(grads)
            bank.enforce_constraints()
            bona = labels == BONAFIDE
            update_center(model.center, out.embedding.data[bona].mean(axis=0) if bona.any() else None)
            losses.append(value)
        history.append(float(np.mean(losses)))
        ck = ckpt_io.Checkpoint.from_model(model, epoch, history)
        paths.append(ckpt_io.save(ck, out_dir / f"epoch_{epoch:03d}.ckpt"))
        if progress:
            progress(f"epoch {epoch}: loss {history[-1]:.5f} ({time.perf_counter() - t0:.0f}s)")
        if should_stop(history, cfg.patience):
            stopped = True
            break
    final = final_path = None
    if paths:
        recent = [ckpt_io.load(p) for p in paths[-cfg.average_last:]]
        final = ckpt_io.average_checkpoints(recent)
        final_path = ckpt_io.save(final, out_dir / "final.ckpt")
    return TrainResult(history, paths, final, final_path, stopped, time.perf_counter() - t0)


# inference


def score_split(model, split, batch_size=25):
    scores = []
    for start in range(0, len(split), batch_size):
        sl = slice(start, start + batch_size)
        out = model.forward(split.waves[sl].astype(np.float64), split.masks[sl], training=False)
        scores.append(detection_scores(out.logits))
    return np.concatenate(scores)


def embed_split(model, split, batch_size=25):
    chunks = []
    for start in range(0, len(split), batch_size):
        sl = slice(start, start + batch_size)
        out = model.forward(split.waves[sl].astype(np.float64), split.masks[sl], training=False)
        chunks.append(out.embedding.data)
    return np.concatenate(chunks)


@dataclass
class EvalResult:
    records: list
    stats: dict
    breakdown: dict
    skipped: list
    report: str


def _records(split, scores):
    return [
        ScoreRecord(u, lab, float(s), None if lab == "bonafide" else style)
        for u, lab, s, style in zip(split.utt_ids, split.label_names(), scores, split.styles)
    ]


def evaluate(checkpoint, split_dir, mask_mode="normal", score_path=None, cfg=None, split=None):
    """Score every readable utterance; write the score file and build a report."""
    if cfg is not None and isinstance(checkpoint, ckpt_io.Checkpoint):
        checkpoint.check_dims(cfg.model_dims())
    model = checkpoint.to_model() if isinstance(checkpoint, ckpt_io.Checkpoint) else checkpoint
    if split is None:
        split = load_split(split_dir, mask_mode)
    records = _records(split, score_split(model, split))
    costs = (cfg.c_miss, cfg.c_fa, cfg.prior) if cfg else (1.0, 10.0, 0.05)
    stats = summary(records, *costs)
    table = pooled_breakdown(records, shared_label="bonafide")
    if score_path is not None:
        Path(score_path).parent.mkdir(parents=True, exist_ok=True)
        write_scores(score_path, records)
    report = format_report(stats, title=f"mask mode: {mask_mode}")
    if split.skipped:
        report += f"skipped    {len(split.skipped)} unreadable utterances\n"
    report += format_breakdown(table)
    return EvalResult(records, stats, table, list(split.skipped), report)


def export_embeddings(checkpoint, split_dir, out_path, mask_mode="normal", split=None):
    """Header line, then ``utt_id<TAB>label<TAB>v1,...,vD`` per utterance."""
    model = checkpoint.to_model() if isinstance(checkpoint, ckpt_io.Checkpoint) else checkpoint
    if split is None:
        split = load_split(split_dir, mask_mode)
    emb = embed_split(model, split)
    lines = [f"# utt_id\tlabel\tembedding[{emb.shape[1]}]\n"]
    for u, lab, z in zip(split.utt_ids, split.label_names(), emb):
        lines.append(f"{u}\t{lab}\t{','.join(f'{v:.9g}' for v in z)}\n")
    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8", newline="\n") as f:
        f.writelines(lines)
    return len(lines) - 1


# ablation


def subset_eer(records, styles):
    from .metrics import eer

    keep = [r for r in records if r.label == "bonafide" or r.condition in styles]
    return eer(keep)


@dataclass
class AblationRow:
    variant: str
    eer_all: list
    eer_breath: list
    eer_spectral: list

    @staticmethod
    def _median(values):
        return statistics.median(values) if values else float("nan")

    def medians(self):
        return self._median(self.eer_all), self._median(self.eer_breath), self._median(self.eer_spectral)


def ablate(cfg, variants=None, seeds=None, train_split=None, eval_split=None, out_dir=None, progress=None):
    """Train and evaluate each variant on the same data and seeds."""
    variants = list(variants or VARIANTS)
    seeds = list(seeds if seeds is not None else [cfg.seed])
    out_dir = Path(out_dir or cfg.out_dir)
    if train_split is None:
        train_split = load_split(cfg.train_dir, "normal")
    if eval_split is None:
        eval_split = load_split(cfg.eval_dir, cfg.mask_mode)
    rows = []
    for name in variants:
        row = AblationRow(name, [], [], [])
        for seed in seeds:
            run_cfg = cfg.replace(variant=name, seed=seed)
            result = train(run_cfg, train_split, out_dir / name / f"seed{seed}", progress)
            if result.final is None:
                raise InputError("ablation needs max_epochs >= 1")
            ev = evaluate(result.final, None, cfg.mask_mode, cfg=run_cfg, split=eval_split)
            row.eer_all.append(ev.stats["eer"])
            row.eer_breath.append(subset_eer(ev.records, BREATH_SUBSET))
            row.eer_spectral.append(subset_eer(ev.records, SPECTRAL_SUBSET))
            if progress:
                progress(f"{name} seed {seed}: EER {100 * ev.stats['eer']:.2f}%")
        rows.append(row)
    return rows


def format_ablation(rows):
    header = f"{'variant':<16}  {'EER all(%)':>10}  {'breath(%)':>10}  {'spectral(%)':>11}"
    lines = [header, "-" * len(header)]
    for r in rows:
        a, b, s = r.medians()
        lines.append(f"{r.variant:<16}  {100 * a:>10.2f}  {100 * b:>10.2f}  {100 * s:>11.2f}")
    return "\n".join(lines) + "\n"
