"""Detection metrics over score records: EER, normalized minDCF, CLLR, and
per-condition breakdowns. Higher scores mean "more bona fide"; a trial is
accepted iff ``score >= threshold``.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InputError

LABELS = ("bonafide", "spoof")
UNTAGGED = "untagged"
POOLED = "pooled"


@dataclass(frozen=True)
class ScoreRecord:
    utt_id: str
    label: str
    score: float
    condition: str | None = None

    def __post_init__(self):
        if self.label not in LABELS:
            raise InputError(f"unknown label {self.label!r} for {self.utt_id}")
        if not math.isfinite(self.score):
            raise InputError(f"non-finite score for {self.utt_id}")


def _split(records):
    bona = np.array([r.score for r in records if r.label == "bonafide"], dtype=np.float64)
    spoof = np.array([r.score for r in records if r.label == "spoof"], dtype=np.float64)
    if bona.size == 0 or spoof.size == 0:
        raise InputError(f"metrics need both classes; got {bona.size} bona fide and {spoof.size} spoof")
    return bona, spoof


def error_curves(bona, spoof):
    """Thresholds (distinct scores, then +inf) with FRR and FAR at each."""
    bona = np.sort(np.asarray(bona, dtype=np.float64))
    spoof = np.sort(np.asarray(spoof, dtype=np.float64))
    thresholds = np.append(np.unique(np.concatenate([bona, spoof])), np.inf)
    frr = np.searchsorted(bona, thresholds, side="left") / bona.size
    far = 1.0 - np.searchsorted(spoof, thresholds, side="left") / spoof.size
    return thresholds, frr, far


def eer_from_scores(bona, spoof):
    _, frr, far = error_curves(bona, spoof)
    # frr rises and far falls with the threshold; find the first crossing
    k = int(np.argmax(frr >= far))
    if frr[k] == far[k] or k == 0:
        return float((frr[k] + far[k]) / 2.0)
    d_prev = far[k - 1] - frr[k - 1]
    d_next = frr[k] - far[k]
    t = d_prev / (d_prev + d_next)
    return float(frr[k - 1] + t * (frr[k] - frr[k - 1]))


def eer(records):
    return eer_from_scores(*_split(records))


def min_dcf_from_scores(bona, spoof, c_miss=1.0, c_fa=10.0, prior=0.05):
    if c_miss <= 0 or c_fa <= 0 or not 0.0 < prior < 1.0:
        raise ConfigError(f"invalid cost parameters c_miss={c_miss}, c_fa={c_fa}, prior={prior}")
    _, frr, far = error_curves(bona, spoof)
    # the sweep already spans accept-all (lowest score) and reject-all (+inf)
    frr = np.append(frr, 0.0)
    far = np.append(far, 1.0)
    cost = c_miss * prior * frr + c_fa * (1.0 - prior) * far
    return float(cost.min() / min(c_miss * prior, c_fa * (1.0 - prior)))


def min_dcf(records, c_miss=1.0, c_fa=10.0, prior=0.05):
    return min_dcf_from_scores(*_split(records), c_miss, c_fa, prior)


def cllr_from_scores(bona, spoof):
    bona = np.asarray(bona, dtype=np.float64)
    spoof = np.asarray(spoof, dtype=np.float64)
    miss = np.logaddexp(0.0, -bona).mean() / math.log(2.0)
    fa = np.logaddexp(0.0, spoof).mean() / math.log(2.0)
    return float(0.5 * (miss + fa))


def cllr(records):
    return cllr_from_scores(*_split(records))


def summary(records, c_miss=1.0, c_fa=10.0, prior=0.05):
    bona, spoof = _split(records)
    return {
        "n_bonafide": int(bona.size),
        "n_spoof": int(spoof.size),
        "eer": eer_from_scores(bona, spoof),
        "min_dcf": min_dcf_from_scores(bona, spoof, c_miss, c_fa, prior),
        "cllr": cllr_from_scores(bona, spoof),
    }


def pooled_breakdown(records, shared_label=None):
    """EER per condition tag plus the pooled EER.

    With ``shared_label`` set (e.g. "bonafide"), records of that label carry
    no condition of their own and join every condition cell; this is how a
    common bona fide pool is scored against each spoof condition.
    Returns an ordered dict of name -> EER or None (single-class cell).
    """
    groups = {}
    shared = []
    for r in records:
        if shared_label is not None and r.label == shared_label:
            shared.append(r)
            continue
        groups.setdefault(r.condition or UNTAGGED, []).append(r)
    if shared_label is not None and not groups and shared:
        groups[UNTAGGED] = []
    table = {}
    for name in sorted(groups):
        cell = groups[name] + shared
        labels = {r.label for r in cell}
        table[name] = eer(cell) if len(labels) == 2 else None
    labels = {r.label for r in records}
    table[POOLED] = eer(records) if len(labels) == 2 else None
    return table


def format_breakdown(table, digits=2):
    """Aligned two-column text table of EER in percent."""
    width = max(len(k) for k in table)
    lines = [f"{'condition':<{width}}  EER(%)"]
    for name, value in table.items():
        cell = "n/a" if value is None else f"{100.0 * value:.{digits}f}"
        lines.append(f"{name:<{width}}  {cell:>6}")
    return "\n".join(lines) + "\n"


def breakdown_json(table):
    return json.dumps({k: v for k, v in table.items()}, indent=2, sort_keys=False) + "\n"


# score files


def format_score_line(record):
    fields = [record.utt_id, record.label, f"{record.score:.6f}"]
    if record.condition:
        fields.append(record.condition)
    return "\t".join(fields) + "\n"


def write_scores(path, records):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for r in records:
            f.write(format_score_line(r))


def parse_scores(text, source="<scores>"):
    records = []
    for lineno, line in enumerate(io.StringIO(text), start=1):
        line = line.rstrip("\n")
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) not in (3, 4):
            raise InputError(f"{source}:{lineno}: expected 3 or 4 tab-separated fields, got {len(parts)}")
        utt, label, raw = parts[:3]
        if label not in LABELS:
            raise InputError(f"{source}:{lineno}: unknown label {label!r}")
        try:
            score = float(raw)
        except ValueError:
            raise InputError(f"{source}:{lineno}: score {raw!r} is not a number") from None
        if not math.isfinite(score):
            raise InputError(f"{source}:{lineno}: score is not finite")
        condition = parts[3] if len(parts) == 4 and parts[3] else None
        records.append(ScoreRecord(utt, label, score, condition))
    return records


def read_scores(path):
    with open(path, encoding="utf-8") as f:
        return parse_scores(f.read(), source=str(path))


def format_report(stats, title=None):
    lines = [title] if title else []
    lines.append(f"trials     {stats['n_bonafide']} bona fide / {stats['n_spoof']} spoof")
    lines.append(f"EER        {100.0 * stats['eer']:.3f}%")
    lines.append(f"minDCF     {stats['min_dcf']:.4f}")
    lines.append(f"CLLR       {stats['cllr']:.4f} bits")
    return "\n".join(lines) + "\n"
