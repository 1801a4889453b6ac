"""Run the checked-in golden cases against the library.

``goldens/cases.json`` is produced by ``tools/make_goldens.py``, which never
imports this package. Three kinds of case exist:

exact     library output must match the stored values within ``tol``
bound     a measured quantity must satisfy ``relation value``
deferred  needs a training run; the named acceptance test covers it
"""

from __future__ import annotations

import base64
import copy
import json
import math
import operator
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CASES_PATH = Path(__file__).with_name("goldens") / "cases.json"

_RELATIONS = {">=": operator.ge, ">": operator.gt, "<=": operator.le, "<": operator.lt}


@dataclass
class CaseResult:
    name: str
    kind: str
    status: str          # PASS, FAIL or DEFERRED
    deviation: float     # max abs deviation (exact) or measured value (bound)
    detail: str = ""

    @property
    def failed(self):
        return self.status == "FAIL"

    def line(self):
        if self.kind == "exact":
            return f"{self.status:8s} {self.name}  max_dev={self.deviation:.3g}  {self.detail}".rstrip()
        if self.kind == "bound":
            return f"{self.status:8s} {self.name}  measured={self.deviation:.6g}  {self.detail}".rstrip()
        return f"{self.status:8s} {self.name}  {self.detail}"


def _arr(obj):
    return np.asarray(obj["values"], dtype=np.float64).reshape(obj["shape"])


def _records(rows):
    from .metrics import ScoreRecord

    return [ScoreRecord(u, lab, float(s), cond) for u, lab, s, cond in rows]


# exact ops: each returns an array or a dict of arrays shaped like "expected"


def _op_affine(inp):
    from . import diffcore as dc

    return dc.affine(_arr(inp["x"]), _arr(inp["w"]), _arr(inp["b"])).data


def _op_softmax(inp):
    from . import diffcore as dc

    return dc.rowwise_softmax(_arr(inp["x"])).data


def _op_softmax_grad(inp):
    from . import diffcore as dc

    x = dc.Tensor(_arr(inp["x"]), requires_grad=True)
    with dc.Tape() as tape:
        loss = dc.sum_(dc.mul(dc.rowwise_softmax(x), _arr(inp["head"])))
    tape.backward(loss)
    return tape.grad(x)


def _op_mask(inp):
    from .breathmask import intervals_to_mask

    return intervals_to_mask([tuple(iv) for iv in inp["intervals"]], inp["T"], inp["frame_duration"])


def _op_tone_count(inp):
    from .breathmask import heuristic_breath_detect

    sr = inp["sample_rate"]
    t = np.arange(int(inp["seconds"] * sr)) / sr
    tone = inp["amplitude"] * np.sin(2 * np.pi * inp["freq_hz"] * t)
    return np.asarray(len(heuristic_breath_detect(tone, sr)), dtype=np.float64)


def _op_sls(inp):
    from .temporal import sls_aggregate

    stack = _arr(inp["layers"])                      # (L, T, D)
    layers = [layer[None] for layer in stack]
    x_tilde, w = sls_aggregate(layers, _arr(inp["u"]), inp["b"])
    return {"weights": w.data[0], "x_tilde": x_tilde.data[0]}


def _op_film(inp):
    from .temporal import breathfilm

    x = _arr(inp["x"])[None]                         # (1, T, D)
    out, gate = breathfilm(x, _arr(inp["mask"])[None], _arr(inp["w1"]), _arr(inp["w2"]))
    return {"gate": gate.data[0], "out": out.data[0]}


def _op_pre_emphasis(inp):
    from .freq import pre_emphasis

    return pre_emphasis(_arr(inp["x"]), inp["coef"])


def _op_pool(inp):
    from . import diffcore as dc

    fmap = _arr(inp["map_ft"]).T[None]               # filter-major -> (1, T', F)
    return dc.adaptive_max_pool(fmap, inp["bins"]).data[0].T


def _op_attention(inp):
    """Single-head scalar attention run through the library's multi-head op.

    Width 2 with two heads gives d_head = 1. Head 0 reads keys from feature 0
    and values from feature 1, so identity-like projections realize
    K = keys, V = values in that head; head 1 is ignored.
    """
    from .fusion import cross_attention

    q = _arr(inp["q"])[0, 0]
    keys, vals = _arr(inp["k"])[:, 0], _arr(inp["v"])[:, 0]
    x_freq = np.array([[[q, 0.0]]])
    x_temp = np.stack([keys, vals], axis=1)[None]
    eye = np.eye(2)
    params = {"wq": eye, "wk": eye, "wv": np.array([[0.0, 0.0], [1.0, 0.0]]), "wo": eye, "bo": np.zeros(2)}
    fused, attn = cross_attention(x_freq, x_temp, params, heads=2)
    return {"weights": attn.data[0, 0], "out": fused.data[0, :, :1]}


def _op_pscl(inp):
    from .losses import pscl

    return np.asarray(pscl(_arr(inp["z"]), inp["tau"]).data)


def _op_contrast(inp):
    from .losses import BonaFideCenter, contrast_loss

    c = _arr(inp["center"])
    center = BonaFideCenter(dim=c.size, c=c, initialized=True)
    return np.asarray(contrast_loss(_arr(inp["fakes"]), center).data)


def _op_wce(inp):
    from .losses import weighted_ce

    return np.asarray(weighted_ce(_arr(inp["probs"]), inp["labels"]).data)


def _op_bilstm_swap(inp):
    from .classifier import bilstm_layer

    x = _arr(inp["x"])
    swapped = {}
    for key in ("wx", "wh", "b"):
        swapped[f"l_fwd_{key}"] = _arr(inp[f"bwd_{key}"])
        swapped[f"l_bwd_{key}"] = _arr(inp[f"fwd_{key}"])
    return bilstm_layer(x[::-1].copy()[None], swapped, "l").data[0]


def _op_pool_logits(inp):
    from .classifier import pool_and_logits

    return pool_and_logits(_arr(inp["seq"])[None], _arr(inp["head_w"]), _arr(inp["head_b"])).data[0]


def _op_eer(inp):
    from .metrics import eer

    return np.asarray(eer(_records(inp["records"])))


def _op_min_dcf(inp):
    from .metrics import min_dcf

    return np.asarray(min_dcf(_records(inp["records"]), inp["c_miss"], inp["c_fa"], inp["prior"]))


def _op_cllr(inp):
    from .metrics import cllr

    return np.asarray(cllr(_records(inp["records"])))


def _op_breakdown(inp):
    from .metrics import pooled_breakdown

    table = pooled_breakdown(_records(inp["records"]))
    return {k: np.asarray(v) for k, v in table.items()}


# bound ops: each returns one float


def _iou(a, b):
    inter = max(0.0, min(a[1], b[1]) - max(a[0], b[0]))
    union = max(a[1], b[1]) - min(a[0], b[0])
    return inter / union if union > 0 else 0.0


def _op_detector_iou(inp):
    from .breathmask import heuristic_breath_detect

    pcm = np.frombuffer(base64.b64decode(inp["pcm16_b64"]), dtype="<i2")
    found = heuristic_breath_detect(pcm / 32767.0, inp["sample_rate"])
    if len(found) != 1:
        return 0.0  # the case demands exactly one interval
    return _iou(found[0], inp["truth"])


def _kernel(inp):
    from .freq import sinc_kernels

    return sinc_kernels(np.array([inp["low_hz"]]), np.array([inp["high_hz"]]), inp["K"], inp["sample_rate"]).data[:, 0]


def _response(h, f_hz, sr):
    n = np.arange(h.size)
    return abs(np.sum(h * np.exp(-2j * np.pi * f_hz * n / sr)))


def _op_sinc_dft(inp):
    h = _kernel(inp)
    sr = inp["sample_rate"]
    return 20 * math.log10(_response(h, inp["f_pass"], sr) / _response(h, inp["f_stop"], sr))


def _op_sinc_tone(inp):
    from .freq import SincBank, sinc_filterbank

    sr = inp["sample_rate"]
    bank = SincBank.from_cutoffs([inp["low_hz"]], [inp["high_hz"]], kernel_size=inp["K"], stride=1,
                                 sample_rate=sr, min_band_hz=0.0)
    n = np.arange(inp["n_samples"])
    rms = []
    for f in (inp["f_pass"], inp["f_stop"]):
        y = sinc_filterbank(np.sin(2 * np.pi * f * n / sr)[None], bank).data
        rms.append(math.sqrt(float(np.mean(y ** 2))))
    return rms[0] / rms[1]


def _op_augment(inp):
    from .losses import augment_bonafide

    z = _arr(inp["z"])
    copies = augment_bonafide(z[None], inp["delta"], inp["count"], inp["seed"]).data
    return float(np.max(np.abs(copies.mean(axis=0) - z)))


def _band_power(x, lo, hi, sr, win=320):
    """Per-frame power inside [lo, hi] Hz, 20 ms frames."""
    n = x.size // win
    frames = x[: n * win].reshape(n, win) * np.hanning(win)
    spec = np.abs(np.fft.rfft(frames, axis=1)) ** 2
    f = np.fft.rfftfreq(win, 1.0 / sr)
    return spec[:, (f >= lo) & (f <= hi)].sum(axis=1) / win


def _op_pause_gap(inp):
    from .synth import gen_bonafide

    sr, win = 16000, 320
    worst = math.inf
    for seed in inp["seeds"]:
        wav, intervals = gen_bonafide(seed)
        power = _band_power(wav, 80.0, 450.0, sr, win)
        centers = (np.arange(power.size) + 0.5) * win / sr
        inside = np.zeros(power.size, dtype=bool)
        for a, b in intervals:
            inside |= (centers >= a) & (centers < b)
        outside = power[~inside]
        phrase = np.mean(outside[outside >= np.median(outside)])
        for a, b in intervals:
            sel = (centers >= a) & (centers < b)
            worst = min(worst, 10 * math.log10(phrase / max(np.mean(power[sel]), 1e-30)))
    return worst


def _op_no_breath(inp):
    from .breathmask import heuristic_breath_detect
    from .synth import gen_spoof

    return float(sum(len(heuristic_breath_detect(gen_spoof(s, style="no_breath")[0])) for s in inp["seeds"]))


def _high_band_energy(x, sr=16000, cutoff=5000.0):
    spec = np.abs(np.fft.rfft(x)) ** 2
    return float(spec[np.fft.rfftfreq(x.size, 1.0 / sr) > cutoff].sum())


def _op_lowpass(inp):
    from .synth import gen_bonafide, gen_spoof

    gaps = []
    for s in inp["seeds"]:
        bona = _high_band_energy(gen_bonafide(s)[0])
        spoof = _high_band_energy(gen_spoof(s, style="lowpass")[0])
        gaps.append(10 * math.log10(bona / max(spoof, 1e-30)))
    return min(gaps)


def _autocorr(x, lag):
    return float(np.dot(x[:-lag], x[lag:]) / np.dot(x, x))


def _op_comb(inp):
    from .synth import comb_lag_for, gen_bonafide, gen_spoof

    margins = []
    for s in inp["seeds"]:
        lag = comb_lag_for(s)
        margins.append(_autocorr(gen_spoof(s, style="comb_artifact")[0], lag) - _autocorr(gen_bonafide(s)[0], lag))
    return min(margins)


def _op_snr(inp):
    from .synth import gen_bonafide, stationary_noise

    worst = 0.0
    for s in inp["seeds"]:
        x = gen_bonafide(s)[0]
        y = stationary_noise(x, np.random.default_rng(s), snr_db=inp["snr_db"])
        measured = 10 * math.log10(np.mean(x ** 2) / np.mean((y - x) ** 2))
        worst = max(worst, abs(measured - inp["snr_db"]))
    return worst


EXACT_OPS = {
    "affine": _op_affine, "rowwise_softmax": _op_softmax, "rowwise_softmax_grad": _op_softmax_grad,
    "intervals_to_mask": _op_mask, "detector_tone_count": _op_tone_count, "sls": _op_sls, "film": _op_film,
    "pre_emphasis": _op_pre_emphasis, "adaptive_max_pool": _op_pool, "attention": _op_attention,
    "pscl": _op_pscl, "contrast": _op_contrast, "weighted_ce": _op_wce,
    "bilstm_reversed_swapped": _op_bilstm_swap, "pool_logits": _op_pool_logits, "eer": _op_eer,
    "min_dcf": _op_min_dcf, "cllr": _op_cllr, "breakdown": _op_breakdown,
}

BOUND_OPS = {
    "detector_iou": _op_detector_iou, "sinc_dft_db": _op_sinc_dft, "sinc_tone_ratio": _op_sinc_tone,
    "augment_mean_dev": _op_augment, "pause_energy_gap_db": _op_pause_gap,
    "no_breath_detections": _op_no_breath, "lowpass_gap_db": _op_lowpass,
    "comb_autocorr_margin": _op_comb, "stationary_snr_error": _op_snr,
}


def load_cases(path=None):
    with open(path or CASES_PATH, encoding="utf-8") as f:
        return json.load(f)["cases"]


def _deviation(actual, expected):
    if isinstance(expected, dict) and "shape" not in expected:
        if not isinstance(actual, dict) or set(actual) != set(expected):
            return math.inf
        return max(_deviation(actual[k], expected[k]) for k in expected)
    want = _arr(expected)
    got = np.asarray(actual, dtype=np.float64)
    if got.shape != want.shape:
        return math.inf
    return float(np.max(np.abs(got - want), initial=0.0))


def run_case(case):
    name, kind = case["name"], case["kind"]
    if kind == "deferred":
        return CaseResult(name, kind, "DEFERRED", math.nan, f"-> {case['where']}")
    try:
        if kind == "exact":
            dev = _deviation(EXACT_OPS[case["op"]](case["inputs"]), case["expected"])
            ok = dev <= case["tol"]
            return CaseResult(name, kind, "PASS" if ok else "FAIL", dev, f"tol={case['tol']:g}")
        if kind == "bound":
            value = float(BOUND_OPS[case["op"]](case["inputs"]))
            rel, limit = case["bound"]["relation"], case["bound"]["value"]
            ok = _RELATIONS[rel](value, limit)
            return CaseResult(name, kind, "PASS" if ok else "FAIL", value, f"need {rel} {limit:g}")
    except Exception as exc:  # a crashing case is a failing case
        return CaseResult(name, kind, "FAIL", math.inf, f"{type(exc).__name__}: {exc}")
    return CaseResult(name, kind, "FAIL", math.inf, f"unknown case kind {kind!r}")


def run_goldens(path=None, cases=None):
    """Evaluate every case in name order. A missing fixture file is one failure."""
    if cases is None:
        try:
            cases = load_cases(path)
        except FileNotFoundError:
            return [CaseResult("fixtures", "exact", "FAIL", math.inf, f"missing {path or CASES_PATH}")]
    return [run_case(c) for c in sorted(cases, key=lambda c: c["name"])]


def perturbed(cases, name, factor=10.0):
    """Copy of ``cases`` with the first expected value of one exact case moved by ``factor * tol``."""
    out = copy.deepcopy(cases)
    for case in out:
        if case["name"] == name:
            exp = case["expected"]
            target = exp if "shape" in exp else exp[sorted(exp)[0]]
            target["values"][0] += factor * max(case["tol"], 1e-12)
            return out
    raise KeyError(name)


def format_results(results):
    lines = [r.line() for r in results]
    n_fail = sum(r.failed for r in results)
    lines.append(f"{len(results)} cases, {n_fail} failed")
    return "\n".join(lines) + "\n"


def main(argv=None):
    import argparse
    import sys

    ap = argparse.ArgumentParser(description="run the golden fixture cases")
    ap.add_argument("--cases", help="fixture file (default: the packaged cases.json)")
    args = ap.parse_args(argv)
    results = run_goldens(args.cases)
    sys.stdout.write(format_results(results))
    return 1 if any(r.failed for r in results) else 0


if __name__ == "__main__":
    raise SystemExit(main())
