#!/usr/bin/env python3
"""Generate src/breathcue/goldens/cases.json from independent reference code.

Nothing here imports breathcue: every expected value is recomputed with naive
loops, exact fractions or brute-force sweeps so that a bug in the library
cannot leak into its own fixtures.

Usage: python3 tools/make_goldens.py [--out PATH]
"""

import argparse
import base64
import json
import math
from fractions import Fraction
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parents[1]
DEFAULT_OUT = ROOT / "src" / "breathcue" / "goldens" / "cases.json"


def arr(values):
    a = np.asarray(values, dtype=np.float64)
    return {"shape": list(a.shape), "values": a.reshape(-1).tolist()}


def sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


def exact(name, op, inputs, expected, tol=1e-9, note=""):
    return {"name": name, "kind": "exact", "op": op, "inputs": inputs, "expected": expected,
            "tol": tol, "note": note}


def bound(name, op, inputs, relation, value, note="", reference=None):
    case = {"name": name, "kind": "bound", "op": op, "inputs": inputs,
            "bound": {"relation": relation, "value": value}, "note": note}
    if reference is not None:
        case["reference"] = reference
    return case


def deferred(name, where, note):
    return {"name": name, "kind": "deferred", "where": where, "note": note}


# kernels and branches


def case_affine():
    x, w, b = 2.0, 3.0, 1.0
    return exact("affine_scalar", "affine", {"x": arr([[x]]), "w": arr([[w]]), "b": arr([b])},
                 arr([[x * w + b]]))


def case_softmax_pair():
    e0, e1 = math.exp(0.0), math.exp(1.0)
    return exact("rowwise_softmax_pair", "rowwise_softmax", {"x": arr([[0.0, 1.0]])},
                 arr([[e0 / (e0 + e1), e1 / (e0 + e1)]]), tol=1e-12)


def case_softmax_gradient():
    rng = np.random.default_rng(20240501)
    x = rng.standard_normal((2, 5))
    head = rng.standard_normal((2, 5))

    def objective(z):
        total = 0.0
        for i in range(z.shape[0]):
            exps = [math.exp(v) for v in z[i]]
            s = sum(exps)
            total += sum(head[i, j] * exps[j] / s for j in range(z.shape[1]))
        return total

    grad = np.zeros_like(x)
    h = 1e-6
    for i in range(2):
        for j in range(5):
            up, dn = x.copy(), x.copy()
            up[i, j] += h
            dn[i, j] -= h
            grad[i, j] = (objective(up) - objective(dn)) / (2 * h)
    return exact("rowwise_softmax_gradient", "rowwise_softmax_grad", {"x": arr(x), "head": arr(head)},
                 arr(grad), tol=1e-7, note="central differences of a hand-written softmax")


def case_mask_bits():
    start, end = Fraction(1, 4), Fraction(11, 20)
    delta = Fraction(1, 10)
    bits = []
    for t in range(10):
        a, b = t * delta, (t + 1) * delta
        cover = max(Fraction(0), min(b, end) - max(a, start))
        bits.append(1 if cover >= delta / 2 else 0)
    return exact("mask_bits_half_cover", "intervals_to_mask",
                 {"intervals": [[0.25, 0.55]], "frame_duration": 0.1, "T": 10}, arr(bits), tol=0.0)


def _band_noise(rng, n, lo, hi, sr):
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1.0 / sr)
    spec[(f < lo) | (f > hi)] = 0.0
    x = np.fft.irfft(spec, n)
    return x / np.sqrt(np.mean(x ** 2))


def case_detector_burst():
    sr, n = 16000, 32000
    rng = np.random.default_rng(77)
    t = np.arange(n) / sr
    x = 10 ** (-60 / 20) * rng.standard_normal(n)
    for a, b in ((0.15, 0.9), (1.45, 1.9)):
        seg = (t >= a) & (t < b)
        f0 = 140.0
        voiced = sum(np.sin(2 * np.pi * k * f0 * t) / k for k in range(1, 20))
        env = np.sin(np.pi * np.clip((t - a) / (b - a), 0, 1)) ** 0.5
        x[seg] += 0.25 * voiced[seg] * env[seg]
    a, b = int(1.0 * sr), int(1.3 * sr)
    burst = _band_noise(rng, b - a, 500.0, 2000.0, sr)
    ramp = 0.5 - 0.5 * np.cos(np.pi * np.arange(b - a) / (b - a - 1) * 2)
    x[a:b] += 0.03 * burst * ramp
    x = x / np.max(np.abs(x)) * 0.7
    pcm = np.round(x * 32767).astype("<i2")
    return bound("detector_planted_burst", "detector_iou",
                 {"pcm16_b64": base64.b64encode(pcm.tobytes()).decode("ascii"), "sample_rate": sr,
                  "truth": [1.0, 1.3]},
                 ">=", 0.5, note="exactly one detected interval with IoU >= 0.5 against [1.0, 1.3] s")


def case_detector_tone():
    return exact("detector_pure_tone", "detector_tone_count",
                 {"freq_hz": 440.0, "seconds": 2.0, "amplitude": 0.5, "sample_rate": 16000},
                 arr(0), tol=0.0, note="no intervals for a pure tone")


def case_sls():
    h1, h2 = 2.0, 4.0
    w1, w2 = sigmoid(1.0 * h1), sigmoid(1.0 * h2)
    return exact("sls_two_layers", "sls",
                 {"layers": arr([[[h1]], [[h2]]]), "u": arr([1.0]), "b": 0.0},
                 {"weights": arr([w1, w2]), "x_tilde": arr([[w1 * h1 + w2 * h2]])})


def case_film(bit, name):
    hidden = max(0.0, 1.0 * bit)
    gate = 1.0 + sigmoid(1.0 * hidden)
    return exact(name, "film", {"mask": arr([bit]), "x": arr([[2.0]]), "w1": arr([[1.0]]), "w2": arr([[1.0]])},
                 {"gate": arr([[gate]]), "out": arr([[2.0 * gate]])})


def case_pre_emphasis():
    x = [1.0, 2.0, 3.0]
    c = 0.97
    y = [x[0]] + [x[i] - c * x[i - 1] for i in range(1, len(x))]
    return exact("pre_emphasis_short", "pre_emphasis", {"x": arr(x), "coef": c}, arr(y), tol=1e-12)


def _reference_sinc(f1_hz, f2_hz, K, sr):
    f1, f2 = f1_hz / sr, f2_hz / sr
    h = np.zeros(K)
    for i in range(K):
        n = i - (K - 1) // 2
        w = 0.54 - 0.46 * math.cos(2 * math.pi * i / (K - 1))
        if n == 0:
            v = 2 * f2 - 2 * f1
        else:
            v = (math.sin(2 * math.pi * f2 * n) - math.sin(2 * math.pi * f1 * n)) / (math.pi * n)
        h[i] = w * v
    return h


def _dft_mag(h, f_hz, sr):
    return abs(sum(h[i] * complex(math.cos(2 * math.pi * f_hz * i / sr), -math.sin(2 * math.pi * f_hz * i / sr))
                   for i in range(len(h))))


def case_sinc_dft():
    h = _reference_sinc(1000.0, 2000.0, 129, 16000)
    ratio_db = 20 * math.log10(_dft_mag(h, 1500.0, 16000) / _dft_mag(h, 4000.0, 16000))
    return bound("sinc_passband_vs_stopband_db", "sinc_dft_db",
                 {"low_hz": 1000.0, "high_hz": 2000.0, "K": 129, "sample_rate": 16000, "f_pass": 1500.0,
                  "f_stop": 4000.0}, ">=", 20.0, reference=ratio_db)


def case_sinc_tone():
    sr, K = 16000, 129
    h = _reference_sinc(1000.0, 2000.0, K, sr)
    n = np.arange(8000)
    rms = []
    for f in (1500.0, 4000.0):
        x = np.sin(2 * np.pi * f * n / sr)
        y = np.convolve(x, h[::-1], mode="valid")
        rms.append(math.sqrt(float(np.mean(y ** 2))))
    return bound("sinc_tone_rms_ratio", "sinc_tone_ratio",
                 {"low_hz": 1000.0, "high_hz": 2000.0, "K": K, "sample_rate": sr, "f_pass": 1500.0,
                  "f_stop": 4000.0, "n_samples": 8000}, ">=", 10.0, reference=rms[0] / rms[1])


def case_adaptive_pool():
    fmap = [[1.0, 2.0, 3.0, 4.0], [4.0, 3.0, 2.0, 1.0]]
    T, B = 4, 2
    out = []
    for row in fmap:
        cells = []
        for i in range(B):
            lo = (i * T) // B
            hi = -((-(i + 1) * T) // B)
            cells.append(max(row[lo:hi]))
        out.append(cells)
    return exact("adaptive_max_pool_two_bins", "adaptive_max_pool", {"map_ft": arr(fmap), "bins": B},
                 arr(out), tol=0.0, note="map given filter-major (F x T')")


def case_attention():
    q, keys, vals = 1.0, [0.0, 1.0], [1.0, 2.0]
    s = [math.exp(q * k / 1.0) for k in keys]
    w = [v / sum(s) for v in s]
    out = sum(wi * vi for wi, vi in zip(w, vals))
    return exact("attention_two_keys", "attention",
                 {"q": arr([[q]]), "k": arr([[keys[0]], [keys[1]]]), "v": arr([[vals[0]], [vals[1]]])},
                 {"weights": arr([w]), "out": arr([[out]])})


def case_augment_mc():
    return bound("augment_monte_carlo_mean", "augment_mean_dev",
                 {"z": arr([0.5, -1.0, 2.0]), "delta": 0.1, "count": 10000, "seed": 11}, "<=", 0.01,
                 note="max over coordinates of |mean(copies) - z|")


def _cos(a, b):
    return sum(x * y for x, y in zip(a, b)) / math.sqrt(sum(x * x for x in a) * sum(y * y for y in b))


def _pscl(zs, tau):
    n = len(zs)
    total, terms = 0.0, 0
    for i in range(n):
        denom = sum(math.exp(_cos(zs[i], zs[a]) / tau) for a in range(n) if a != i)
        for p in range(n):
            if p == i:
                continue
            total += -math.log(math.exp(_cos(zs[i], zs[p]) / tau) / denom)
            terms += 1
    return total / terms


def case_pscl_identical():
    zs = [[1.0, 2.0, -0.5]] * 3
    return exact("pscl_three_identical", "pscl", {"z": arr(zs), "tau": 0.1}, arr(_pscl(zs, 0.1)))


def case_pscl_orthogonal():
    zs = [[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]
    return exact("pscl_two_equal_one_orthogonal", "pscl", {"z": arr(zs), "tau": 1.0}, arr(_pscl(zs, 1.0)))


def case_contrast():
    fakes = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]
    c = [0.0, 0.0, 1.0]
    singles = sum((1 + _cos(z, c)) / 2 for z in fakes) / len(fakes)
    mixes = []
    for i in range(len(fakes)):
        for j in range(i + 1, len(fakes)):
            mixes.append([(a + b) / 2 for a, b in zip(fakes[i], fakes[j])])
    pairs = sum((1 + _cos(z, c)) / 2 for z in mixes) / len(mixes)
    return exact("contrast_orthonormal", "contrast", {"fakes": arr(fakes), "center": arr(c)},
                 arr(singles + pairs))


def case_wce(label, name):
    w = 0.9 if label == 1 else 0.1
    return exact(name, "weighted_ce", {"probs": arr([[0.5, 0.5]]), "labels": [label]},
                 arr(-w * math.log(0.5)), tol=1e-12, note="label 1 = bona fide")


def _lstm_dir(x, wx, wh, b, reverse):
    T, H = x.shape[0], wh.shape[0]
    h, c = np.zeros(H), np.zeros(H)
    out = np.zeros((T, H))
    steps = range(T - 1, -1, -1) if reverse else range(T)
    for t in steps:
        z = x[t] @ wx + h @ wh + b
        i = 1 / (1 + np.exp(-z[:H]))
        f = 1 / (1 + np.exp(-z[H:2 * H]))
        g = np.tanh(z[2 * H:3 * H])
        o = 1 / (1 + np.exp(-z[3 * H:]))
        c = f * c + i * g
        h = o * np.tanh(c)
        out[t] = h
    return out


def case_bilstm_reverse():
    rng = np.random.default_rng(5)
    T, D, H = 4, 3, 2
    x = rng.standard_normal((T, D))
    p = {f"{d}_{k}": rng.standard_normal(s) * 0.7 for d in ("fwd", "bwd")
         for k, s in (("wx", (D, 4 * H)), ("wh", (H, 4 * H)), ("b", (4 * H,)))}
    fwd = _lstm_dir(x, p["fwd_wx"], p["fwd_wh"], p["fwd_b"], False)
    bwd = _lstm_dir(x, p["bwd_wx"], p["bwd_wh"], p["bwd_b"], True)
    # reversed input with direction weights swapped: forward half equals the
    # original backward half read in reverse, and vice versa
    expected = np.concatenate([bwd[::-1], fwd[::-1]], axis=1)
    return exact("bilstm_reverse_swap", "bilstm_reversed_swapped",
                 {"x": arr(x), **{k: arr(v) for k, v in p.items()}}, arr(expected), tol=1e-10)


def case_pool_mean():
    rows = [[1.0, 3.0], [3.0, 1.0]]
    pooled = [(rows[0][j] + rows[1][j]) / 2 for j in range(2)]
    return exact("pool_mean_two_rows", "pool_logits",
                 {"seq": arr(rows), "head_w": arr([[1.0, 0.0], [0.0, 1.0]]), "head_b": arr([0.0, 0.0])},
                 arr(pooled), tol=1e-12)


# metrics: brute-force references


def sweep_eer(bona, spoof):
    """Evaluate FRR/FAR just below and at every distinct score, interpolate the crossing."""
    pts = sorted(set(bona) | set(spoof))
    thresholds = pts + [math.inf]
    curve = []
    for t in thresholds:
        frr = Fraction(sum(1 for s in bona if s < t), len(bona))
        far = Fraction(sum(1 for s in spoof if s >= t), len(spoof))
        curve.append((frr, far))
    for k, (frr, far) in enumerate(curve):
        if frr >= far:
            if frr == far or k == 0:
                return float((frr + far) / 2)
            frr0, far0 = curve[k - 1]
            t = (far0 - frr0) / ((far0 - frr0) + (frr - far))
            return float(frr0 + t * (frr - frr0))
    raise AssertionError("sweep never crossed")


def brute_min_dcf(bona, spoof, c_miss, c_fa, prior):
    best = math.inf
    for t in sorted(set(bona) | set(spoof)) + [-math.inf, math.inf]:
        pmiss = sum(1 for s in bona if s < t) / len(bona)
        pfa = sum(1 for s in spoof if s >= t) / len(spoof)
        best = min(best, c_miss * prior * pmiss + c_fa * (1 - prior) * pfa)
    return best / min(c_miss * prior, c_fa * (1 - prior))


def records(bona, spoof, cond=None):
    out = [[f"b{i}", "bonafide", s, cond] for i, s in enumerate(bona)]
    out += [[f"s{i}", "spoof", s, cond] for i, s in enumerate(spoof)]
    return out


def case_eer():
    bona, spoof = [0.8, 0.6, 0.4], [0.5, 0.3, 0.1]
    return exact("eer_three_by_three", "eer", {"records": records(bona, spoof)}, arr(sweep_eer(bona, spoof)))


def case_min_dcf():
    s = [0.3, 0.3, 0.3]
    return exact("min_dcf_all_equal", "min_dcf", {"records": records(s, s), "c_miss": 1.0, "c_fa": 10.0,
                                                 "prior": 0.05}, arr(brute_min_dcf(s, s, 1.0, 10.0, 0.05)))


def case_cllr():
    b, s = [math.log(3.0)] * 2, [-math.log(3.0)] * 2
    miss = sum(math.log2(1 + math.exp(-v)) for v in b) / len(b)
    fa = sum(math.log2(1 + math.exp(v)) for v in s) / len(s)
    return exact("cllr_ln3", "cllr", {"records": records(b, s)}, arr(0.5 * (miss + fa)), tol=1e-12)


def case_breakdown():
    recs = records([0.9, 0.8], [0.1, 0.2], "A") + [[f"c{i}", lab, v, "B"] for i, (lab, v) in
                                                  enumerate([("bonafide", 0.5), ("bonafide", 0.4),
                                                             ("spoof", 0.5), ("spoof", 0.4)])]
    bona_a, spoof_a = [0.9, 0.8], [0.1, 0.2]
    bona_b, spoof_b = [0.5, 0.4], [0.5, 0.4]
    pooled = sweep_eer(bona_a + bona_b, spoof_a + spoof_b)
    return exact("breakdown_two_conditions", "breakdown", {"records": recs},
                 {"A": arr(sweep_eer(bona_a, spoof_a)), "B": arr(sweep_eer(bona_b, spoof_b)),
                  "pooled": arr(pooled)})


# generator measurements (library audio, measurement code lives in the runner)


def synth_cases():
    seeds = [0, 1, 2, 3, 4]
    return [
        bound("bonafide_breath_in_pauses_db", "pause_energy_gap_db", {"seeds": seeds}, ">=", 6.0,
              note="min over seeds and intervals of phrase minus interval voiced-band energy"),
        bound("no_breath_detector_silent", "no_breath_detections", {"seeds": seeds}, "<=", 0,
              note="total intervals detected on no_breath spoofs"),
        bound("lowpass_high_band_gap_db", "lowpass_gap_db", {"seeds": seeds}, ">=", 30.0,
              note="min over seeds of bona fide minus lowpass energy above 5 kHz"),
        bound("comb_autocorr_margin", "comb_autocorr_margin", {"seeds": seeds}, ">", 0.0,
              note="min over seeds of comb minus bona fide normalized autocorrelation at lag P"),
        bound("stationary_snr_error_db", "stationary_snr_error", {"seeds": seeds, "snr_db": 20.0}, "<=", 1.0,
              note="max over seeds of |measured SNR - 20 dB|"),
    ]


def build():
    cases = [
        case_affine(), case_softmax_pair(), case_softmax_gradient(), case_mask_bits(),
        case_detector_burst(), case_detector_tone(), case_sls(),
        case_film(1.0, "film_breath_frame"), case_film(0.0, "film_silent_frame"),
        case_pre_emphasis(), case_sinc_dft(), case_sinc_tone(), case_adaptive_pool(), case_attention(),
        case_augment_mc(), case_pscl_identical(), case_pscl_orthogonal(), case_contrast(),
        case_wce(1, "weighted_ce_bonafide_uniform"), case_wce(0, "weighted_ce_spoof_uniform"),
        case_bilstm_reverse(), case_pool_mean(), case_eer(), case_min_dcf(), case_cllr(), case_breakdown(),
        *synth_cases(),
        deferred("train_loss_decreases_first_epochs", "tests/test_acceptance.py::test_end_to_end_synthetic",
                 "needs full training runs; checked by the end-to-end acceptance run"),
        deferred("ablation_breath_direction", "tests/test_acceptance.py::test_directional_ablation",
                 "needs three-seed training runs; checked by the ablation acceptance run"),
    ]
    names = [c["name"] for c in cases]
    assert len(names) == len(set(names)), "duplicate case names"
    return {"format": 1, "generator": "tools/make_goldens.py", "cases": sorted(cases, key=lambda c: c["name"])}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(DEFAULT_OUT))
    args = ap.parse_args()
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(build(), indent=1) + "\n", encoding="utf-8")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
