"""Deterministic synthetic corpus with planted breath events and spoof styles.

Bona fide utterances are 2-4 voiced phrases (harmonic stacks with a jittered
f0 and formant-shaped amplitudes) separated by pauses, with 1-3 band-limited
noise breaths placed inside pauses. Spoofs reuse the same procedure and then
apply one artifact style:

* ``no_breath``: the breaths are never inserted
* ``comb_artifact``: y[n] = x[n] + 0.5 x[n-P], a vocoder-like periodic artifact
* ``lowpass``: 4 kHz low-pass
* ``breath_removed``: breath spans replaced by faded digital silence
"""

from __future__ import annotations

import logging
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal

from .breathmask import SAMPLE_RATE, TARGET_SAMPLES, format_intervals, parse_intervals, write_annotations
from .errors import InputError

log = logging.getLogger(__name__)

STYLES = ("no_breath", "comb_artifact", "lowpass", "breath_removed")
RAWBOOST_MODES = ("convolutive", "impulsive", "stationary", "series")
COMB_LAGS = (8, 8)  # inclusive range of the comb delay in samples
BREATH_BAND = (500.0, 2000.0)


@dataclass
class Plan:
    """Timeline of one utterance, in samples."""

    phrases: list
    breaths: list
    comb_lag: int


def _rng(seed):
    return np.random.default_rng(seed)


def _raised_cosine(n):
    if n <= 1:
        return np.ones(max(n, 0))
    return 0.5 - 0.5 * np.cos(2 * np.pi * (np.arange(n) + 0.5) / n)


def _plan(rng, n_samples, sr):
    total = n_samples / sr
    while True:
        n_phr = int(rng.integers(2, 5))
        n_br = int(rng.integers(1, min(3, n_phr) + 1))
        slots = sorted(rng.choice(n_phr, size=n_br, replace=False).tolist())
        pauses, breaths_rel = [], []
        for k in range(n_phr):
            if k in slots:
                dur = float(rng.uniform(0.15, 0.4))
                gap_a, gap_b = rng.uniform(0.06, 0.12, size=2)
                pauses.append(gap_a + dur + gap_b)
                breaths_rel.append((k, gap_a, dur))
            else:
                pauses.append(float(rng.uniform(0.08, 0.25)))
        tail = float(rng.uniform(0.05, 0.15))
        speech = total - sum(pauses) - tail
        if speech >= 0.45 * n_phr:
            break
    weights = rng.uniform(0.7, 1.3, size=n_phr)
    lengths = speech * weights / weights.sum()
    phrases, breaths = [], []
    t = 0.0
    for k in range(n_phr):
        for kk, gap_a, dur in breaths_rel:
            if kk == k:
                breaths.append((t + gap_a, t + gap_a + dur))
        t += pauses[k]
        phrases.append((t, t + lengths[k]))
        t += lengths[k]
    to_samples = lambda a, b: (int(round(a * sr)), int(round(b * sr)))
    return Plan(
        phrases=[to_samples(a, b) for a, b in phrases],
        breaths=[to_samples(a, b) for a, b in breaths],
        comb_lag=int(rng.integers(COMB_LAGS[0], COMB_LAGS[1] + 1)),
    )


def _formant_gain(freqs, formants):
    gain = np.zeros_like(freqs)
    for fc, bw, amp in formants:
        gain += amp / (1.0 + ((freqs - fc) / bw) ** 2)
    return gain


def _phrase(rng, n, sr):
    t = np.arange(n) / sr
    f0_base = rng.uniform(100.0, 250.0)
    slope = rng.uniform(-0.25, 0.05)
    jitter = np.cumsum(rng.standard_normal(n)) * 0.02
    jitter -= np.linspace(jitter[0], jitter[-1], n)
    vib = 0.03 * np.sin(2 * np.pi * rng.uniform(3.0, 6.0) * t + rng.uniform(0, 2 * np.pi))
    f0 = f0_base * (1.0 + slope * t / max(t[-1], 1e-9) + vib) + jitter
    phase = 2 * np.pi * np.cumsum(f0) / sr
    formants = [
        (rng.uniform(300, 800), rng.uniform(60, 120), 1.0),
        (rng.uniform(900, 2300), rng.uniform(80, 160), 0.5),
        (rng.uniform(2400, 3400), rng.uniform(120, 250), 0.25),
        (rng.uniform(4000, 6000), rng.uniform(400, 900), 0.08),
    ]
    y = np.zeros(n)
    n_harm = int(7600 // (f0_base * 1.1))
    for k in range(1, n_harm + 1):
        amp = _formant_gain(np.array([k * f0_base]), formants)[0] * k ** -0.6 + 0.004
        y += amp * np.sin(k * phase + rng.uniform(0, 2 * np.pi))
    # syllable-rate amplitude modulation and short on/off ramps
    rate = rng.uniform(3.0, 6.0)
    env = 0.6 + 0.4 * np.sin(2 * np.pi * rate * t + rng.uniform(0, 2 * np.pi)) ** 2
    ramp = min(int(0.03 * sr), n // 2)
    env[:ramp] *= _raised_cosine(2 * ramp)[:ramp]
    env[n - ramp:] *= _raised_cosine(2 * ramp)[ramp:]
    # aspiration noise gives the spectrum an upper band
    sos = signal.butter(4, [4500, 7500], btype="bandpass", fs=sr, output="sos")
    asp = signal.sosfilt(sos, rng.standard_normal(n)) * 0.2
    y = y / (np.sqrt(np.mean(y ** 2)) + 1e-12)
    return (y + asp) * env


def _breath(rng, n, sr):
    sos = signal.butter(4, BREATH_BAND, btype="bandpass", fs=sr, output="sos")
    noise = signal.sosfilt(sos, rng.standard_normal(n + 512))[512:]
    noise /= np.sqrt(np.mean(noise ** 2)) + 1e-12
    return noise * _raised_cosine(n)


def _render(seed, n_samples, sr, with_breath):
    rng = _rng(seed)
    plan = _plan(rng, n_samples, sr)
    x = np.zeros(n_samples)
    for a, b in plan.phrases:
        b = min(b, n_samples)
        x[a:b] += _phrase(rng, b - a, sr)
    breath_level = 10 ** (rng.uniform(-16.0, -10.0) / 20)
    breaths = []
    for a, b in plan.breaths:
        burst = _breath(rng, b - a, sr) * breath_level
        if with_breath:
            x[a:b] += burst
        breaths.append((a, b))
    floor = rng.standard_normal(n_samples) * 10 ** (-62 / 20)
    return x, floor, plan, breaths


def _finish(x, rng_gain):
    peak = np.max(np.abs(x))
    if peak > 0:
        x = x / peak * rng_gain
    return np.clip(x, -1.0, 1.0)


def _gain(seed):
    return float(_rng([seed, 17]).uniform(0.3, 0.8))


def gen_bonafide(seed, duration=TARGET_SAMPLES / SAMPLE_RATE, sample_rate=SAMPLE_RATE):
    """Return ``(waveform, breath_intervals_seconds)``; pure function of ``seed``."""
    if duration < 1.0:
        raise InputError(f"duration must be at least 1 s, got {duration}")
    n = int(round(duration * sample_rate))
    x, floor, _, breaths = _render(seed, n, sample_rate, with_breath=True)
    wav = _finish(x + floor, _gain(seed))
    return wav, [(a / sample_rate, b / sample_rate) for a, b in breaths]


def comb_filter(x, lag, gain=0.5):
    y = x.copy()
    y[lag:] += gain * x[:-lag]
    return y


def lowpass(x, cutoff_hz=4000.0, sample_rate=SAMPLE_RATE):
    sos = signal.butter(12, cutoff_hz, btype="lowpass", fs=sample_rate, output="sos")
    return signal.sosfiltfilt(sos, x)


def gen_spoof(seed, duration=TARGET_SAMPLES / SAMPLE_RATE, style="no_breath", sample_rate=SAMPLE_RATE):
    """Return ``(waveform, breath_intervals_seconds)`` for a spoof style.

    The intervals are the breaths that remain audible (none for
    ``no_breath`` and ``breath_removed``).
    """
    if style not in STYLES:
        raise InputError(f"unknown spoof style {style!r}; expected one of {STYLES}")
    if duration < 1.0:
        raise InputError(f"duration must be at least 1 s, got {duration}")
    n = int(round(duration * sample_rate))
    with_breath = style != "no_breath"
    x, floor, plan, breaths = _render(seed, n, sample_rate, with_breath)
    x = x + floor
    kept = breaths
    if style == "comb_artifact":
        x = comb_filter(x, plan.comb_lag)
    elif style == "lowpass":
        x = lowpass(x, 4000.0, sample_rate)
    elif style == "breath_removed":
        fade = int(0.01 * sample_rate)
        for a, b in breaths:
            gain = np.zeros(b - a)
            gain[:fade] = 1.0 - _raised_cosine(2 * fade)[:fade]
            gain[-fade:] = 1.0 - _raised_cosine(2 * fade)[fade:]
            x[a:b] *= gain
        kept = []
    elif style == "no_breath":
        kept = []
    wav = _finish(x, _gain(seed))
    return wav, [(a / sample_rate, b / sample_rate) for a, b in kept]


def comb_lag_for(seed, duration=TARGET_SAMPLES / SAMPLE_RATE, sample_rate=SAMPLE_RATE):
    """The comb delay P that ``gen_spoof(seed, style="comb_artifact")`` uses."""
    n = int(round(duration * sample_rate))
    return _plan(_rng(seed), n, sample_rate).comb_lag


# simplified RawBoost


def convolutive_noise(x, rng, taps=None):
    """Convolve with a unit-energy random FIR of 5-15 taps (or the given taps)."""
    if taps is None:
        taps = rng.standard_normal(int(rng.integers(5, 16)))
    taps = np.asarray(taps, dtype=np.float64)
    taps = taps / np.sqrt(np.sum(taps ** 2))
    return np.convolve(x, taps)[: x.size]


def impulsive_noise(x, rng, fraction=None, max_gain=2.0):
    """Sign-preserving spikes scaled by the local amplitude at random positions."""
    if fraction is None:
        fraction = rng.uniform(0.0, 0.1)
    y = x.copy()
    k = int(round(fraction * x.size))
    if k == 0:
        return y
    pos = rng.choice(x.size, size=k, replace=False)
    y[pos] += np.sign(x[pos]) * np.abs(x[pos]) * rng.uniform(0.0, max_gain, size=k)
    return y


def stationary_noise(x, rng, snr_db=None):
    """Add white noise at an SNR drawn from [10, 40] dB (or the given SNR)."""
    if snr_db is None:
        snr_db = rng.uniform(10.0, 40.0)
    noise = rng.standard_normal(x.size)
    p_sig = np.mean(x ** 2)
    p_noise = np.mean(noise ** 2)
    if p_sig == 0:
        return x.copy()
    noise *= np.sqrt(p_sig / (p_noise * 10 ** (snr_db / 10)))
    return x + noise


def rawboost_lite(samples, mode="series", seed=0):
    """Waveform augmentation; deterministic per seed, output clamped to [-1, 1]."""
    if mode not in RAWBOOST_MODES:
        raise InputError(f"unknown RawBoost mode {mode!r}; expected one of {RAWBOOST_MODES}")
    rng = _rng(seed)
    y = np.asarray(samples, dtype=np.float64)
    if mode in ("convolutive", "series"):
        y = convolutive_noise(y, rng)
    if mode in ("impulsive", "series"):
        y = impulsive_noise(y, rng)
    if mode in ("stationary", "series"):
        y = stationary_noise(y, rng)
    return np.clip(y, -1.0, 1.0)


# WAV I/O


def write_wav(path, samples, sample_rate=SAMPLE_RATE):
    pcm = np.round(np.clip(samples, -1.0, 1.0) * 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(sample_rate)
        fh.writeframes(pcm.tobytes())


def read_wav(path):
    """Return ``(samples_float64, sample_rate)`` for 16-bit mono PCM."""
    with wave.open(str(path), "rb") as fh:
        if fh.getsampwidth() != 2 or fh.getnchannels() != 1:
            raise InputError(f"{path}: expected 16-bit mono PCM")
        sr = fh.getframerate()
        data = np.frombuffer(fh.readframes(fh.getnframes()), dtype="<i2")
    return data.astype(np.float64) / 32767.0, sr


# corpus


@dataclass
class CorpusSpec:
    counts: dict = field(default_factory=lambda: {
        "train": {"bonafide": 800, "spoof": 1200},
        "eval": {"bonafide": 200, "spoof": 300},
    })
    duration: float = TARGET_SAMPLES / SAMPLE_RATE
    style_mix: dict = field(default_factory=lambda: {s: 0.25 for s in STYLES})
    seed: int = 0

    def validate(self):
        for split, by_label in self.counts.items():
            for label, n in by_label.items():
                if label not in ("bonafide", "spoof") or int(n) < 0:
                    raise InputError(f"bad count {split}/{label}={n}")
        if set(self.style_mix) - set(STYLES):
            raise InputError(f"unknown styles in mix: {sorted(set(self.style_mix) - set(STYLES))}")
        total = sum(self.style_mix.values())
        if abs(total - 1.0) > 1e-9 or min(self.style_mix.values()) < 0:
            raise InputError(f"style mix must be nonnegative and sum to 1, got {total}")


@dataclass
class UtteranceRecord:
    utt_id: str
    relpath: str
    label: str
    style: str
    intervals: list

    def manifest_line(self):
        return f"{self.utt_id}\t{self.relpath}\t{self.label}\t{self.style}\t{format_intervals(self.intervals)}\n"


def _style_counts(n, mix):
    """Largest-remainder apportionment of ``n`` spoofs over the style mix."""
    styles = [s for s in STYLES if mix.get(s, 0) > 0]
    raw = {s: n * mix[s] for s in styles}
    counts = {s: int(np.floor(raw[s])) for s in styles}
    rest = n - sum(counts.values())
    for s in sorted(styles, key=lambda s: (-(raw[s] - counts[s]), STYLES.index(s)))[:rest]:
        counts[s] += 1
    return counts


def corpus_plan(spec):
    """Deterministic list of (split, utt_id, label, style, seed) entries."""
    spec.validate()
    entries = []
    for split_idx, split in enumerate(sorted(spec.counts)):
        by_label = spec.counts[split]
        k = 0
        for i in range(int(by_label.get("bonafide", 0))):
            entries.append((split, f"{split}_{k:05d}", "bonafide", "bonafide",
                            [spec.seed, split_idx, 0, i]))
            k += 1
        styles = _style_counts(int(by_label.get("spoof", 0)), spec.style_mix)
        i = 0
        for style in STYLES:
            for _ in range(styles.get(style, 0)):
                entries.append((split, f"{split}_{k:05d}", "spoof", style,
                                [spec.seed, split_idx, 1, i]))
                k += 1
                i += 1
    return entries


def _seed_int(seed_list):
    return int(np.random.SeedSequence(seed_list).generate_state(1)[0])


def generate_corpus(spec, out_dir, breath_source="planted"):
    """Write WAVs, ``manifest.tsv`` and ``breath.txt`` per split under ``out_dir``.

    ``breath.txt`` holds the breath annotations consumed for masks: the
    planted (audible) intervals, or the heuristic detector's output when
    ``breath_source="heuristic"``.
    """
    from .breathmask import heuristic_breath_detect

    if breath_source not in ("planted", "heuristic"):
        raise InputError(f"breath_source must be planted or heuristic, got {breath_source!r}")
    out_dir = Path(out_dir)
    records = {}
    for split, utt_id, label, style, seed_list in corpus_plan(spec):
        split_dir = out_dir / split
        (split_dir / "wav").mkdir(parents=True, exist_ok=True)
        seed = _seed_int(seed_list)
        if label == "bonafide":
            wav, intervals = gen_bonafide(seed, spec.duration)
        else:
            wav, intervals = gen_spoof(seed, spec.duration, style)
        relpath = f"wav/{utt_id}.wav"
        write_wav(split_dir / relpath, wav)
        records.setdefault(split, []).append(
            UtteranceRecord(utt_id, relpath, label, style, [(round(a, 4), round(b, 4)) for a, b in intervals])
        )
    for split, recs in records.items():
        split_dir = out_dir / split
        with open(split_dir / "manifest.tsv", "w", encoding="utf-8", newline="\n") as fh:
            fh.writelines(r.manifest_line() for r in recs)
        if breath_source == "planted":
            table = {r.utt_id: r.intervals for r in recs}
        else:
            table = {r.utt_id: heuristic_breath_detect(read_wav(split_dir / r.relpath)[0]) for r in recs}
        write_annotations(split_dir / "breath.txt", table)
    return records


def read_manifest(path):
    """Parse a manifest; the intervals column is returned but never required."""
    path = Path(path)
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 5:
                raise InputError(f"{path}:{lineno}: expected 5 tab-separated fields, got {len(fields)}")
            utt, rel, label, style, iv = fields
            if label not in ("bonafide", "spoof"):
                raise InputError(f"{path}:{lineno}: bad label {label!r}")
            out.append(UtteranceRecord(utt, rel, label, style, parse_intervals(iv, f"{path}:{lineno}: ")))
    return out
