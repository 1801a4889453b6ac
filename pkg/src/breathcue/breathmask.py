"""Frame-level breath masks: waveform length normalization, interval
rasterization, inference-time overrides, a heuristic detector, and the
breath annotation file format.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InputError

log = logging.getLogger(__name__)

SAMPLE_RATE = 16000
TARGET_SAMPLES = 64600
HOP = 320
FRAME_DURATION = HOP / SAMPLE_RATE
MASK_MODES = ("normal", "zeros", "ones")


@dataclass(frozen=True)
class DetectorConfig:
    band_hz: tuple[float, float] = (500.0, 2000.0)
    win: int = 640
    hop: int = 160
    energy_percentile: float = 90.0
    # frames must be within this many dB of the percentile energy
    energy_margin_db: float = 30.0
    energy_floor: float = 1e-7
    max_harmonicity: float = 0.5
    lag_hz: tuple[float, float] = (60.0, 400.0)
    merge_gap_s: float = 0.05
    min_duration_s: float = 0.04


def normalize_duration(samples, target_samples=TARGET_SAMPLES):
    """Truncate to ``target_samples`` or repeat cyclically up to it."""
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        raise InputError("empty waveform")
    if target_samples < 1:
        raise InputError(f"target length must be >= 1, got {target_samples}")
    if x.size >= target_samples:
        return x[:target_samples].copy()
    reps = -(-target_samples // x.size)
    return np.tile(x, reps)[:target_samples]


def frame_count(n_samples, win=400, hop=HOP):
    if n_samples < win:
        raise InputError(f"waveform of {n_samples} samples is shorter than one {win}-sample window")
    return (n_samples - win) // hop + 1


def normalize_intervals(intervals):
    """Validate, sort and merge overlapping (start, end) pairs."""
    clean = []
    for start, end in intervals:
        start, end = float(start), float(end)
        if not (end > start) or start < 0:
            raise InputError(f"invalid breath interval ({start}, {end})")
        clean.append((start, end))
    clean.sort()
    merged = []
    for start, end in clean:
        if merged and start <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], end))
        else:
            merged.append((start, end))
    return merged


def intervals_to_mask(intervals, T, frame_duration=FRAME_DURATION):
    """Bit t is 1 iff the intervals cover at least half of ``[t*d, (t+1)*d)``."""
    if T < 1 or frame_duration <= 0:
        raise InputError(f"need T >= 1 and frame_duration > 0, got {T}, {frame_duration}")
    starts = np.arange(T) * frame_duration
    ends = starts + frame_duration
    cover = np.zeros(T)
    for a, b in normalize_intervals(intervals):
        cover += np.clip(np.minimum(ends, b) - np.maximum(starts, a), 0.0, None)
    return (cover >= 0.5 * frame_duration - 1e-9).astype(np.uint8)


def override_mask(mask, mode="normal"):
    mask = np.asarray(mask)
    if mode == "normal":
        return mask.copy()
    if mode == "zeros":
        return np.zeros_like(mask)
    if mode == "ones":
        return np.ones_like(mask)
    raise InputError(f"unknown mask mode {mode!r}; expected one of {MASK_MODES}")


def _frames(x, win, hop):
    if x.size < win:
        x = np.pad(x, (0, win - x.size))
    n = (x.size - win) // hop + 1
    return np.lib.stride_tricks.sliding_window_view(x, win)[::hop][:n]


def _harmonicity(frames, min_lag, max_lag):
    """Peak normalized cross-correlation between a frame and its lagged copy."""
    W = frames.shape[1]
    nfft = 1 << int(np.ceil(np.log2(2 * W)))
    spec = np.fft.rfft(frames, nfft, axis=1)
    r = np.fft.irfft(np.abs(spec) ** 2, nfft, axis=1)[:, : max_lag + 1]
    sq = frames ** 2
    csum = np.concatenate([np.zeros((frames.shape[0], 1)), np.cumsum(sq, axis=1)], axis=1)
    lags = np.arange(min_lag, max_lag + 1)
    head = csum[:, W - lags]                  # energy of x[0 : W-lag]
    tail = csum[:, W:W + 1] - csum[:, lags]   # energy of x[lag : W]
    denom = np.sqrt(head * tail)
    with np.errstate(invalid="ignore", divide="ignore"):
        ncc = np.where(denom > 0, r[:, lags] / denom, 0.0)
    return ncc.max(axis=1)


def heuristic_breath_detect(samples, sample_rate=SAMPLE_RATE, config=DetectorConfig()):
    """Breath-like intervals: in-band noise energy without periodicity.

    A frame is flagged when its 500-2000 Hz energy is above an absolute floor
    and within ``energy_margin_db`` of the utterance's ``energy_percentile``
    band energy, while its peak autocorrelation over pitch lags stays below
    ``max_harmonicity``. Flags are merged across gaps shorter than
    ``merge_gap_s`` and runs shorter than ``min_duration_s`` are dropped.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0 or not np.any(x):
        return []
    frames = _frames(x, config.win, config.hop)
    window = np.hanning(config.win)
    spec = np.abs(np.fft.rfft(frames * window, axis=1)) ** 2
    freqs = np.fft.rfftfreq(config.win, 1.0 / sample_rate)
    lo, hi = config.band_hz
    band = spec[:, (freqs >= lo) & (freqs <= hi)].sum(axis=1) / config.win
    ref = np.percentile(band, config.energy_percentile)
    thresh = max(ref * 10 ** (-config.energy_margin_db / 10), config.energy_floor)
    loud = band > thresh
    if not loud.any():
        return []
    min_lag = int(sample_rate / config.lag_hz[1])
    max_lag = min(int(sample_rate / config.lag_hz[0]), config.win // 2)
    harm = np.zeros(len(frames))
    harm[loud] = _harmonicity(frames[loud], min_lag, max_lag)
    flags = loud & (harm < config.max_harmonicity)

    intervals = []
    t = 0
    n = len(flags)
    while t < n:
        if flags[t]:
            s = t
            while t < n and flags[t]:
                t += 1
            start = s * config.hop / sample_rate
            end = ((t - 1) * config.hop + config.win) / sample_rate
            if intervals and start - intervals[-1][1] < config.merge_gap_s:
                intervals[-1] = (intervals[-1][0], end)
            else:
                intervals.append((start, end))
        else:
            t += 1
    total = x.size / sample_rate
    out = []
    for a, b in intervals:
        b = min(b, total)
        if b - a >= config.min_duration_s:
            out.append((round(a, 4), round(b, 4)))
    return out


# breath annotation file: "<utt_id>\t<start>:<end>[,<start>:<end>...]" or "-"


def format_intervals(intervals):
    if not intervals:
        return "-"
    return ",".join(f"{a:.4f}:{b:.4f}" for a, b in intervals)


def parse_intervals(text, where=""):
    text = text.strip()
    if text == "-" or text == "":
        return []
    out = []
    for part in text.split(","):
        try:
            a, b = part.split(":")
            out.append((float(a), float(b)))
        except ValueError:
            raise InputError(f"{where}malformed interval {part!r}") from None
    return normalize_intervals(out)


def write_annotations(path, table):
    """Write ``{utt_id: intervals}`` in the annotation format, sorted by id."""
    lines = [f"{utt}\t{format_intervals(table[utt])}\n" for utt in sorted(table)]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(lines)


def read_annotations(path):
    table = {}
    with open(Path(path), encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 2:
                raise InputError(f"{path}:{lineno}: expected 2 tab-separated fields")
            table[fields[0]] = parse_intervals(fields[1], f"{path}:{lineno}: ")
    return table
