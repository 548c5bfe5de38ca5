"""
Dry source signals: synthetic speech-like clips, or anechoic WAVs from a user folder.
"""
from __future__ import annotations

import glob
import logging
import os
from typing import List

import numpy as np
from scipy.signal import windows

from core.audio_io import read_wav
from core.dsp import CLIP_SAMPLES, SAMPLE_RATE, Waveform, fit_length, peak_normalize
from core.errors import ConfigError

logger = logging.getLogger(__name__)

F0_RANGE = (80.0, 300.0)
SYLLABLE_RATE = (2.0, 8.0)
FORMANT_RANGES = ((300.0, 900.0), (900.0, 2500.0), (2500.0, 3500.0))
LONG_GAP = (0.06, 0.20)
SHORT_GAP = (0.01, 0.04)
MIN_LONG_GAPS = 2
SOURCE_PEAK = 0.9


def _syllable_envelope(rng: np.random.Generator, n: int, fs: int) -> np.ndarray:
    rate = rng.uniform(*SYLLABLE_RATE)

    # lay out (syllable, gap) pairs until the clip is covered
    segments = []
    total = 0
    while total < n:
        syl = int(fs * rng.uniform(0.5, 0.9) / rate)
        gap_range = LONG_GAP if rng.random() < 0.4 else SHORT_GAP
        gap = int(fs * rng.uniform(*gap_range))
        segments.append([max(syl, 16), gap])
        total += syl + gap

    # guarantee observable decay tails
    long_gaps = [i for i, (_, g) in enumerate(segments[:-1]) if g >= LONG_GAP[0] * fs]
    for i in range(min(len(segments) - 1, MIN_LONG_GAPS)):
        if len(long_gaps) >= MIN_LONG_GAPS:
            break
        if i not in long_gaps:
            segments[i][1] = int(fs * rng.uniform(*LONG_GAP))
            long_gaps.append(i)

    env = np.zeros(n)
    pos = int(fs * rng.uniform(0.0, 0.05))
    for syl, gap in segments:
        if pos >= n:
            break
        stop = min(pos + syl, n)
        env[pos:stop] = rng.uniform(0.5, 1.0) * windows.tukey(syl, alpha=0.3)[: stop - pos]
        pos = stop + gap
    return env


def _harmonic_carrier(rng: np.random.Generator, n: int, fs: int) -> np.ndarray:
    t = np.arange(n) / fs
    base = rng.uniform(*F0_RANGE)
    wobble = 0.08 * np.sin(2 * np.pi * rng.uniform(0.5, 3.0) * t + rng.uniform(0, 2 * np.pi))
    drift = rng.uniform(-0.15, 0.15) * (t / t[-1] - 0.5)
    f0 = np.clip(base * (1.0 + wobble + drift), *F0_RANGE)
    phase = 2 * np.pi * np.cumsum(f0) / fs

    formants = [rng.uniform(*r) for r in FORMANT_RANGES]
    widths = [90.0, 120.0, 160.0]

    n_harm = int(0.45 * fs // F0_RANGE[0])
    out = np.zeros(n)
    for k in range(1, n_harm + 1):
        fk = k * f0
        audible = fk < 0.45 * fs
        if not np.any(audible):
            break
        weight = 0.02 + sum(np.exp(-0.5 * ((fk - F) / bw) ** 2) for F, bw in zip(formants, widths))
        out += np.where(audible, weight * np.sin(k * phase) / np.sqrt(k), 0.0)
    return out


def synth_source(rng: np.random.Generator, n: int = CLIP_SAMPLES, fs: int = SAMPLE_RATE) -> Waveform:
    """
    Speech-like clip: harmonic carrier (pitch 80-300 Hz) shaped by three formants,
    syllabic amplitude modulation at 2-8 Hz, at least two silent gaps >= 60 ms.
    """
    x = _harmonic_carrier(rng, n, fs) * _syllable_envelope(rng, n, fs)
    x, gain = peak_normalize(x, SOURCE_PEAK)
    return Waveform(samples=x, sample_rate=fs, gain=gain)


def count_silent_gaps(w: Waveform, min_gap: float = 0.05, threshold: float = 1e-4) -> int:
    """Number of interior runs where |x| stays below threshold for >= min_gap seconds."""
    quiet = np.abs(w.samples) < threshold * max(w.peak, 1e-12)
    edges = np.diff(np.concatenate([[0], quiet.astype(np.int8), [0]]))
    starts, stops = np.nonzero(edges == 1)[0], np.nonzero(edges == -1)[0]
    n_min = int(min_gap * w.sample_rate)
    return sum(1 for a, b in zip(starts, stops) if b - a >= n_min and a > 0 and b < len(w))


def list_source_folder(folder: str) -> List[str]:
    if not os.path.isdir(folder):
        raise ConfigError(f"source folder not found: {folder}")
    paths = sorted(glob.glob(os.path.join(folder, "**", "*.wav"), recursive=True))
    if not paths:
        raise ConfigError(f"no .wav files under {folder}")
    logger.info("source folder %s: %d files", folder, len(paths))
    return paths


def load_source(path: str, rng: np.random.Generator, n: int = CLIP_SAMPLES) -> Waveform:
    """Random n-sample excerpt of a user-provided anechoic WAV (zero-padded if short)."""
    w = read_wav(path)
    x = w.samples
    if len(x) > n:
        start = int(rng.integers(0, len(x) - n + 1))
        x = x[start:start + n]
    x, gain = peak_normalize(fit_length(x, n), SOURCE_PEAK)
    return Waveform(samples=x, gain=gain)
