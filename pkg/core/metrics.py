"""
Scalar quality / acoustics measures.

- srmr: simplified speech-to-reverberation modulation energy ratio
- srmr_norm: srmr clipped into [0, 1]
- rte: absolute difference of learned RT60 estimates (seconds)
- stft_error / log_stft_error: magnitude-spectrogram MSE (log1p variant)

The learned estimator lives in models.rt60_estimator; anything with an
`estimate(w) -> float` method is accepted here.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Protocol, Tuple

import numpy as np
import torch
from scipy import signal

from core.dsp import DEFAULT_STFT, SAMPLE_RATE, StftConfig, WaveLike, as_batch, magnitude_tensor, samples_of
from core.errors import MetricError, ShapeError

SRMR_MAX = 20.0
SRMR_N_BANDS = 8
SRMR_LOW_EDGE = 125.0
SRMR_HIGH_EDGE = 8000.0
ENVELOPE_RATE = 400
LOW_MOD_CENTERS = (4.0, 8.0, 16.0, 32.0)
HIGH_MOD_CENTERS = (64.0, 128.0)


class RtEstimator(Protocol):
    def estimate(self, w: WaveLike) -> float: ...


# -----------------------------
# SRMR (simplified)
# -----------------------------

@functools.lru_cache(maxsize=4)
def _acoustic_filterbank(fs: int) -> Tuple[np.ndarray, ...]:
    nyq = fs / 2.0
    edges = np.geomspace(SRMR_LOW_EDGE, SRMR_HIGH_EDGE, SRMR_N_BANDS + 1)
    edges = np.minimum(edges, 0.95 * nyq)
    bank = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi <= lo:
            hi = min(lo * 1.05, 0.99 * nyq)
        bank.append(signal.butter(4, [lo, hi], btype="bandpass", fs=fs, output="sos"))
    return tuple(bank)


@functools.lru_cache(maxsize=4)
def _envelope_lowpass(fs: int) -> np.ndarray:
    return signal.butter(4, 0.95 * ENVELOPE_RATE / 2.0, btype="lowpass", fs=fs, output="sos")


def _band_energy(power: np.ndarray, freqs: np.ndarray, centers) -> float:
    total = 0.0
    for c in centers:
        lo, hi = c / math.sqrt(2.0), c * math.sqrt(2.0)
        total += float(np.sum(power[(freqs >= lo) & (freqs < hi)]))
    return total


def modulation_energies(w: WaveLike, fs: int = SAMPLE_RATE) -> Tuple[float, float]:
    """(low-modulation energy, high-modulation energy) summed over acoustic bands."""
    x = samples_of(w)
    step = fs // ENVELOPE_RATE
    lp = _envelope_lowpass(fs)
    low = high = 0.0
    for sos in _acoustic_filterbank(fs):
        band = signal.sosfiltfilt(sos, x)
        env = signal.sosfiltfilt(lp, np.abs(band))[::step]
        env = env - env.mean()
        power = np.abs(np.fft.rfft(env)) ** 2
        freqs = np.fft.rfftfreq(len(env), d=1.0 / ENVELOPE_RATE)
        low += _band_energy(power, freqs, LOW_MOD_CENTERS)
        high += _band_energy(power, freqs, HIGH_MOD_CENTERS)
    return low, high


def srmr(w: WaveLike, fs: int = SAMPLE_RATE) -> float:
    """Higher means drier. Raises MetricError on silent input."""
    x = samples_of(w)
    if len(x) == 0 or not np.any(x != 0):
        raise MetricError("srmr is undefined for silent input")
    low, high = modulation_energies(x, fs)
    if high <= 0:
        raise MetricError("no high-band modulation energy; input too short or degenerate")
    return low / high


def normalize_srmr(score: float, s_max: float = SRMR_MAX) -> float:
    return min(max(score, 0.0), s_max) / s_max


def srmr_norm(w: WaveLike, s_max: float = SRMR_MAX) -> float:
    return normalize_srmr(srmr(w), s_max)


# -----------------------------
# RT60 error
# -----------------------------

def rte(a: WaveLike, b: WaveLike, e: RtEstimator) -> float:
    return abs(e.estimate(a) - e.estimate(b))


# -----------------------------
# Spectrogram errors
# -----------------------------

def _check_lengths(pred: torch.Tensor, target: torch.Tensor) -> None:
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {tuple(pred.shape)} and target {tuple(target.shape)} differ")


def stft_error_tensor(pred: torch.Tensor, target: torch.Tensor, cfg: StftConfig = DEFAULT_STFT) -> torch.Tensor:
    _check_lengths(pred, target)
    return torch.mean((magnitude_tensor(pred, cfg) - magnitude_tensor(target, cfg)) ** 2)


def log_stft_error_tensor(pred: torch.Tensor, target: torch.Tensor, cfg: StftConfig = DEFAULT_STFT) -> torch.Tensor:
    """
    Differentiable; the reverberator losses call this directly.
    """
    _check_lengths(pred, target)
    p = torch.log1p(magnitude_tensor(pred, cfg))
    t = torch.log1p(magnitude_tensor(target, cfg))
    return torch.mean((p - t) ** 2)


def stft_error(pred: WaveLike, target: WaveLike, cfg: StftConfig = DEFAULT_STFT) -> float:
    p, t = as_batch(pred, torch.float64), as_batch(target, torch.float64)
    return float(stft_error_tensor(p, t, cfg))


def log_stft_error(pred: WaveLike, target: WaveLike, cfg: StftConfig = DEFAULT_STFT) -> float:
    p, t = as_batch(pred, torch.float64), as_batch(target, torch.float64)
    return float(log_stft_error_tensor(p, t, cfg))


# -----------------------------
# Report
# -----------------------------

METRIC_HEADER = ["variant", "mode", "n", "rte", "stft_err", "log_stft_err"]


@dataclass
class MetricReport:
    rte: float
    stft_err: Optional[float] = None
    log_stft_err: Optional[float] = None
    strata: List[Tuple[float, float]] = field(default_factory=list)  # (upper rt60 edge, normalised rte)
    n: int = 0

    def __post_init__(self):
        for name in ("rte", "stft_err", "log_stft_err"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise MetricError(f"{name} must be >= 0, got {v}")

    def to_row(self, variant: str = "", mode: str = "") -> Dict[str, object]:
        return {
            "variant": variant,
            "mode": mode,
            "n": self.n,
            "rte": self.rte,
            "stft_err": "" if self.stft_err is None else self.stft_err,
            "log_stft_err": "" if self.log_stft_err is None else self.log_stft_err,
        }
