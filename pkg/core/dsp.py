"""
Deterministic signal-processing primitives shared by every other package:
STFT / ISTFT (numpy API over a torch core so the same transform is
differentiable inside the networks), RIR convolution, Schroeder decay analysis,
DRR and the baseline augmentation chain.

Signals are mono, 16 kHz. Training clips are 2.56 s = 40960 samples.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import torch
from scipy import signal, stats
from scipy.ndimage import uniform_filter1d

from core.config import AugmentConfig
from core.errors import ConfigError, ContractError, EstimationError, LengthError

SAMPLE_RATE = 16000
CLIP_SAMPLES = 40960
SPEED_OF_SOUND = 343.0
DIRECT_WINDOW_SECONDS = 0.0025


# -----------------------------
# Types
# -----------------------------

@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE
    gain: float = 1.0  # normalisation gain applied by the op that produced it

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim != 1:
            raise ContractError(f"waveform must be 1-D, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ContractError("waveform contains non-finite samples")
        self.samples = x

    def __len__(self) -> int:
        return int(self.samples.shape[0])

    @property
    def duration(self) -> float:
        return len(self) / float(self.sample_rate)

    @property
    def peak(self) -> float:
        return float(np.max(np.abs(self.samples))) if len(self) else 0.0


@dataclass(frozen=True)
class StftConfig:
    fft_size: int = 512
    hop: int = 128
    window: str = "hann"

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    def window_array(self) -> np.ndarray:
        return signal.get_window(self.window, self.fft_size, fftbins=True)

    def window_tensor(self, dtype=torch.float32, device=None) -> torch.Tensor:
        return torch.as_tensor(self.window_array(), dtype=dtype, device=device)

    def n_frames(self, length: int) -> int:
        # centre padding of fft_size // 2 on both sides
        return length // self.hop + 1

    def validate(self) -> "StftConfig":
        win = self.window_array()
        noverlap = self.fft_size - self.hop
        if not signal.check_COLA(win, self.fft_size, noverlap):
            raise ConfigError(f"{self.window} window with hop {self.hop} violates COLA")
        if not signal.check_NOLA(win, self.fft_size, noverlap):
            raise ConfigError(f"{self.window} window with hop {self.hop} violates NOLA")
        return self


DEFAULT_STFT = StftConfig()


@dataclass
class Spectrogram:
    magnitudes: np.ndarray              # frames x bins, >= 0
    config: StftConfig = DEFAULT_STFT
    phases: Optional[np.ndarray] = None  # frames x bins
    length: int = 0                     # analysed signal length in samples

    def __post_init__(self):
        if self.magnitudes.ndim != 2 or self.magnitudes.shape[1] != self.config.n_bins:
            raise ContractError(
                f"magnitudes must be frames x {self.config.n_bins}, got {self.magnitudes.shape}"
            )
        if np.any(self.magnitudes < 0):
            raise ContractError("magnitudes must be non-negative")
        if self.phases is not None and self.phases.shape != self.magnitudes.shape:
            raise ContractError("phases must match magnitudes")


@dataclass
class Rir:
    samples: np.ndarray
    rt60_true: float
    drr_true: float
    direct_delay: int
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if self.direct_delay < 0:
            raise ContractError("direct_delay must be >= 0")
        if not self.rt60_true > 0:
            raise ContractError("rt60_true must be > 0")
        if not np.isfinite(np.sum(self.samples ** 2)):
            raise ContractError("RIR energy is not finite")


WaveLike = Union[Waveform, np.ndarray, torch.Tensor]


def samples_of(x: WaveLike) -> np.ndarray:
    if isinstance(x, Waveform):
        return x.samples
    if isinstance(x, Rir):
        return x.samples
    if isinstance(x, torch.Tensor):
        return x.detach().cpu().numpy().astype(np.float64)
    return np.asarray(x, dtype=np.float64)


def as_batch(x, dtype=torch.float32, device=None) -> torch.Tensor:
    """
    Waveform / ndarray / tensor / list of those -> [B, T] tensor.
    """
    if isinstance(x, (list, tuple)):
        return torch.stack([as_batch(v, dtype, device)[0] for v in x])
    if isinstance(x, torch.Tensor):
        t = x.to(dtype=dtype, device=device)
    else:
        t = torch.as_tensor(samples_of(x), dtype=dtype, device=device)
    return t.unsqueeze(0) if t.dim() == 1 else t


def fit_length(x: np.ndarray, n: int = CLIP_SAMPLES) -> np.ndarray:
    """Right-pad with zeros or truncate to exactly n samples."""
    x = np.asarray(x, dtype=np.float64)
    if len(x) >= n:
        return x[:n].copy()
    return np.pad(x, (0, n - len(x)))


def peak_normalize(x: np.ndarray, peak: float = 0.99) -> Tuple[np.ndarray, float]:
    m = float(np.max(np.abs(x))) if len(x) else 0.0
    if m == 0.0:
        return x.copy(), 1.0
    g = peak / m
    return x * g, g


# -----------------------------
# STFT / ISTFT
# -----------------------------

def stft_tensor(x: torch.Tensor, cfg: StftConfig = DEFAULT_STFT) -> torch.Tensor:
    """
    [..., T] real -> [..., frames, bins] complex.
    Padding policy: fft_size // 2 zeros on both sides (centred frames), so
    frames = floor(T / hop) + 1 (equivalently floor((T + fft - fft) / hop) + 1
    over the padded signal).
    """
    if x.shape[-1] < cfg.fft_size:
        raise LengthError(f"signal of {x.shape[-1]} samples is shorter than one frame ({cfg.fft_size})")
    lead = x.shape[:-1]
    flat = x.reshape(-1, x.shape[-1])
    spec = torch.stft(
        flat,
        n_fft=cfg.fft_size,
        hop_length=cfg.hop,
        window=cfg.window_tensor(dtype=x.dtype, device=x.device),
        center=True,
        pad_mode="constant",
        return_complex=True,
    )
    spec = spec.transpose(-1, -2)
    return spec.reshape(*lead, spec.shape[-2], spec.shape[-1])


def istft_tensor(
    magnitudes: torch.Tensor,
    phases: torch.Tensor,
    cfg: StftConfig = DEFAULT_STFT,
    length: Optional[int] = None,
) -> torch.Tensor:
    """[..., frames, bins] magnitude + phase -> [..., T]."""
    lead = magnitudes.shape[:-2]
    mag = magnitudes.reshape(-1, *magnitudes.shape[-2:])
    ph = phases.reshape(-1, *phases.shape[-2:])
    spec = torch.polar(mag, ph).transpose(-1, -2)
    out = torch.istft(
        spec,
        n_fft=cfg.fft_size,
        hop_length=cfg.hop,
        window=cfg.window_tensor(dtype=magnitudes.dtype, device=magnitudes.device),
        center=True,
        length=length,
    )
    return out.reshape(*lead, out.shape[-1])


def magnitude_tensor(x: torch.Tensor, cfg: StftConfig = DEFAULT_STFT) -> torch.Tensor:
    return stft_tensor(x, cfg).abs()


def stft(w: WaveLike, c: StftConfig = DEFAULT_STFT) -> Spectrogram:
    x = torch.as_tensor(samples_of(w), dtype=torch.float64)
    spec = stft_tensor(x, c)
    return Spectrogram(
        magnitudes=spec.abs().numpy(),
        phases=torch.angle(spec).numpy(),
        config=c,
        length=int(x.shape[-1]),
    )


def istft(s: Spectrogram, c: Optional[StftConfig] = None) -> Waveform:
    if s.phases is None:
        raise ContractError("istft needs phases; pair generated magnitudes with the input's phases")
    c = c or s.config
    mag = torch.as_tensor(s.magnitudes, dtype=torch.float64)
    ph = torch.as_tensor(s.phases, dtype=torch.float64)
    out = istft_tensor(mag, ph, c, length=s.length or None)
    return Waveform(samples=out.numpy())


def snr_db(reference: np.ndarray, estimate: np.ndarray) -> float:
    err = np.sum((reference - estimate) ** 2)
    ref = np.sum(reference ** 2)
    if err == 0:
        return math.inf
    return 10.0 * math.log10(ref / err)


# -----------------------------
# RIR convolution
# -----------------------------

def convolve_rir(w: WaveLike, r: Rir) -> Waveform:
    """
    Full linear convolution truncated to len(w), rescaled so the output peak equals
    the input peak. The applied gain is recorded on the result.
    """
    sr = w.sample_rate if isinstance(w, Waveform) else SAMPLE_RATE
    if sr != SAMPLE_RATE or r.sample_rate != SAMPLE_RATE:
        raise ContractError(f"convolution expects {SAMPLE_RATE} Hz inputs")
    x = samples_of(w)
    out = signal.fftconvolve(x, r.samples, mode="full")[: len(x)]
    peak_in = float(np.max(np.abs(x))) if len(x) else 0.0
    peak_out = float(np.max(np.abs(out))) if len(out) else 0.0
    gain = peak_in / peak_out if peak_in > 0 and peak_out > 0 else 1.0
    return Waveform(samples=out * gain, gain=gain)


# -----------------------------
# Decay analysis
# -----------------------------

def _truncation_point(energy: np.ndarray, noise: float, fs: int) -> Tuple[int, float]:
    """
    Where the decay meets the noise floor, and the energy the exponential decay
    would still carry beyond that point.
    """
    n = len(energy)
    if noise <= 0:
        return n, 0.0
    win = max(int(0.01 * fs), 1)
    smoothed = uniform_filter1d(energy, size=win, mode="nearest")
    sm_db = 10.0 * np.log10(smoothed + 1e-30)
    noise_db = 10.0 * math.log10(noise)

    p = int(np.argmax(smoothed))
    below = np.nonzero(sm_db[p:] < noise_db + 10.0)[0]
    end = p + int(below[0]) if below.size else n
    if end - p < 4:
        return n, 0.0

    idx = np.arange(p, end, dtype=np.float64)
    slope, intercept, *_ = stats.linregress(idx, sm_db[p:end])
    if slope >= 0:
        return n, 0.0

    cross = (noise_db - intercept) / slope
    cut = int(np.clip(cross, p + 1, n))
    e_cut = 10.0 ** ((slope * cut + intercept) / 10.0)
    decay_per_sample = -slope * math.log(10.0) / 10.0
    return cut, float(e_cut / decay_per_sample)


def energy_decay_curve(x: np.ndarray, fs: int = SAMPLE_RATE) -> Tuple[np.ndarray, float]:
    """
    Noise-compensated Schroeder backward integral in dB (0 dB at the start) and
    the measurable dynamic range (peak energy over noise floor, dB).
    """
    energy = np.asarray(x, dtype=np.float64) ** 2
    if not np.any(energy > 0):
        raise EstimationError("impulse response is silent")

    n_tail = max(len(energy) // 10, 1)
    noise = float(np.mean(energy[-n_tail:]))
    peak = float(np.max(energy))
    dyn_range = math.inf if noise <= 0 else 10.0 * math.log10(peak / noise)

    cut, tail = _truncation_point(energy, noise, fs)
    compensated = energy[:cut] - noise
    edc = np.cumsum(compensated[::-1])[::-1] + tail
    edc = np.maximum(edc, edc[0] * 1e-12 if edc[0] > 0 else 1e-30)
    edc_db = 10.0 * np.log10(edc / edc[0])
    return edc_db, dyn_range


def schroeder_rt60(
    r: Union[Rir, np.ndarray],
    sample_rate: int = SAMPLE_RATE,
    decay_range: Tuple[float, float] = (-5.0, -25.0),
    min_range_db: float = 35.0,
) -> float:
    """
    T20-style RT60: line fit on the -5 dB -> -25 dB segment of the energy decay
    curve, extrapolated to -60 dB.
    """
    x = r.samples if isinstance(r, Rir) else np.asarray(r, dtype=np.float64)
    fs = r.sample_rate if isinstance(r, Rir) else sample_rate

    edc_db, dyn_range = energy_decay_curve(x, fs)
    if dyn_range < min_range_db:
        raise EstimationError(
            f"insufficient decay range: {dyn_range:.1f} dB measurable, {min_range_db:.0f} dB needed",
            dynamic_range_db=round(dyn_range, 2),
        )

    hi, lo = decay_range
    start = np.nonzero(edc_db <= hi)[0]
    stop = np.nonzero(edc_db <= lo)[0]
    if start.size == 0 or stop.size == 0 or stop[0] - start[0] < 2:
        raise EstimationError(
            f"decay curve never spans {hi:.0f} dB -> {lo:.0f} dB",
            min_edc_db=round(float(edc_db.min()), 2),
        )
    i0, i1 = int(start[0]), int(stop[0])
    t = np.arange(i0, i1) / float(fs)
    slope, *_ = stats.linregress(t, edc_db[i0:i1])
    if slope >= 0:
        raise EstimationError("energy decay curve does not decay")
    return float(-60.0 / slope)


def drr(r: Rir) -> float:
    """
    Direct-to-reverberant ratio in dB: energy within +-2.5 ms of the direct arrival
    over the remaining energy. A RIR without reverberant energy returns +inf.
    """
    energy = r.samples ** 2
    half = int(round(DIRECT_WINDOW_SECONDS * r.sample_rate))
    lo = max(r.direct_delay - half, 0)
    hi = min(r.direct_delay + half + 1, len(energy))
    direct = float(np.sum(energy[lo:hi]))
    rest = float(np.sum(energy)) - direct
    if rest <= 0:
        return math.inf
    if direct <= 0:
        return -math.inf
    return 10.0 * math.log10(direct / rest)


# -----------------------------
# Augmentation (baseline training only)
# -----------------------------

def colored_noise(n: int, beta: float, rng: np.random.Generator) -> np.ndarray:
    """Unit-RMS Gaussian noise with a 1/f^beta power spectrum."""
    white = rng.standard_normal(n)
    spec = np.fft.rfft(white)
    f = np.fft.rfftfreq(n)
    scale = np.zeros_like(f)
    scale[1:] = f[1:] ** (-beta / 2.0)
    noise = np.fft.irfft(spec * scale, n)
    rms = float(np.sqrt(np.mean(noise ** 2)))
    return noise / rms if rms > 0 else noise


@dataclass
class AugmentPlan:
    beta: float
    snr_db: float
    invert: bool
    rir_index: Optional[int]
    noise_seed: int


def draw_augment_plan(rng: np.random.Generator, cfg: AugmentConfig, n_rirs: int) -> AugmentPlan:
    if cfg.p_rir > 0 and n_rirs == 0:
        raise ConfigError("augmentation needs a non-empty RIR pool when p_rir > 0")
    beta = float(rng.uniform(*cfg.beta_range))
    snr = float(rng.uniform(*cfg.snr_db_range))
    invert = bool(rng.random() < cfg.p_invert)
    use_rir = bool(rng.random() < cfg.p_rir)
    idx = int(rng.integers(n_rirs)) if use_rir else None
    return AugmentPlan(beta=beta, snr_db=snr, invert=invert, rir_index=idx, noise_seed=int(rng.integers(2 ** 31)))


def apply_augment_plan(w: WaveLike, plan: AugmentPlan, cfg: AugmentConfig, rir_pool: Sequence[Rir]) -> Waveform:
    x = samples_of(w).copy()

    if cfg.noise_scale > 0:
        rms = float(np.sqrt(np.mean(x ** 2))) if len(x) else 0.0
        noise = colored_noise(len(x), plan.beta, np.random.default_rng(plan.noise_seed))
        x = x + cfg.noise_scale * rms * 10.0 ** (-plan.snr_db / 20.0) * noise

    if plan.invert:
        x = -x

    if plan.rir_index is not None:
        x = convolve_rir(Waveform(x), rir_pool[plan.rir_index]).samples

    return Waveform(samples=x)


def augment(
    w: WaveLike,
    rng: np.random.Generator,
    cfg: Optional[AugmentConfig] = None,
    rir_pool: Sequence[Rir] = (),
) -> Waveform:
    """
    Colored noise (always), polarity inversion (p_invert) and a foreign-room RIR
    (p_rir), in that order.
    """
    cfg = cfg or AugmentConfig()
    plan = draw_augment_plan(rng, cfg, len(rir_pool))
    return apply_augment_plan(w, plan, cfg, rir_pool)
