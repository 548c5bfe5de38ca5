"""
Parametric shoebox rooms: Sabine reverberation time, a distance law for DRR,
exponential-tail RIRs and the noisy scene descriptor that stands in for an image.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Tuple

import numpy as np

from core.config import SynthConfig
from core.dsp import SAMPLE_RATE, SPEED_OF_SOUND, Rir, drr, DIRECT_WINDOW_SECONDS
from core.errors import ConfigError

logger = logging.getLogger(__name__)

SABINE_CONSTANT = 0.161
RT60_HARD_BOUNDS = (0.1, 1.5)
DRR_BOUNDS = (-15.0, 20.0)
DRR_MARGIN_DB = 0.5
MIN_DISTANCE = 0.01
N_NUISANCE = 2
MAX_REJECTIONS = 100_000


@dataclass(frozen=True)
class RoomSpec:
    lx: float
    ly: float
    lz: float
    absorption: float
    distance: float = 1.0
    room_id: str = ""

    @property
    def volume(self) -> float:
        return self.lx * self.ly * self.lz

    @property
    def surface(self) -> float:
        return 2.0 * (self.lx * self.ly + self.lx * self.lz + self.ly * self.lz)

    @property
    def diagonal(self) -> float:
        return math.sqrt(self.lx ** 2 + self.ly ** 2 + self.lz ** 2)

    @property
    def geometry(self) -> Tuple[float, float, float, float]:
        return (self.lx, self.ly, self.lz, self.absorption)


def sabine_rt60(spec: RoomSpec) -> float:
    if spec.absorption <= 0:
        raise ConfigError("mean absorption must be > 0 for the Sabine formula", room_id=spec.room_id)
    return SABINE_CONSTANT * spec.volume / (spec.surface * spec.absorption)


def critical_distance(spec: RoomSpec) -> float:
    """Distance at which direct and reverberant energy are equal."""
    return 0.057 * math.sqrt(spec.volume / sabine_rt60(spec))


def drr_for_distance(spec: RoomSpec) -> float:
    d = max(spec.distance, MIN_DISTANCE)
    value = 20.0 * math.log10(critical_distance(spec) / d)
    return float(np.clip(value, *DRR_BOUNDS))


def sample_room(rng: np.random.Generator, cfg: SynthConfig, room_id: str = "") -> RoomSpec:
    """
    Rejection-samples geometry and absorption until the Sabine RT60 falls inside
    cfg.rt60_range (itself clipped to the hard 0.1-1.5 s bounds).
    """
    lo = max(cfg.rt60_range[0], RT60_HARD_BOUNDS[0])
    hi = min(cfg.rt60_range[1], RT60_HARD_BOUNDS[1])
    if lo >= hi:
        raise ConfigError(f"empty rt60 range {cfg.rt60_range}")

    for _ in range(MAX_REJECTIONS):
        lx, ly, lz = rng.uniform(*cfg.dim_range, size=3)
        alpha = rng.uniform(*cfg.absorption_range)
        spec = RoomSpec(float(lx), float(ly), float(lz), float(alpha), room_id=room_id)
        if lo <= sabine_rt60(spec) <= hi:
            return with_distance(spec, rng)
    raise ConfigError("could not sample a room inside the requested rt60 range", rt60_range=cfg.rt60_range)


def with_distance(spec: RoomSpec, rng: np.random.Generator) -> RoomSpec:
    d_max = min(5.0, 0.9 * spec.diagonal)
    return replace(spec, distance=float(rng.uniform(0.5, d_max)))


def synth_rir(spec: RoomSpec, rng: np.random.Generator, sample_rate: int = SAMPLE_RATE) -> Rir:
    """
    Unit direct impulse at d / c, followed immediately by Gaussian noise under an
    exp(-6.908 t / RT60) envelope. The tail gain is solved so that the DRR measured
    with the +-2.5 ms direct window equals the distance-law value, raised to the
    lowest reachable value when the law asks for less.
    """
    rt60 = sabine_rt60(spec)
    target_drr = drr_for_distance(spec)

    delay = int(round(max(spec.distance, MIN_DISTANCE) / SPEED_OF_SOUND * sample_rate))
    tail_len = int(math.ceil((1.2 * rt60 + 0.05) * sample_rate))
    t = np.arange(tail_len) / sample_rate
    tail = rng.standard_normal(tail_len) * np.exp(-6.908 * t / rt60)

    h = np.zeros(delay + 1 + tail_len)
    h[delay] = 1.0

    half = int(round(DIRECT_WINDOW_SECONDS * sample_rate))
    inside = float(np.sum(tail[:half] ** 2))
    outside = float(np.sum(tail[half:] ** 2))
    # the early tail shares the direct window, so very low DRRs are out of reach
    floor = 10.0 * math.log10(inside / outside) + DRR_MARGIN_DB
    if target_drr < floor:
        logger.debug("room %s: DRR %.2f dB unreachable, using %.2f dB", spec.room_id, target_drr, floor)
        target_drr = floor
    ratio = 10.0 ** (target_drr / 10.0)
    # (1 + g^2 inside) / (g^2 outside) = ratio
    gain = 1.0 / math.sqrt(ratio * outside - inside)
    h[delay + 1:] = gain * tail

    r = Rir(samples=h, rt60_true=rt60, drr_true=target_drr, direct_delay=delay, sample_rate=sample_rate)
    r.drr_true = drr(r)
    return r


def scene_descriptor(spec: RoomSpec, rng: np.random.Generator, sigma: float = 0.1) -> np.ndarray:
    """
    8 reals: lx/10, ly/10, lz/5, absorption/0.3, distance/5, surface/500, each
    with multiplicative N(0, sigma) noise, then two pure-noise dimensions.
    """
    informative = np.array([
        spec.lx / 10.0,
        spec.ly / 10.0,
        spec.lz / 5.0,
        spec.absorption / 0.3,
        spec.distance / 5.0,
        spec.surface / 500.0,
    ])
    informative = informative * (1.0 + sigma * rng.standard_normal(informative.shape))
    nuisance = rng.standard_normal(N_NUISANCE)
    return np.concatenate([informative, nuisance])
