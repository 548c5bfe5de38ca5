from __future__ import annotations

import math

import numpy as np

from core.dsp import DEFAULT_STFT, SAMPLE_RATE, Rir, convolve_rir, drr, istft, schroeder_rt60, snr_db, stft
from core.errors import VamError
from core.verify_report import VerifyReport
from core.verifiers.base import BaseVerifier
from synth.rooms import RoomSpec, sabine_rt60

IDEAL_RT60S = (0.2, 0.5, 1.0)


def ideal_decay(t60: float, seconds: float = 0.0, fs: int = SAMPLE_RATE) -> np.ndarray:
    """exp(-6.908 t / T) sampled over `seconds` (default 2 T)."""
    n = int((seconds or 2.0 * t60) * fs)
    t = np.arange(n) / float(fs)
    return np.exp(-6.908 * t / t60)


class DspVerifier(BaseVerifier):
    name = "dsp"

    def verify(self) -> VerifyReport:
        rep = VerifyReport(ok=True, kind="oracle", summary="DSP oracles")

        for t60 in IDEAL_RT60S:
            try:
                est = schroeder_rt60(ideal_decay(t60))
                rel = abs(est - t60) / t60
                rep.add(f"schroeder.ideal_{t60}", rel < 0.05, f"T={t60} s -> {est:.4f} s ({100 * rel:.2f}%)")
            except VamError as e:
                rep.add(f"schroeder.ideal_{t60}", False, e.message)

        x = np.random.default_rng(0).standard_normal(40960)
        back = istft(stft(x, DEFAULT_STFT)).samples
        snr = snr_db(x, back)
        rep.add("stft.roundtrip", snr >= 50.0, f"istft(stft(x)) SNR {snr:.1f} dB")

        room = RoomSpec(10.0, 8.0, 3.0, 0.2, 1.0)
        rt = sabine_rt60(room)
        rep.add("sabine.10x8x3", abs(rt - 0.721) < 5e-4, f"Sabine RT60 {rt:.4f} s (expected 0.721)")

        impulse = np.zeros(64)
        impulse[0] = 1.0
        identity = Rir(samples=impulse, rt60_true=0.001, drr_true=math.inf, direct_delay=0)
        y = convolve_rir(x, identity)
        err = float(np.max(np.abs(y.samples - x)))
        rep.add("convolve.identity", err < 1e-9 and abs(y.gain - 1.0) < 1e-12, f"max deviation {err:.2e}")

        rep.add("drr.impulse", drr(identity) == math.inf, "pure impulse has no reverberant energy")
        return rep
