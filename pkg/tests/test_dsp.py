from __future__ import annotations

import math

import numpy as np
import pytest
import torch

from core.config import AugmentConfig
from core.dsp import (
    CLIP_SAMPLES,
    DEFAULT_STFT,
    Rir,
    Spectrogram,
    StftConfig,
    Waveform,
    augment,
    convolve_rir,
    drr,
    fit_length,
    istft,
    schroeder_rt60,
    snr_db,
    stft,
)
from core.errors import ConfigError, ContractError, EstimationError, LengthError
from core.verifiers.dsp_oracles import ideal_decay


def impulse_rir(n: int = 32, delay: int = 0) -> Rir:
    h = np.zeros(n)
    h[delay] = 1.0
    return Rir(samples=h, rt60_true=0.001, drr_true=math.inf, direct_delay=delay)


class TestStft:
    def test_bins_and_frames(self, rng):
        x = rng.standard_normal(CLIP_SAMPLES)
        s = stft(x)
        assert s.magnitudes.shape == (CLIP_SAMPLES // 128 + 1, 257)
        assert s.phases.shape == s.magnitudes.shape

    def test_sine_peaks_in_its_bin(self):
        t = np.arange(CLIP_SAMPLES) / 16000.0
        s = stft(np.sin(2 * np.pi * 1000.0 * t))
        peak_bin = int(np.argmax(s.magnitudes.mean(axis=0)))
        assert peak_bin == round(1000.0 * 512 / 16000.0)

    def test_roundtrip_snr(self, rng):
        x = rng.standard_normal(CLIP_SAMPLES)
        assert snr_db(x, istft(stft(x)).samples) >= 50.0

    def test_short_signal_is_length_error(self):
        with pytest.raises(LengthError):
            stft(np.ones(100))

    def test_missing_phases_is_contract_error(self, rng):
        s = stft(rng.standard_normal(2048))
        with pytest.raises(ContractError):
            istft(Spectrogram(magnitudes=s.magnitudes, phases=None, length=2048))

    def test_zero_magnitudes_give_silence(self, rng):
        s = stft(rng.standard_normal(2048))
        out = istft(Spectrogram(magnitudes=np.zeros_like(s.magnitudes), phases=s.phases, length=2048))
        assert np.all(out.samples == 0.0)

    def test_default_window_is_cola(self):
        assert DEFAULT_STFT.validate() is DEFAULT_STFT

    def test_bad_hop_rejected(self):
        with pytest.raises(ConfigError):
            StftConfig(fft_size=512, hop=500, window="hann").validate()


class TestConvolution:
    def test_unit_impulse_is_identity(self, rng):
        x = rng.uniform(-0.5, 0.5, 4096)
        y = convolve_rir(x, impulse_rir())
        np.testing.assert_allclose(y.samples, x, atol=1e-9)
        assert y.gain == pytest.approx(1.0)

    def test_impulse_through_rir_returns_rir(self, rng):
        h = np.exp(-np.arange(200) / 30.0) * rng.standard_normal(200)
        h[0] = 1.0
        r = Rir(samples=h, rt60_true=0.1, drr_true=0.0, direct_delay=0)
        x = np.zeros(1000)
        x[0] = 1.0
        y = convolve_rir(x, r)
        np.testing.assert_allclose(y.samples[:200] / y.gain, h, atol=1e-9)

    def test_output_keeps_input_length_and_peak(self, rng):
        x = rng.uniform(-0.7, 0.7, 5000)
        r = Rir(samples=ideal_decay(0.3, 0.5) * rng.standard_normal(8000), rt60_true=0.3, drr_true=0.0, direct_delay=0)
        y = convolve_rir(x, r)
        assert len(y) == len(x)
        assert y.peak == pytest.approx(np.max(np.abs(x)))


class TestSchroeder:
    @pytest.mark.parametrize("t60", [0.2, 0.5, 1.0])
    def test_ideal_exponential(self, t60):
        assert schroeder_rt60(ideal_decay(t60)) == pytest.approx(t60, rel=0.05)

    @pytest.mark.parametrize("t60", [0.1, 0.6, 1.5])
    def test_noise_modulated_decay(self, t60):
        env = ideal_decay(t60, 2.0 * t60 + 0.1)
        estimates = [
            schroeder_rt60(env * np.random.default_rng(seed).standard_normal(len(env)))
            for seed in range(20)
        ]
        assert np.mean(estimates) == pytest.approx(t60, rel=0.10)

    def test_noise_floor_at_30db(self):
        env = ideal_decay(0.6, 1.5)
        estimates = []
        for seed in range(20):
            r = np.random.default_rng(seed)
            x = env * r.standard_normal(len(env)) + 10 ** (-30 / 20) * r.standard_normal(len(env))
            estimates.append(schroeder_rt60(x))
        assert np.mean(estimates) == pytest.approx(0.6, rel=0.10)

    def test_shallow_decay_is_estimation_error(self, rng):
        x = rng.standard_normal(16000) * np.linspace(1.0, 0.5, 16000)
        with pytest.raises(EstimationError) as e:
            schroeder_rt60(x)
        assert "dynamic_range_db" in e.value.details

    def test_silence_is_estimation_error(self):
        with pytest.raises(EstimationError):
            schroeder_rt60(np.zeros(1000))


class TestDrr:
    def test_pure_impulse_is_infinite(self):
        assert drr(impulse_rir()) == math.inf

    def test_equal_energy_is_zero_db(self):
        h = np.zeros(2000)
        h[100] = 1.0
        h[1000] = 1.0
        assert drr(Rir(samples=h, rt60_true=0.1, drr_true=0.0, direct_delay=100)) == pytest.approx(0.0)

    def test_gain_invariant(self, rng):
        h = rng.standard_normal(4000) * ideal_decay(0.2, 0.25)
        h[50] = 3.0
        a = drr(Rir(samples=h, rt60_true=0.2, drr_true=0.0, direct_delay=50))
        b = drr(Rir(samples=0.1 * h, rt60_true=0.2, drr_true=0.0, direct_delay=50))
        assert a == pytest.approx(b)


class TestAugment:
    def test_identity_when_everything_off(self, rng):
        x = rng.uniform(-0.5, 0.5, 2048)
        cfg = AugmentConfig(noise_scale=0.0, p_invert=0.0, p_rir=0.0)
        assert np.array_equal(augment(x, rng, cfg).samples, x)

    def test_inversion_is_exact_negation(self, rng):
        x = rng.uniform(-0.5, 0.5, 2048)
        cfg = AugmentConfig(noise_scale=0.0, p_invert=1.0, p_rir=0.0)
        assert np.array_equal(augment(x, rng, cfg).samples, -x)

    def test_empty_pool_with_rir_probability(self, rng):
        with pytest.raises(ConfigError):
            augment(np.ones(2048), rng, AugmentConfig(p_rir=0.5), rir_pool=[])

    def test_rates(self):
        from core.dsp import draw_augment_plan

        r = np.random.default_rng(0)
        cfg = AugmentConfig()
        plans = [draw_augment_plan(r, cfg, 3) for _ in range(10_000)]
        assert np.mean([p.invert for p in plans]) == pytest.approx(0.5, abs=0.02)
        assert np.mean([p.rir_index is not None for p in plans]) == pytest.approx(0.9, abs=0.02)

    def test_noise_level_follows_snr(self, rng):
        x = np.sin(np.linspace(0, 400 * np.pi, 16000))
        cfg = AugmentConfig(snr_db_range=(20.0, 20.0), p_invert=0.0, p_rir=0.0)
        y = augment(x, rng, cfg).samples
        assert snr_db(x, y) == pytest.approx(20.0, abs=0.5)


class TestHelpers:
    def test_fit_length_pads_and_truncates(self):
        assert len(fit_length(np.ones(10), 16)) == 16
        assert len(fit_length(np.ones(20), 16)) == 16

    def test_waveform_rejects_nan(self):
        with pytest.raises(ContractError):
            Waveform(samples=np.array([0.0, np.nan]))

    def test_torch_and_numpy_stft_agree(self, rng):
        from core.dsp import magnitude_tensor

        x = rng.standard_normal(4096)
        m = magnitude_tensor(torch.as_tensor(x)).numpy()
        np.testing.assert_allclose(m, stft(x).magnitudes, atol=1e-9)
