from __future__ import annotations

import json
import os
from dataclasses import replace

import numpy as np
import pytest

from core.audio_io import read_wav, write_wav
from core.config import SynthConfig
from core.dsp import SAMPLE_RATE, SPEED_OF_SOUND, Waveform, convolve_rir, drr, schroeder_rt60
from core.errors import BuildError, ConfigError
from memory.schema import DESCRIPTOR_DIM, ManifestEntry
from synth.data_loader import load_split, read_rir
from synth.dataset import RenderTask, check_room_disjoint, descriptor_learnability
from synth.rooms import (
    MIN_DISTANCE,
    RoomSpec,
    critical_distance,
    drr_for_distance,
    sabine_rt60,
    sample_room,
    scene_descriptor,
    synth_rir,
)
from synth.sources import count_silent_gaps, list_source_folder, synth_source


class TestSabine:
    def test_reference_room(self):
        assert sabine_rt60(RoomSpec(10.0, 8.0, 3.0, 0.2)) == pytest.approx(0.721, abs=5e-4)

    def test_doubling_absorption_halves_rt60(self):
        a = sabine_rt60(RoomSpec(7.0, 5.0, 3.0, 0.1))
        b = sabine_rt60(RoomSpec(7.0, 5.0, 3.0, 0.2))
        assert b == pytest.approx(a / 2.0)

    def test_scaling_dimensions_scales_rt60(self):
        a = sabine_rt60(RoomSpec(4.0, 3.0, 2.5, 0.2))
        b = sabine_rt60(RoomSpec(8.0, 6.0, 5.0, 0.2))
        assert b == pytest.approx(2.0 * a)

    def test_zero_absorption(self):
        with pytest.raises(ConfigError):
            sabine_rt60(RoomSpec(5.0, 5.0, 3.0, 0.0))

    def test_sampled_rooms_stay_in_range(self, rng):
        cfg = SynthConfig()
        for _ in range(50):
            spec = sample_room(rng, cfg)
            assert 0.1 <= sabine_rt60(spec) <= 1.5
            assert 0.5 <= spec.distance <= spec.diagonal


class TestRir:
    # 6 x 5 x 3 m: critical distance about 0.7 m, so 2 m sits well inside the reachable DRR range
    @pytest.mark.parametrize("absorption", [0.5, 0.2, 0.12])
    def test_schroeder_matches_sabine(self, absorption):
        spec = RoomSpec(6.0, 5.0, 3.0, absorption, 2.0)
        r = synth_rir(spec, np.random.default_rng(3))
        assert schroeder_rt60(r) == pytest.approx(sabine_rt60(spec), rel=0.10)

    def test_drr_follows_distance_law(self, rng):
        spec = RoomSpec(6.0, 5.0, 3.0, 0.2, 2.0)
        r = synth_rir(spec, rng)
        assert drr(r) == pytest.approx(drr_for_distance(spec), abs=1e-6)
        assert r.drr_true == pytest.approx(drr(r))

    def test_drr_at_critical_distance_is_zero(self):
        spec = RoomSpec(6.0, 5.0, 3.0, 0.2, 1.0)
        spec = replace(spec, distance=critical_distance(spec))
        assert drr_for_distance(spec) == pytest.approx(0.0, abs=1e-9)

    def test_unreachable_drr_is_raised_not_fatal(self, rng):
        # far source in a small, very dry room: the distance law asks for about -10 dB
        spec = RoomSpec(8.0, 6.0, 3.0, 0.644, 5.0)
        r = synth_rir(spec, rng)
        assert np.isfinite(r.drr_true)
        assert r.drr_true > drr_for_distance(spec) + 1.0

    def test_closer_source_has_higher_drr(self):
        near = synth_rir(RoomSpec(6.0, 5.0, 3.0, 0.2, 1.0), np.random.default_rng(0))
        far = synth_rir(RoomSpec(6.0, 5.0, 3.0, 0.2, 2.5), np.random.default_rng(0))
        assert drr(near) > drr(far)

    def test_seeded_determinism(self):
        spec = RoomSpec(6.0, 5.0, 3.0, 0.2, 2.0)
        a = synth_rir(spec, np.random.default_rng(11))
        b = synth_rir(spec, np.random.default_rng(11))
        assert np.array_equal(a.samples, b.samples)

    def test_reverberant_clip_decays_at_room_rt60(self):
        base = RoomSpec(10.0, 8.0, 3.0, 0.2, 2.0)
        spec = replace(base, absorption=0.2 * sabine_rt60(base) / 0.8)
        rng = np.random.default_rng(5)
        r = synth_rir(spec, rng)
        x = synth_source(rng).samples.copy()
        # hard offset at 0.5 s; the rest of the clip is free decay
        offset = SAMPLE_RATE // 2
        x[offset:] = 0.0
        y = convolve_rir(x, r).samples
        assert schroeder_rt60(y[offset:]) == pytest.approx(0.8, rel=0.2)


class TestDescriptor:
    def test_shape_and_nuisance(self, rng):
        v = scene_descriptor(RoomSpec(6.0, 5.0, 3.0, 0.2, 2.0), rng)
        assert v.shape == (DESCRIPTOR_DIM,)

    def test_noise_free_descriptor_is_exact(self, rng):
        spec = RoomSpec(6.0, 5.0, 3.0, 0.15, 2.0)
        v = scene_descriptor(spec, rng, sigma=0.0)
        np.testing.assert_allclose(v[:6], [0.6, 0.5, 0.6, 0.5, 0.4, spec.surface / 500.0])


class TestSources:
    def test_peak_and_gaps(self):
        for seed in range(5):
            w = synth_source(np.random.default_rng(seed))
            assert w.peak == pytest.approx(0.9)
            assert count_silent_gaps(w, 0.05) >= 2

    def test_deterministic(self):
        a = synth_source(np.random.default_rng(5))
        b = synth_source(np.random.default_rng(5))
        assert np.array_equal(a.samples, b.samples)

    def test_missing_source_folder(self, tmp_path):
        with pytest.raises(ConfigError):
            list_source_folder(str(tmp_path / "nope"))

    def test_empty_source_folder(self, tmp_path):
        with pytest.raises(ConfigError):
            list_source_folder(str(tmp_path))


class TestDataset:
    def test_split_counts(self, dataset_dir):
        counts = {s: len(load_split(dataset_dir, s)) for s in ("train", "val", "test", "paired")}
        assert counts == {"train": 8, "val": 4, "test": 6, "paired": 8}

    def test_rooms_disjoint_across_splits(self, dataset_dir):
        rooms = {s: {e.room_id for e in load_split(dataset_dir, s)} for s in ("train", "val", "test", "paired")}
        splits = list(rooms)
        for i, a in enumerate(splits):
            for b in splits[i + 1:]:
                assert not rooms[a] & rooms[b]

    def test_clips_per_room(self, dataset_dir):
        train = load_split(dataset_dir, "train")
        assert len({e.room_id for e in train}) == 4

    def test_stored_rt60_matches_rir(self, dataset_dir):
        for e in load_split(dataset_dir, "test"):
            assert schroeder_rt60(read_rir(dataset_dir, e)) == pytest.approx(e.rt60_true, rel=0.10)

    def test_direct_delay_recorded_in_manifest(self, dataset_dir):
        for e in load_split(dataset_dir, "test"):
            expected = int(round(max(e.distance, MIN_DISTANCE) / SPEED_OF_SOUND * SAMPLE_RATE))
            assert e.direct_delay == expected
            assert read_rir(dataset_dir, e).direct_delay == expected

    def test_rir_delay_comes_from_manifest_not_peak(self, tmp_path):
        h = np.zeros(2000)
        h[10] = 0.5
        h[300] = 0.9
        write_wav(str(tmp_path / "rirs" / "r.wav"), Waveform(h))
        e = ManifestEntry(sample_id="x", split="test", wav_path="x.wav", descriptor=[0.1] * DESCRIPTOR_DIM,
                          rt60_true=0.4, drr_true=0.0, room_id="r", rir_path=os.path.join("rirs", "r.wav"),
                          direct_delay=10)
        assert read_rir(str(tmp_path), e).direct_delay == 10
        assert read_rir(str(tmp_path), replace(e, direct_delay=-1)).direct_delay == 300

    def test_every_entry_has_files(self, dataset_dir):
        for e in load_split(dataset_dir, "paired"):
            assert e.paired
            for rel in (e.wav_path, e.source_path, e.rir_path):
                assert os.path.exists(os.path.join(dataset_dir, rel))
            assert len(read_wav(os.path.join(dataset_dir, e.wav_path))) == 40960

    def test_descriptor_report_written(self, dataset_dir):
        with open(os.path.join(dataset_dir, "descriptor_report.json"), encoding="utf-8") as f:
            report = json.load(f)
        assert report["n_train"] == 8 and report["n_test"] == 6

    def test_missing_split_is_config_error(self, tmp_path):
        with pytest.raises(ConfigError):
            load_split(str(tmp_path), "train")

    def test_shared_geometry_is_build_error(self):
        room = RoomSpec(5.0, 4.0, 3.0, 0.2, 1.0)
        task = RenderTask(split="train", index=0, room=room, seed=(1,), descriptor_noise=0.1, data_dir="")
        other = replace(task, split="test")
        with pytest.raises(BuildError):
            check_room_disjoint({"train": [task], "test": [other]})

    def test_learnability_on_empty_split(self):
        assert np.isnan(descriptor_learnability([], [])["mae"])
