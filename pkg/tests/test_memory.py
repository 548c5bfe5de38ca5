from __future__ import annotations

import numpy as np
import pytest
import torch

from core.errors import CheckpointVersionError, ContractError, StagedDependencyError
from memory.checkpoint import FORMAT_VERSION, checkpoint_load, checkpoint_save, module_digest
from memory.replay import ReplayBuffer, replay_push, replay_sample
from memory.schema import EpochRecord, ManifestEntry
from memory.store import append_epoch, append_record, load_epochs, load_manifest, load_records, save_manifest


def entry(i: int, **kw) -> ManifestEntry:
    return ManifestEntry(
        sample_id=f"train_{i:06d}", split="train", wav_path=f"audio/train/train_{i:06d}.wav",
        descriptor=[0.1] * 8, rt60_true=0.5, drr_true=1.0, room_id="train-room00000", **kw,
    )


class TestStore:
    def test_records_roundtrip_and_skip_bad_lines(self, tmp_path):
        path = str(tmp_path / "log" / "records.jsonl")
        append_record(path, {"a": 1})
        with open(path, "a", encoding="utf-8") as f:
            f.write("{not json\n\n")
        append_record(path, {"b": 2})
        assert load_records(path) == [{"a": 1}, {"b": 2}]

    def test_missing_file_is_empty(self, tmp_path):
        assert load_records(str(tmp_path / "none.jsonl")) == []

    def test_manifest_keeps_missing_source_as_none(self, tmp_path):
        path = str(tmp_path / "manifest_train.jsonl")
        save_manifest(path, [entry(0), entry(1, source_path="anechoic/train/train_000001.wav")])
        loaded = load_manifest(path)
        assert loaded[0].source_path is None
        assert loaded[1].source_path.endswith(".wav")
        assert loaded[0] == entry(0)

    def test_manifest_keeps_direct_delay(self, tmp_path):
        path = str(tmp_path / "manifest_train.jsonl")
        save_manifest(path, [entry(0, direct_delay=93), entry(1)])
        loaded = load_manifest(path)
        assert [e.direct_delay for e in loaded] == [93, -1]
        legacy = entry(2).to_dict()
        del legacy["direct_delay"]
        assert ManifestEntry.from_dict(legacy).direct_delay == -1

    def test_epoch_records(self, tmp_path):
        path = str(tmp_path / "metrics.jsonl")
        append_epoch(path, EpochRecord(stage="1", epoch=1, losses={"d": 0.5}, mean_metric=0.4))
        append_epoch(path, EpochRecord(stage="1", epoch=2, losses={"d": 0.3}, copied_targets=True))
        recs = load_epochs(path)
        assert [r.epoch for r in recs] == [1, 2]
        assert recs[0].losses == {"d": 0.5} and recs[1].copied_targets


class TestReplay:
    def test_fifo_eviction(self):
        buf = ReplayBuffer(capacity=3)
        for i in range(5):
            buf.push(np.full(4, float(i)), score=i / 10, epoch=i)
        assert len(buf) == 3
        assert [e.epoch for e in buf] == [2, 3, 4]

    def test_entries_are_read_only_copies(self):
        buf = ReplayBuffer(capacity=2)
        w = torch.ones(4)
        buf.push(w, 0.7, 1)
        w.fill_(5.0)
        stored = next(iter(buf))
        assert np.all(stored.waveform == 1.0)
        with pytest.raises(ValueError):
            stored.waveform[0] = 2.0

    def test_scores_never_change(self):
        buf = ReplayBuffer(capacity=4)
        buf.push_batch(torch.zeros(2, 8), torch.tensor([0.25, 0.75]), epoch=3)
        before = [e.score for e in buf]
        replay_sample(buf, 2, np.random.default_rng(0))
        assert [e.score for e in buf] == before == [0.25, 0.75]

    def test_empty_sample(self):
        buf = ReplayBuffer()
        assert replay_sample(buf, 4, np.random.default_rng(0)) == []
        assert ReplayBuffer.stack([]) == (None, None)

    def test_sample_without_replacement(self):
        buf = ReplayBuffer(capacity=10)
        for i in range(10):
            replay_push(buf, np.full(2, float(i)), 0.5, 0)
        got = replay_sample(buf, 6, np.random.default_rng(1))
        values = [float(e.waveform[0]) for e in got]
        assert len(set(values)) == 6

    def test_state_dict_roundtrip(self):
        buf = ReplayBuffer(capacity=5)
        for i in range(3):
            buf.push(np.full(4, float(i)), 0.1 * i, i)
        back = ReplayBuffer.from_state_dict(buf.state_dict())
        assert back.capacity == 5
        assert [(e.score, e.epoch) for e in back] == [(e.score, e.epoch) for e in buf]

    def test_zero_capacity(self):
        with pytest.raises(ContractError):
            ReplayBuffer(capacity=0)


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        path = str(tmp_path / "ck" / "latest.pt")
        checkpoint_save({"stage": "1", "completed": ["0", "1"], "epoch": 2}, path)
        payload = checkpoint_load(path, require=["0"])
        assert payload["format_version"] == FORMAT_VERSION and payload["epoch"] == 2

    def test_wrong_version(self, tmp_path):
        path = str(tmp_path / "old.pt")
        torch.save({"format_version": FORMAT_VERSION + 1, "completed": []}, path)
        with pytest.raises(CheckpointVersionError):
            checkpoint_load(path)

    def test_missing_stage(self, tmp_path):
        path = str(tmp_path / "s0.pt")
        checkpoint_save({"stage": "0", "completed": ["0"]}, path)
        with pytest.raises(StagedDependencyError):
            checkpoint_load(path, require=["0", "1"])

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            checkpoint_load(str(tmp_path / "nope.pt"))

    def test_digest_tracks_parameters(self):
        torch.manual_seed(0)
        m = torch.nn.Linear(3, 2)
        d0 = module_digest(m)
        assert d0 == module_digest(m)
        with torch.no_grad():
            m.weight[0, 0] += 1e-3
        assert module_digest(m) != d0
        assert module_digest(None) == ""
