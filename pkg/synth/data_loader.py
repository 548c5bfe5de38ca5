from __future__ import annotations

import logging
import os
from typing import Dict, List, Optional, Sequence

import numpy as np
import torch
from torch.utils.data import Dataset

from core.audio_io import read_wav
from core.dsp import CLIP_SAMPLES, Rir, fit_length
from core.errors import ConfigError
from memory.schema import DESCRIPTOR_DIM, ManifestEntry
from memory.store import load_manifest, manifest_path

logger = logging.getLogger(__name__)


def load_split(data_dir: str, split: str) -> List[ManifestEntry]:
    path = manifest_path(data_dir, split)
    if not os.path.exists(path):
        raise ConfigError(f"manifest for split '{split}' not found: {path} (run synth-data first)")

    entries: List[ManifestEntry] = []
    for e in load_manifest(path):
        # keep only valid records
        if e.sample_id and e.wav_path and len(e.descriptor) == DESCRIPTOR_DIM and e.rt60_true > 0:
            entries.append(e)
        else:
            logger.warning("dropping invalid manifest entry %r in %s", e.sample_id, path)
    return entries


def unique_rooms(entries: Sequence[ManifestEntry]) -> List[str]:
    return sorted({e.room_id for e in entries})


def filter_by_room(entries: Sequence[ManifestEntry], room_id: str) -> List[ManifestEntry]:
    return [e for e in entries if e.room_id == room_id]


def find_entry(entries: Sequence[ManifestEntry], key: str) -> Optional[ManifestEntry]:
    """Lookup by sample id, or first sample of a room id."""
    for e in entries:
        if e.sample_id == key:
            return e
    rooms = filter_by_room(entries, key)
    return rooms[0] if rooms else None


def read_clip(data_dir: str, rel_path: str) -> np.ndarray:
    return fit_length(read_wav(os.path.join(data_dir, rel_path)).samples, CLIP_SAMPLES)


def read_rir(data_dir: str, e: ManifestEntry) -> Rir:
    """Direct delay comes from the manifest; older manifests fall back to the peak sample."""
    w = read_wav(os.path.join(data_dir, e.rir_path))
    delay = e.direct_delay if e.direct_delay >= 0 else int(np.argmax(np.abs(w.samples)))
    return Rir(samples=w.samples, rt60_true=e.rt60_true, drr_true=e.drr_true, direct_delay=delay)


class ReverbClipDataset(Dataset):
    """
    Reverberant clips with their descriptors. Only `wav_path` is ever opened
    unless `with_source` is set (dereverberator pool / evaluation).
    """

    def __init__(self, entries: Sequence[ManifestEntry], data_dir: str, with_source: bool = False):
        self.entries = list(entries)
        self.data_dir = data_dir
        self.with_source = with_source
        if with_source and any(e.source_path is None for e in self.entries):
            raise ConfigError("with_source requested but some entries have no source_path")

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, i: int):
        e = self.entries[i]
        audio = torch.as_tensor(read_clip(self.data_dir, e.wav_path), dtype=torch.float32)
        desc = torch.as_tensor(e.descriptor, dtype=torch.float32)
        item = {"index": i, "audio": audio, "descriptor": desc, "rt60": torch.tensor(e.rt60_true)}
        if self.with_source:
            item["source"] = torch.as_tensor(read_clip(self.data_dir, e.source_path), dtype=torch.float32)
        return item


class SourceClipDataset(Dataset):
    """Dry sources labelled with a fixed RT60; same item keys as ReverbClipDataset."""

    def __init__(self, entries: Sequence[ManifestEntry], data_dir: str, rt60: float):
        self.entries = [e for e in entries if e.source_path]
        self.data_dir = data_dir
        self.rt60 = float(rt60)

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, i: int):
        e = self.entries[i]
        return {
            "index": i,
            "audio": torch.as_tensor(read_clip(self.data_dir, e.source_path), dtype=torch.float32),
            "descriptor": torch.as_tensor(e.descriptor, dtype=torch.float32),
            "rt60": torch.tensor(self.rt60),
        }


def draw_epoch_indices(n: int, samples_per_epoch: int, rng: np.random.Generator) -> np.ndarray:
    """`samples_per_epoch` indices drawn at random (without replacement while possible)."""
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    if samples_per_epoch <= n:
        return rng.choice(n, size=samples_per_epoch, replace=False)
    reps = [rng.permutation(n) for _ in range(samples_per_epoch // n)]
    reps.append(rng.choice(n, size=samples_per_epoch % n, replace=False))
    return np.concatenate(reps)


def batches(indices: np.ndarray, batch_size: int) -> List[np.ndarray]:
    return [indices[i:i + batch_size] for i in range(0, len(indices), batch_size)]


def collate(ds: ReverbClipDataset, idx: Sequence[int]) -> Dict[str, torch.Tensor]:
    items = [ds[int(i)] for i in idx]
    out = {
        "index": torch.tensor([it["index"] for it in items]),
        "audio": torch.stack([it["audio"] for it in items]),
        "descriptor": torch.stack([it["descriptor"] for it in items]),
        "rt60": torch.stack([it["rt60"] for it in items]).float(),
    }
    if ds.with_source:
        out["source"] = torch.stack([it["source"] for it in items])
    return out
