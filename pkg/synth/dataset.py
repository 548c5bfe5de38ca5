"""
Renders the synthetic benchmark to disk.

Layout under data_dir:
    audio/{split}/{id}.wav      reverberant clip A_t (what training sees)
    anechoic/{split}/{id}.wav   dry source, evaluation / dereverberator pool only
    rirs/{split}/{id}.wav       peak-normalised RIR (ground truth for pairing)
    manifest_{split}.jsonl      one ManifestEntry per line
    descriptor_report.json      descriptor -> rt60 learnability
"""
from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.ensemble import GradientBoostingRegressor
from sklearn.metrics import mean_absolute_error
from tqdm import tqdm

from core.audio_io import write_wav
from core.config import SynthConfig
from core.dsp import Waveform, convolve_rir, peak_normalize, schroeder_rt60
from core.errors import BuildError, EstimationError
from memory.schema import ManifestEntry
from memory.store import manifest_path, save_manifest
from synth.rooms import RoomSpec, sample_room, scene_descriptor, synth_rir, with_distance
from synth.sources import list_source_folder, load_source, synth_source

logger = logging.getLogger(__name__)

SPLITS = ("train", "val", "test", "paired")


@dataclass
class RenderTask:
    split: str
    index: int
    room: RoomSpec
    seed: Tuple[int, ...]
    descriptor_noise: float
    data_dir: str
    source_paths: Optional[Sequence[str]] = None


def split_counts(cfg: SynthConfig) -> Dict[str, int]:
    return {"train": cfg.n_train, "val": cfg.n_val, "test": cfg.n_test, "paired": cfg.n_paired}


def render_sample(task: RenderTask) -> ManifestEntry:
    rng = np.random.default_rng(np.random.SeedSequence(task.seed))
    room = with_distance(task.room, rng)
    rir = synth_rir(room, rng)

    if task.source_paths:
        src = load_source(task.source_paths[int(rng.integers(len(task.source_paths)))], rng)
    else:
        src = synth_source(rng)
    reverberant = convolve_rir(src, rir)
    # same peak as the dry source, so never clips
    descriptor = scene_descriptor(room, rng, task.descriptor_noise)

    try:
        rt60_true = schroeder_rt60(rir)
    except EstimationError as e:
        logger.warning("schroeder failed on %s/%d (%s), using design rt60", task.split, task.index, e)
        rt60_true = rir.rt60_true

    sid = f"{task.split}_{task.index:06d}"
    wav_rel = os.path.join("audio", task.split, f"{sid}.wav")
    src_rel = os.path.join("anechoic", task.split, f"{sid}.wav")
    rir_rel = os.path.join("rirs", task.split, f"{sid}.wav")

    write_wav(os.path.join(task.data_dir, wav_rel), reverberant)
    write_wav(os.path.join(task.data_dir, src_rel), src)
    write_wav(os.path.join(task.data_dir, rir_rel), Waveform(peak_normalize(rir.samples)[0]))

    return ManifestEntry(
        sample_id=sid,
        split=task.split,
        wav_path=wav_rel,
        descriptor=[float(v) for v in descriptor],
        rt60_true=float(rt60_true),
        drr_true=float(rir.drr_true),
        room_id=room.room_id,
        rt60_design=float(rir.rt60_true),
        distance=float(room.distance),
        rir_path=rir_rel,
        source_path=src_rel,
        paired=task.split == "paired",
        direct_delay=int(rir.direct_delay),
    )


def plan_split(split: str, n: int, cfg: SynthConfig, seed_seq: np.random.SeedSequence, data_dir: str,
               source_paths: Optional[Sequence[str]]) -> List[RenderTask]:
    n_rooms = math.ceil(n / cfg.clips_per_room) if n else 0
    room_seq, sample_seq = seed_seq.spawn(2)
    room_rng = np.random.default_rng(room_seq)
    rooms = [sample_room(room_rng, cfg, room_id=f"{split}-room{r:05d}") for r in range(n_rooms)]
    sample_seeds = sample_seq.spawn(n)
    return [
        RenderTask(
            split=split,
            index=i,
            room=rooms[i // cfg.clips_per_room],
            seed=tuple(int(v) for v in sample_seeds[i].generate_state(4)),
            descriptor_noise=cfg.descriptor_noise,
            data_dir=data_dir,
            source_paths=source_paths,
        )
        for i in range(n)
    ]


def check_room_disjoint(plans: Dict[str, List[RenderTask]]) -> None:
    seen: Dict[Tuple[float, ...], str] = {}
    for split, tasks in plans.items():
        for geometry in {t.room.geometry for t in tasks}:
            other = seen.get(geometry)
            if other is not None and other != split:
                raise BuildError(f"room {geometry} appears in both {other} and {split}")
            seen[geometry] = split


def descriptor_learnability(train: List[ManifestEntry], test: List[ManifestEntry], seed: int = 0) -> Dict[str, float]:
    """Held-out MAE (s) of a gradient-boosting regressor from descriptor to rt60_true."""
    if not train or not test:
        return {"mae": float("nan"), "n_train": len(train), "n_test": len(test)}
    X = np.array([e.descriptor for e in train])
    y = np.array([e.rt60_true for e in train])
    reg = GradientBoostingRegressor(random_state=seed).fit(X, y)
    pred = reg.predict(np.array([e.descriptor for e in test]))
    mae = mean_absolute_error([e.rt60_true for e in test], pred)
    return {"mae": float(mae), "n_train": len(train), "n_test": len(test)}


def build_dataset(cfg: SynthConfig, data_dir: str) -> Dict[str, List[ManifestEntry]]:
    os.makedirs(data_dir, exist_ok=True)
    source_paths = list_source_folder(cfg.source_folder) if cfg.source_folder else None

    split_seqs = np.random.SeedSequence(cfg.seed).spawn(len(SPLITS))
    counts = split_counts(cfg)
    plans = {
        split: plan_split(split, counts[split], cfg, seq, data_dir, source_paths)
        for split, seq in zip(SPLITS, split_seqs)
    }
    check_room_disjoint(plans)

    manifests: Dict[str, List[ManifestEntry]] = {}
    for split, tasks in plans.items():
        desc = f"render {split}"
        if cfg.workers > 1 and tasks:
            with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
                entries = list(tqdm(pool.map(render_sample, tasks, chunksize=16), total=len(tasks), desc=desc))
        else:
            entries = [render_sample(t) for t in tqdm(tasks, desc=desc)]

        ids = [e.sample_id for e in entries]
        if len(set(ids)) != len(ids):
            raise BuildError(f"duplicate sample ids in {split}")
        save_manifest(manifest_path(data_dir, split), entries)
        manifests[split] = entries
        logger.info("%s: %d samples, %d rooms", split, len(entries), len({e.room_id for e in entries}))

    report = descriptor_learnability(manifests["train"], manifests["test"], seed=cfg.seed)
    report["config"] = asdict(cfg)
    with open(os.path.join(data_dir, "descriptor_report.json"), "w", encoding="utf-8") as f:
        json.dump(report, f, indent=2, sort_keys=True)
    logger.info("descriptor -> rt60 held-out MAE: %.3f s", report["mae"])
    return manifests
