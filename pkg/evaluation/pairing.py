from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from core.errors import ConfigError, ContractError
from memory.schema import ManifestEntry
from synth.data_loader import load_split, unique_rooms

logger = logging.getLogger(__name__)

MODES = ("seen", "unseen", "cross")


@dataclass
class EvalPair:
    pair_id: str
    source: ManifestEntry
    target: ManifestEntry
    source_anechoic: bool

    @property
    def has_ground_truth(self) -> bool:
        return bool(self.source.source_path) and bool(self.target.rir_path)


def filter_pool(entries: Sequence[ManifestEntry], exclude_room: Optional[str] = None) -> List[ManifestEntry]:
    return [e for e in entries if e.room_id != exclude_room]


def make_pairs(mode: str, data_dir: str, rng: np.random.Generator, max_pairs: Optional[int] = None) -> List[EvalPair]:
    """
    unseen  test audio  x  test room (different from the source's room)
    seen    test audio  x  train room
    cross   test anechoic source  x  test room (different room)
    """
    if mode not in MODES:
        raise ConfigError(f"unknown evaluation mode: {mode} ({', '.join(MODES)})")
    test = load_split(data_dir, "test")
    target_pool = load_split(data_dir, "train") if mode == "seen" else test

    sources = list(test)
    if max_pairs is not None:
        sources = sources[:max_pairs]

    pairs: List[EvalPair] = []
    for s in sources:
        pool = filter_pool(target_pool, exclude_room=s.room_id)
        if not pool:
            raise ConfigError(f"no target room available for {s.sample_id} in mode {mode}")
        t = pool[int(rng.integers(len(pool)))]
        pairs.append(EvalPair(pair_id=f"{mode}_{s.sample_id}", source=s, target=t, source_anechoic=mode == "cross"))

    if mode in ("unseen", "cross"):
        audit_unseen(pairs, load_split(data_dir, "train"))
    logger.info("%s evaluation: %d pairs over %d target rooms", mode, len(pairs),
                len(unique_rooms([p.target for p in pairs])))
    return pairs


def audit_unseen(pairs: Sequence[EvalPair], train: Sequence[ManifestEntry]) -> Dict[str, int]:
    """No pair may touch a training room."""
    train_rooms = set(unique_rooms(train))
    touched = {p.target.room_id for p in pairs} | {p.source.room_id for p in pairs}
    leaked = sorted(touched & train_rooms)
    if leaked:
        raise ContractError(f"unseen evaluation touches training rooms: {', '.join(leaked[:5])}", n=len(leaked))
    return {"rooms": len(touched), "train_rooms": len(train_rooms)}
