"""
Historical replay buffer for discriminator training.

Entries keep the score the metric gave at push time; it is never recomputed.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Any, Deque, Dict, List, Optional

import numpy as np
import torch

from core.errors import ContractError


@dataclass(frozen=True)
class ReplayEntry:
    waveform: np.ndarray   # read-only
    score: float
    epoch: int

    @staticmethod
    def make(waveform, score: float, epoch: int) -> "ReplayEntry":
        arr = waveform.detach().cpu().numpy() if isinstance(waveform, torch.Tensor) else np.asarray(waveform)
        arr = np.array(arr, dtype=np.float32, copy=True)
        arr.setflags(write=False)
        return ReplayEntry(waveform=arr, score=float(score), epoch=int(epoch))


class ReplayBuffer:
    """FIFO with bounded capacity; uniform sampling without replacement."""

    def __init__(self, capacity: int = 2000):
        if capacity <= 0:
            raise ContractError("replay capacity must be positive")
        self.capacity = capacity
        self._items: Deque[ReplayEntry] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    def push(self, waveform, score: float, epoch: int) -> None:
        self._items.append(ReplayEntry.make(waveform, score, epoch))

    def push_batch(self, waveforms: torch.Tensor, scores: torch.Tensor, epoch: int) -> None:
        for w, s in zip(waveforms, scores):
            self.push(w, float(s), epoch)

    def sample(self, n: int, rng: np.random.Generator) -> List[ReplayEntry]:
        """Empty list when the buffer is empty."""
        if not self._items or n <= 0:
            return []
        idx = rng.choice(len(self._items), size=min(n, len(self._items)), replace=False)
        return [self._items[int(i)] for i in idx]

    @staticmethod
    def stack(entries: List[ReplayEntry], device=None, dtype=torch.float32):
        """-> (waveforms [n, T], scores [n]) or (None, None) for an empty sample."""
        if not entries:
            return None, None
        w = torch.as_tensor(np.stack([e.waveform for e in entries]), dtype=dtype, device=device)
        s = torch.tensor([e.score for e in entries], dtype=dtype, device=device)
        return w, s

    def state_dict(self) -> Dict[str, Any]:
        return {
            "capacity": self.capacity,
            "waveforms": [e.waveform for e in self._items],
            "scores": [e.score for e in self._items],
            "epochs": [e.epoch for e in self._items],
        }

    @staticmethod
    def from_state_dict(d: Optional[Dict[str, Any]]) -> "ReplayBuffer":
        if not d:
            return ReplayBuffer()
        buf = ReplayBuffer(int(d["capacity"]))
        for w, s, e in zip(d["waveforms"], d["scores"], d["epochs"]):
            buf.push(w, s, e)
        return buf


def replay_push(buffer: ReplayBuffer, waveform, score: float, epoch: int) -> None:
    buffer.push(waveform, score, epoch)


def replay_sample(buffer: ReplayBuffer, n: int, rng: np.random.Generator) -> List[ReplayEntry]:
    return buffer.sample(n, rng)
