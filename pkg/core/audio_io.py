from __future__ import annotations

import contextlib
import os
from typing import Callable, Iterator, List

import numpy as np
import soundfile as sf

from core.dsp import SAMPLE_RATE, Waveform
from core.errors import AudioFormatError

# Observers called with the path of every WAV opened for reading.
_READ_HOOKS: List[Callable[[str], None]] = []


def add_read_hook(fn: Callable[[str], None]) -> None:
    _READ_HOOKS.append(fn)


def remove_read_hook(fn: Callable[[str], None]) -> None:
    if fn in _READ_HOOKS:
        _READ_HOOKS.remove(fn)


@contextlib.contextmanager
def record_reads() -> Iterator[List[str]]:
    """
    Collects every path read through `read_wav` while the context is open.
    """
    seen: List[str] = []
    hook = seen.append
    add_read_hook(hook)
    try:
        yield seen
    finally:
        remove_read_hook(hook)


def read_wav(path: str, sample_rate: int = SAMPLE_RATE) -> Waveform:
    for hook in list(_READ_HOOKS):
        hook(os.path.abspath(path))
    if not os.path.exists(path):
        raise FileNotFoundError(path)

    data, sr = sf.read(path, dtype="float64", always_2d=False)
    if data.ndim != 1:
        raise AudioFormatError(f"expected mono audio, got {data.shape[1]} channels", path=path)
    if sr != sample_rate:
        raise AudioFormatError(f"expected {sample_rate} Hz, got {sr} Hz", path=path)
    return Waveform(samples=data, sample_rate=sr)


def write_wav(path: str, w: Waveform) -> None:
    """
    PCM 16-bit signed, mono. Samples are clipped to [-1, 1] by the encoder contract.
    """
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    samples = np.clip(np.asarray(w.samples, dtype=np.float64), -1.0, 1.0)
    sf.write(path, samples, w.sample_rate, subtype="PCM_16")
