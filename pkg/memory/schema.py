from __future__ import annotations

from dataclasses import dataclass, asdict, field
from typing import Any, Dict, List, Optional

DESCRIPTOR_DIM = 8


@dataclass
class ManifestEntry:
    """
    One rendered sample. Paths are relative to the data directory.
    `source_path` points at the dry source and is evaluation-only: training code
    must never open it.
    """
    sample_id: str
    split: str
    wav_path: str
    descriptor: List[float]
    rt60_true: float
    drr_true: float
    room_id: str
    rt60_design: float = 0.0   # Sabine value the RIR was built for
    distance: float = 0.0
    rir_path: str = ""
    source_path: Optional[str] = None
    paired: bool = False
    direct_delay: int = -1     # samples to the direct-path arrival; -1 if unknown

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @staticmethod
    def from_dict(d: Dict[str, Any]) -> "ManifestEntry":
        src = d.get("source_path")
        return ManifestEntry(
            sample_id=str(d.get("sample_id", "")),
            split=str(d.get("split", "")),
            wav_path=str(d.get("wav_path", "")),
            descriptor=[float(v) for v in d.get("descriptor", [])],
            rt60_true=float(d.get("rt60_true", 0.0)),
            drr_true=float(d.get("drr_true", 0.0)),
            room_id=str(d.get("room_id", "")),
            rt60_design=float(d.get("rt60_design", 0.0)),
            distance=float(d.get("distance", 0.0)),
            rir_path=str(d.get("rir_path", "")),
            source_path=None if src in (None, "") else str(src),
            paired=bool(d.get("paired", False)),
            direct_delay=int(d.get("direct_delay", -1)),
        )


@dataclass
class EpochRecord:
    """Per-epoch training log line."""
    stage: str
    epoch: int
    losses: Dict[str, float] = field(default_factory=dict)
    mean_metric: Optional[float] = None
    mean_gap: Optional[float] = None      # mean |D - M| on the validation probe
    buffer_size: int = 0
    copied_targets: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @staticmethod
    def from_dict(d: Dict[str, Any]) -> "EpochRecord":
        return EpochRecord(
            stage=str(d.get("stage", "")),
            epoch=int(d.get("epoch", 0)),
            losses={k: float(v) for k, v in (d.get("losses") or {}).items()},
            mean_metric=d.get("mean_metric"),
            mean_gap=d.get("mean_gap"),
            buffer_size=int(d.get("buffer_size", 0)),
            copied_targets=bool(d.get("copied_targets", False)),
        )
