from __future__ import annotations

import json
import logging
import os
from typing import Any, Dict, Iterable, List

from memory.schema import EpochRecord, ManifestEntry

logger = logging.getLogger(__name__)


def ensure_parent_dir(path: str) -> None:
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)


def append_record(path: str, record: Dict[str, Any]) -> None:
    """
    Append one JSON object as a line.
    """
    ensure_parent_dir(path)
    with open(path, "a", encoding="utf-8") as f:
        f.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")


def load_records(path: str) -> List[Dict[str, Any]]:
    if not os.path.exists(path):
        return []

    records: List[Dict[str, Any]] = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError:
                # skip bad lines rather than crashing
                logger.warning("skipping malformed line %d in %s", lineno, path)
    return records


def overwrite_records(path: str, records: Iterable[Dict[str, Any]]) -> None:
    ensure_parent_dir(path)
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n")


def manifest_path(data_dir: str, split: str) -> str:
    return os.path.join(data_dir, f"manifest_{split}.jsonl")


def save_manifest(path: str, entries: Iterable[ManifestEntry]) -> None:
    overwrite_records(path, (e.to_dict() for e in entries))


def load_manifest(path: str) -> List[ManifestEntry]:
    return [ManifestEntry.from_dict(d) for d in load_records(path)]


def append_epoch(path: str, rec: EpochRecord) -> None:
    append_record(path, rec.to_dict())


def load_epochs(path: str) -> List[EpochRecord]:
    return [EpochRecord.from_dict(d) for d in load_records(path)]
