"""
Checkpoint container (torch.save of a plain dict):

    format_version   int, must equal FORMAT_VERSION
    stage            tag of the stage that wrote it ("0", "1", "2", "3", "baseline")
    completed        stages finished so far
    epoch            epochs finished inside `stage`
    models           {name: state_dict}
    layouts          {name: constructor summary} (block layout, conditioner width)
    optimizers       {name: optimizer state_dict}
    replay           ReplayBuffer.state_dict()
    rng              {"torch": cpu rng state}
    config           AppConfig.to_dict()
    history          list of per-epoch records
    extra            stage-local counters
"""
from __future__ import annotations

import hashlib
import logging
import os
from typing import Any, Dict, Iterable, Optional

import torch

from core.errors import CheckpointVersionError, StagedDependencyError
from memory.store import ensure_parent_dir

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


def checkpoint_save(payload: Dict[str, Any], path: str) -> None:
    payload = dict(payload)
    payload["format_version"] = FORMAT_VERSION
    ensure_parent_dir(path)
    tmp = path + ".tmp"
    torch.save(payload, tmp)
    os.replace(tmp, path)
    logger.info("checkpoint written: %s (stage %s, epoch %s)", path, payload.get("stage"), payload.get("epoch"))


def checkpoint_load(path: str, require: Iterable[str] = ()) -> Dict[str, Any]:
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    payload = torch.load(path, map_location="cpu", weights_only=False)
    version = payload.get("format_version") if isinstance(payload, dict) else None
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"checkpoint format {version!r} is not supported (expected {FORMAT_VERSION})", path=path
        )
    missing = [s for s in require if s not in payload.get("completed", [])]
    if missing:
        raise StagedDependencyError(
            f"checkpoint {path} lacks completed stage(s) {', '.join(missing)}",
            completed=payload.get("completed", []),
        )
    return payload


def module_digest(module: Optional[torch.nn.Module]) -> str:
    """sha256 over every parameter and buffer, in state_dict order."""
    if module is None:
        return ""
    h = hashlib.sha256()
    for name, t in module.state_dict().items():
        h.update(name.encode("utf-8"))
        h.update(t.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()
