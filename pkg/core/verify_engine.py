from __future__ import annotations

import logging
from typing import Optional, Sequence

from core.config import AppConfig
from core.dsp import DEFAULT_STFT
from core.errors import ConfigError
from core.verify_report import VerifyReport
from core.verifiers import ALL_VERIFIERS, GROUPS

logger = logging.getLogger(__name__)


def structural_checks(cfg: Optional[AppConfig] = None) -> VerifyReport:
    cfg = cfg or AppConfig()
    rep = VerifyReport(ok=True, kind="structural", summary="Configuration checks")
    try:
        DEFAULT_STFT.validate()
        rep.add("structure.stft_cola", True, f"{DEFAULT_STFT.window} {DEFAULT_STFT.fft_size}/{DEFAULT_STFT.hop} is COLA")
    except ConfigError as e:
        rep.add("structure.stft_cola", False, e.message)
    rep.add("structure.stft_bins", DEFAULT_STFT.n_bins == 257, f"{DEFAULT_STFT.n_bins} frequency bins")
    rep.add("structure.alpha", 0.0 <= cfg.debias.alpha <= 1.0, f"alpha = {cfg.debias.alpha}")
    rep.add("structure.rt60_floor", cfg.debias.rt60_floor > 0, f"rt60 floor = {cfg.debias.rt60_floor}")
    edges = list(cfg.eval.strata)
    rep.add("structure.strata_sorted", edges == sorted(edges), f"strata edges {edges}")
    return rep


def verify(groups: Optional[Sequence[str]] = None, cfg: Optional[AppConfig] = None) -> VerifyReport:
    groups = list(groups or ["all"])
    unknown = [g for g in groups if g != "all" and g not in GROUPS]
    if unknown:
        raise ConfigError(f"unknown verify group(s): {', '.join(unknown)} ({', '.join(GROUPS)})")

    rep = VerifyReport(ok=True, kind="mixed", summary="Oracle verification")
    rep.extend(structural_checks(cfg))
    for v in ALL_VERIFIERS:
        if not any(v.can_handle(g) for g in groups):
            continue
        logger.info("running %s checks", v.name)
        try:
            rep.extend(v.verify())
        except Exception as e:  # a crashing group is a failed group
            rep.add(f"{v.name}.crashed", False, f"{type(e).__name__}: {e}")
    rep.ok = all(item.ok for item in rep.items)
    return rep
