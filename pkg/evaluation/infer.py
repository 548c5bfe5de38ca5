"""
Test-time routing:

    anechoic source     R_v(A_s, V_t)
    reverberant source  R_v(G(derev(A_s)), V_t)

Variants swap the last step: `blind` uses R_b, `input` returns the prepared
input unchanged, `baseline` uses the augmentation-trained reverberator on
derev(A_s) (it never saw G).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import torch

from core.dsp import Waveform, WaveLike, as_batch
from core.errors import ConfigError, StagedDependencyError
from models.debiaser import Generator
from models.reverberator import ReverbModel
from models.rt60_estimator import Rt60Estimator

logger = logging.getLogger(__name__)

VARIANTS = ("full", "blind", "input", "baseline")


@dataclass
class System:
    estimator: Rt60Estimator
    dereverb: ReverbModel
    generator: Generator
    r_visual: ReverbModel
    r_blind: Optional[ReverbModel] = None
    baseline: Optional[ReverbModel] = None
    stage: str = ""

    @classmethod
    def from_trainer(cls, trainer) -> "System":
        need = ("estimator", "dereverb", "generator", "r_visual")
        missing = [n for n in need if not trainer.has(n)]
        if missing:
            raise StagedDependencyError(f"run lacks trained model(s): {', '.join(missing)}",
                                        completed=trainer.state.completed)
        models = trainer.state.models
        sys = cls(
            estimator=models["estimator"],
            dereverb=models["dereverb"],
            generator=models["generator"],
            r_visual=models["r_visual"],
            r_blind=models.get("r_blind"),
            baseline=models.get("baseline"),
            stage=",".join(trainer.state.completed),
        )
        sys.eval()
        return sys

    def eval(self) -> None:
        for m in (self.estimator, self.dereverb, self.generator, self.r_visual, self.r_blind, self.baseline):
            if m is not None:
                m.eval()

    def check(self, variant: str) -> None:
        if variant not in VARIANTS:
            raise ConfigError(f"unknown variant: {variant} ({', '.join(VARIANTS)})")
        self.estimator.check_trained()
        needed = {"full": [self.r_visual], "blind": [self.r_blind], "input": [], "baseline": [self.baseline]}[variant]
        for m in needed + [self.dereverb, self.generator]:
            if m is None or not bool(m.is_trained):
                raise StagedDependencyError(f"variant '{variant}' needs components that are not trained")

    @property
    def device(self) -> torch.device:
        return next(self.r_visual.parameters()).device


@torch.no_grad()
def prepare(system: System, audio: torch.Tensor, anechoic: bool) -> torch.Tensor:
    if anechoic:
        return audio
    return system.generator(system.dereverb(audio))


@torch.no_grad()
def infer_batch(system: System, audio: torch.Tensor, cond: torch.Tensor, anechoic: bool,
                variant: str = "full") -> torch.Tensor:
    system.check(variant)
    audio, cond = audio.to(system.device), cond.to(system.device)
    if variant == "baseline":
        x = audio if anechoic else system.dereverb(audio)
        return system.baseline(x, cond)
    x = prepare(system, audio, anechoic)
    if variant == "input":
        return x
    if variant == "blind":
        return system.r_blind(x)
    return system.r_visual(x, cond)


def infer(a_s: WaveLike, v_t: Sequence[float], system: System, anechoic: bool = False,
          variant: str = "full") -> Waveform:
    cond = torch.as_tensor(np.asarray(v_t), dtype=torch.float32).reshape(1, -1)
    y = infer_batch(system, as_batch(a_s), cond, anechoic, variant)[0]
    return Waveform(samples=y.double().cpu().numpy())
