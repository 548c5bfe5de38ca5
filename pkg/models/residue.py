"""
Acoustic-residue metric and the combined training metric.

    residue = sigmoid((|RT(R_b(A)) - RT(A_t)| - |RT(R_v(A, V)) - RT(A_t)|) / max(floor, RT(A_t)))
    combined = alpha * srmr_norm(A) + (1 - alpha) * residue

High residue means the blind reverberator cannot recover the target room from
A as well as the visual one can, i.e. little room information is left in A.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
import torch
from scipy.special import expit

from core.config import DebiasConfig
from core.dsp import WaveLike, as_batch
from core.errors import ContractError, MetricError
from core.metrics import SRMR_MAX, normalize_srmr, srmr
from models.reverberator import ReverbModel
from models.rt60_estimator import Rt60Estimator

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


def residue_score(rt_blind: ArrayLike, rt_visual: ArrayLike, rt_target: ArrayLike, floor: float = 0.1) -> ArrayLike:
    gap = np.abs(np.asarray(rt_blind) - rt_target) - np.abs(np.asarray(rt_visual) - rt_target)
    return expit(gap / np.maximum(floor, rt_target))


def residue_score_tensor(rt_blind: torch.Tensor, rt_visual: torch.Tensor, rt_target: torch.Tensor,
                         floor: float = 0.1) -> torch.Tensor:
    gap = (rt_blind - rt_target).abs() - (rt_visual - rt_target).abs()
    return torch.sigmoid(gap / rt_target.clamp_min(floor))


def srmr_norm_batch(a: torch.Tensor, s_max: float = SRMR_MAX) -> torch.Tensor:
    """Per-row srmr_norm; silent rows score 0."""
    out = []
    for row in a.detach().double().cpu().numpy():
        try:
            out.append(normalize_srmr(srmr(row), s_max))
        except MetricError:
            out.append(0.0)
    return torch.tensor(out, dtype=a.dtype, device=a.device)


@dataclass
class MetricNetworks:
    """Frozen networks the metric reads. Reverberators may be None when alpha == 1."""
    estimator: Rt60Estimator
    r_visual: Optional[ReverbModel] = None
    r_blind: Optional[ReverbModel] = None
    rt60_floor: float = 0.1
    s_max: float = SRMR_MAX

    def check(self, need_reverberators: bool) -> None:
        self.estimator.check_trained()
        if not need_reverberators:
            return
        for name, m in (("visual", self.r_visual), ("blind", self.r_blind)):
            if m is None or not bool(m.is_trained):
                raise ContractError(f"{name} reverberator is untrained; the residue metric needs stage 2 first")


@torch.no_grad()
def residue_metric_batch(a: torch.Tensor, v: torch.Tensor, a_t: torch.Tensor, nets: MetricNetworks) -> torch.Tensor:
    nets.check(need_reverberators=True)
    p = next(nets.r_visual.parameters())
    a, v = a.to(p.device, p.dtype), v.to(p.device, p.dtype)
    modes = [(m, m.training) for m in (nets.r_visual, nets.r_blind)]
    for m, _ in modes:
        m.eval()
    rt_visual = nets.estimator.estimate_batch(nets.r_visual(a, v))
    rt_blind = nets.estimator.estimate_batch(nets.r_blind(a))
    for m, was in modes:
        m.train(was)
    rt_target = nets.estimator.estimate_batch(a_t)
    score = residue_score_tensor(rt_blind, rt_visual, rt_target.to(rt_blind.device), nets.rt60_floor)
    return score.to(a.dtype)


def residue_metric(a: WaveLike, v, a_t: WaveLike, r_visual: ReverbModel, r_blind: ReverbModel,
                   rt: Rt60Estimator, cfg: Optional[DebiasConfig] = None) -> float:
    cfg = cfg or DebiasConfig()
    nets = MetricNetworks(rt, r_visual, r_blind, cfg.rt60_floor, cfg.srmr_max)
    v = torch.as_tensor(np.asarray(v), dtype=torch.float32).reshape(1, -1)
    return float(residue_metric_batch(as_batch(a), v, as_batch(a_t), nets)[0])


class TrainingMetric:
    """
    alpha * srmr_norm + (1 - alpha) * residue, evaluated without gradients.
    alpha == 1 never touches the reverberators; alpha == 0 never computes srmr.
    `calls` counts invocations.
    """

    def __init__(self, nets: MetricNetworks, alpha: float):
        if not 0.0 <= alpha <= 1.0:
            raise ContractError(f"alpha must lie in [0, 1], got {alpha}")
        self.nets = nets
        self.alpha = float(alpha)
        self.calls = 0

    def __call__(self, a: torch.Tensor, v: Optional[torch.Tensor], a_t: torch.Tensor) -> torch.Tensor:
        self.calls += 1
        a = a.detach()
        if self.alpha == 1.0:
            return srmr_norm_batch(a, self.nets.s_max)
        residue = residue_metric_batch(a, v, a_t, self.nets).to(a.device)
        if self.alpha == 0.0:
            return residue
        return self.alpha * srmr_norm_batch(a, self.nets.s_max) + (1.0 - self.alpha) * residue


def combined_metric(a: WaveLike, v, a_t: WaveLike, r_visual: Optional[ReverbModel], r_blind: Optional[ReverbModel],
                    rt: Rt60Estimator, cfg: Optional[DebiasConfig] = None, alpha: Optional[float] = None) -> float:
    cfg = cfg or DebiasConfig()
    alpha = cfg.alpha if alpha is None else alpha
    nets = MetricNetworks(rt, r_visual, r_blind, cfg.rt60_floor, cfg.srmr_max)
    v_t = None if v is None else torch.as_tensor(np.asarray(v), dtype=torch.float32).reshape(1, -1)
    return float(TrainingMetric(nets, alpha)(as_batch(a), v_t, as_batch(a_t))[0])


def combine_scores(srmr_norm_value: ArrayLike, residue_value: ArrayLike, alpha: float) -> ArrayLike:
    return alpha * np.asarray(srmr_norm_value) + (1.0 - alpha) * np.asarray(residue_value)
