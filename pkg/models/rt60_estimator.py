"""
Blind RT60 regressor: log-magnitude spectrogram of a 2.56 s clip -> seconds.
"""
from __future__ import annotations

import logging
from typing import Dict, Optional, Tuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from scipy import stats
from torch.utils.data import DataLoader, Dataset, random_split
from tqdm import tqdm

from core.config import EstimatorConfig
from core.dsp import CLIP_SAMPLES, DEFAULT_STFT, StftConfig, WaveLike, as_batch, magnitude_tensor
from core.errors import ContractError, TrainingError

logger = logging.getLogger(__name__)

ANECHOIC_RT60 = 0.05   # label used for dry clips from the paired pool
MIN_OUTPUT = 1e-3


def clip_batch(x: torch.Tensor, n: int = CLIP_SAMPLES) -> torch.Tensor:
    """Right-pad with zeros (or truncate) to n samples."""
    if x.shape[-1] >= n:
        return x[..., :n]
    return F.pad(x, (0, n - x.shape[-1]))


class Rt60Estimator(nn.Module):
    def __init__(self, stft: StftConfig = DEFAULT_STFT, width: int = 64):
        super().__init__()
        self.stft = stft
        chans = [1, 16, 32, 64, width]
        layers = []
        for cin, cout in zip(chans[:-1], chans[1:]):
            layers += [nn.Conv2d(cin, cout, kernel_size=3, stride=2, padding=1), nn.ReLU()]
        self.encoder = nn.Sequential(*layers)
        self.head = nn.Sequential(nn.Linear(width, 64), nn.ReLU(), nn.Linear(64, 1))
        self.register_buffer("is_trained", torch.tensor(False))

    def features(self, x: torch.Tensor) -> torch.Tensor:
        """[B, T] -> [B, 1, frames, bins]; RMS-normalised so a global gain does not matter."""
        x = clip_batch(x)
        rms = x.pow(2).mean(dim=-1, keepdim=True).sqrt()
        x = torch.where(rms > 0, x / rms.clamp_min(1e-12), x)
        return torch.log1p(magnitude_tensor(x, self.stft)).unsqueeze(1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.encoder(self.features(x))
        h = h.mean(dim=(-2, -1))
        return F.softplus(self.head(h).squeeze(-1)) + MIN_OUTPUT

    def check_trained(self) -> None:
        if not bool(self.is_trained):
            raise ContractError("RT60 estimator has not been trained")

    @torch.no_grad()
    def estimate_batch(self, x: torch.Tensor) -> torch.Tensor:
        self.check_trained()
        was_training = self.training
        self.eval()
        p = next(self.parameters())
        out = self(x.to(device=p.device, dtype=p.dtype))
        self.train(was_training)
        return out

    def estimate(self, w: WaveLike) -> float:
        x = as_batch(w)
        if not torch.any(x != 0):
            logger.warning("estimate_rt60 on silence: returning the estimator's silence response")
        return float(self.estimate_batch(x)[0])


def estimate_rt60(e: Rt60Estimator, w: WaveLike) -> float:
    return e.estimate(w)


def _unpack(batch) -> Tuple[torch.Tensor, torch.Tensor]:
    if isinstance(batch, dict):
        return batch["audio"], batch["rt60"]
    audio, rt60 = batch[0], batch[1]
    return audio, rt60


@torch.no_grad()
def evaluate_estimator(e: Rt60Estimator, loader: DataLoader) -> Dict[str, float]:
    preds, labels = [], []
    for batch in loader:
        audio, rt60 = _unpack(batch)
        preds.append(e.estimate_batch(audio).cpu())
        labels.append(rt60.float().cpu())
    p = torch.cat(preds).numpy()
    y = torch.cat(labels).numpy()
    rho = stats.spearmanr(p, y).correlation if len(y) > 2 else float("nan")
    return {"mae": float(np.mean(np.abs(p - y))), "spearman": float(rho), "n": int(len(y))}


def train_rt60_estimator(
    dataset: Dataset,
    cfg: Optional[EstimatorConfig] = None,
    device: Optional[torch.device] = None,
) -> Tuple[Rt60Estimator, Dict[str, float]]:
    """
    Items are dicts with 'audio' and 'rt60' or (audio, rt60) tuples.
    Holds out cfg.holdout of the data and reports MAE / Spearman on it.
    """
    cfg = cfg or EstimatorConfig()
    device = device or torch.device("cpu")
    n = len(dataset)
    if n < cfg.min_samples:
        raise TrainingError(f"RT60 estimator needs >= {cfg.min_samples} labelled clips, got {n}")

    labels = np.array([float(_unpack(dataset[i])[1]) for i in range(n)])
    if np.ptp(labels) < 1e-6:
        raise TrainingError("degenerate label distribution: every clip has the same RT60",
                            rt60=float(labels[0]))
    if labels.min() > 0.2 or labels.max() < 1.0:
        logger.warning("labels span only %.2f-%.2f s", labels.min(), labels.max())

    torch.manual_seed(cfg.seed)
    gen = torch.Generator().manual_seed(cfg.seed)
    n_hold = max(1, int(round(cfg.holdout * n)))
    train_ds, hold_ds = random_split(dataset, [n - n_hold, n_hold], generator=gen)
    train_loader = DataLoader(train_ds, batch_size=cfg.batch_size, shuffle=True, generator=gen)
    hold_loader = DataLoader(hold_ds, batch_size=cfg.batch_size)

    est = Rt60Estimator().to(device)
    opt = torch.optim.Adam(est.parameters(), lr=cfg.lr)
    for epoch in range(cfg.epochs):
        est.train()
        total, count = 0.0, 0
        for batch in tqdm(train_loader, desc=f"rt60 epoch {epoch + 1}/{cfg.epochs}", leave=False):
            audio, rt60 = _unpack(batch)
            pred = est(audio.to(device).float())
            loss = F.mse_loss(pred, rt60.to(device).float())
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += float(loss) * len(rt60)
            count += len(rt60)
        logger.info("rt60 estimator epoch %d: train mse %.4f", epoch + 1, total / max(count, 1))

    est.is_trained.fill_(True)
    est.eval()
    report = evaluate_estimator(est, hold_loader)
    logger.info("rt60 estimator held-out MAE %.3f s, spearman %.3f", report["mae"], report["spearman"])
    return est, report
