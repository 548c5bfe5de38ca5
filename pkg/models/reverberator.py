"""
Dilated 1-D convolution stacks over the waveform.

ReverbModel(mode="reverb") is used for the visual reverberator (with a gated
fusion path for the conditioner) and the blind reverberator (no fusion path).
Output = early path (decoded skip features) + late tail (input convolved with a
seeded noise buffer under a learned exponential decay).

ReverbModel(mode="gate") is the dereverberator: the decoded features become a
per-sample gain in (0, 1) applied to the input.
"""
from __future__ import annotations

import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from torch.utils.data import DataLoader, Dataset
from tqdm import tqdm

from core.config import DereverbConfig, ReverbConfig
from core.dsp import SAMPLE_RATE, Waveform, WaveLike, as_batch
from core.errors import ContractError, ShapeError, TrainingError
from core.metrics import log_stft_error_tensor

logger = logging.getLogger(__name__)

MIN_TAIL_RT60 = 0.1
TAIL_SEED = 1234
GATE_BIAS_INIT = 4.0


class Sine(nn.Module):
    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.sin(x)


class GatedFusion(nn.Module):
    """Conditioner -> per-block channel gate (sigmoid) and bias, plus a shared embedding."""

    def __init__(self, cond_dim: int, hidden: int, channels: int, n_blocks: int):
        super().__init__()
        self.channels = channels
        self.n_blocks = n_blocks
        self.embed = nn.Sequential(nn.Linear(cond_dim, hidden), nn.LeakyReLU(0.2), nn.Linear(hidden, hidden), nn.LeakyReLU(0.2))
        self.proj = nn.Linear(hidden, 2 * channels * n_blocks)

    def forward(self, cond: torch.Tensor) -> Tuple[torch.Tensor, List[Tuple[torch.Tensor, torch.Tensor]]]:
        h = self.embed(cond)
        gb = self.proj(h).view(cond.shape[0], self.n_blocks, 2, self.channels, 1)
        mods = [(torch.sigmoid(gb[:, b, 0]) * 2.0, gb[:, b, 1]) for b in range(self.n_blocks)]
        return h, mods


class ResidualLayer(nn.Module):
    def __init__(self, channels: int, kernel_size: int, dilation: int):
        super().__init__()
        self.conv = nn.Conv1d(channels, channels, kernel_size, dilation=dilation,
                              padding=dilation * (kernel_size - 1) // 2)
        self.act = Sine()
        self.res = nn.Conv1d(channels, channels, 1)
        self.skip = nn.Conv1d(channels, channels, 1)

    def forward(self, x: torch.Tensor, mod: Optional[Tuple[torch.Tensor, torch.Tensor]] = None):
        h = self.act(self.conv(x))
        if mod is not None:
            gate, bias = mod
            h = h * gate + bias
        return x + self.res(h), self.skip(h)


class ReverbModel(nn.Module):
    def __init__(
        self,
        channels: int = 32,
        blocks: int = 2,
        dilations: Sequence[int] = (1, 2, 4, 8),
        kernel_size: int = 3,
        cond_dim: int = 0,
        fusion_hidden: int = 64,
        tail_seconds: float = 1.5,
        mode: str = "reverb",
        sample_rate: int = SAMPLE_RATE,
    ):
        super().__init__()
        if mode not in ("reverb", "gate"):
            raise ContractError(f"unknown reverberator mode: {mode}")
        if mode == "gate" and cond_dim:
            raise ContractError("the dereverberator takes no conditioner")
        self.mode = mode
        self.cond_dim = int(cond_dim)
        self.blocks = blocks
        self.dilations = tuple(dilations)

        self.inp = nn.Conv1d(1, channels, 1)
        self.layers = nn.ModuleList(
            ResidualLayer(channels, kernel_size, d) for _ in range(blocks) for d in self.dilations
        )
        self.fusion = GatedFusion(cond_dim, fusion_hidden, channels, blocks) if cond_dim else None
        self.decoder = nn.Sequential(nn.Conv1d(channels, channels, 1), Sine(), nn.Conv1d(channels, 1, 1))

        last = self.decoder[-1]
        nn.init.zeros_(last.weight)
        if mode == "gate":
            nn.init.constant_(last.bias, GATE_BIAS_INIT)
        else:
            nn.init.zeros_(last.bias)
            head_in = channels + (fusion_hidden if cond_dim else 0)
            self.decay_head = nn.Linear(head_in, 1)
            self.gain_head = nn.Linear(head_in, 1)
            nn.init.zeros_(self.gain_head.weight)
            nn.init.zeros_(self.gain_head.bias)
            n_tail = int(tail_seconds * sample_rate)
            noise = torch.randn(n_tail, generator=torch.Generator().manual_seed(TAIL_SEED))
            self.register_buffer("tail_noise", noise)
            self.register_buffer("tail_time", torch.arange(n_tail) / float(sample_rate))

        self.register_buffer("is_trained", torch.tensor(False))
        self.n_params = sum(p.numel() for p in self.parameters())
        logger.info("%s reverberator (%s): %d parameters, %d blocks x dilations %s",
                    "conditional" if cond_dim else "blind", mode, self.n_params, blocks, self.dilations)

    @classmethod
    def visual(cls, cfg: ReverbConfig) -> "ReverbModel":
        return cls(cfg.channels, cfg.blocks, cfg.dilations, cfg.kernel_size, cfg.cond_dim, cfg.fusion_hidden, cfg.tail_seconds)

    @classmethod
    def blind(cls, cfg: ReverbConfig) -> "ReverbModel":
        return cls(cfg.channels, cfg.blocks, cfg.dilations, cfg.kernel_size, 0, cfg.fusion_hidden, cfg.tail_seconds)

    @classmethod
    def dereverberator(cls, cfg: DereverbConfig) -> "ReverbModel":
        return cls(cfg.channels, cfg.blocks, cfg.dilations, cfg.kernel_size, mode="gate")

    @property
    def conditional(self) -> bool:
        return self.fusion is not None

    def _check_cond(self, a: torch.Tensor, cond: Optional[torch.Tensor]) -> None:
        if self.fusion is None and cond is not None:
            raise ContractError("blind model received a conditioner")
        if self.fusion is not None:
            if cond is None:
                raise ContractError("conditional model needs a conditioner")
            if cond.dim() != 2 or cond.shape[-1] != self.cond_dim or cond.shape[0] != a.shape[0]:
                raise ShapeError(f"conditioner must be [{a.shape[0]}, {self.cond_dim}], got {tuple(cond.shape)}")

    def tail_kernel(self, pooled: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """[B, F] -> (kernel [B, L], rt60 [B]); kernel energy equals gain^2."""
        rt = MIN_TAIL_RT60 + F.softplus(self.decay_head(pooled)).squeeze(-1)
        gain = self.gain_head(pooled).squeeze(-1)
        env = torch.exp(-6.908 * self.tail_time.to(pooled.dtype) / rt.unsqueeze(-1))
        k = self.tail_noise.to(pooled.dtype) * env
        k = k / k.pow(2).sum(dim=-1, keepdim=True).sqrt()
        return gain.unsqueeze(-1) * k, rt

    @staticmethod
    def fft_convolve(a: torch.Tensor, k: torch.Tensor) -> torch.Tensor:
        n = a.shape[-1] + k.shape[-1] - 1
        n_fft = 1 << (n - 1).bit_length()
        out = torch.fft.irfft(torch.fft.rfft(a, n_fft) * torch.fft.rfft(k, n_fft), n_fft)
        return out[..., : a.shape[-1]]

    def forward(self, a: torch.Tensor, cond: Optional[torch.Tensor] = None) -> torch.Tensor:
        """[B, T] (+ [B, cond_dim]) -> [B, T]"""
        self._check_cond(a, cond)
        embed, mods = self.fusion(cond) if self.fusion is not None else (None, None)

        x = self.inp(a.unsqueeze(1))
        skips = []
        per_block = len(self.dilations)
        for i, layer in enumerate(self.layers):
            mod = mods[i // per_block] if mods is not None else None
            x, s = layer(x, mod)
            skips.append(s)
        skip = torch.stack(skips, dim=0).mean(dim=0)
        decoded = self.decoder(skip).squeeze(1)

        if self.mode == "gate":
            return a * torch.sigmoid(decoded)

        pooled = skip.mean(dim=-1)
        if embed is not None:
            pooled = torch.cat([pooled, embed], dim=-1)
        kernel, _ = self.tail_kernel(pooled)
        return decoded + self.fft_convolve(a, kernel)


def reverb_forward(m: ReverbModel, a: WaveLike, v: Optional[Sequence[float]] = None) -> Waveform:
    p = next(m.parameters())
    x = as_batch(a, dtype=p.dtype, device=p.device)
    cond = None if v is None else torch.as_tensor(np.asarray(v), dtype=p.dtype, device=p.device).reshape(1, -1)
    was_training = m.training
    m.eval()
    with torch.no_grad():
        y = m(x, cond)[0]
    m.train(was_training)
    return Waveform(samples=y.double().cpu().numpy())


def reconstruction_loss(pred: torch.Tensor, target: torch.Tensor, domain: str = "log_spectrogram") -> torch.Tensor:
    if domain == "log_spectrogram":
        return log_stft_error_tensor(pred, target)
    if domain == "waveform":
        if pred.shape != target.shape:
            raise ShapeError(f"prediction {tuple(pred.shape)} and target {tuple(target.shape)} differ")
        return torch.mean((pred - target) ** 2)
    raise ContractError(f"unknown loss domain: {domain}")


def loss_visual(m: ReverbModel, a_debiased: torch.Tensor, v: torch.Tensor, a_target: torch.Tensor,
                domain: str = "log_spectrogram") -> torch.Tensor:
    return reconstruction_loss(m(a_debiased, v), a_target, domain)


def loss_blind(m: ReverbModel, a_debiased: torch.Tensor, a_target: torch.Tensor,
               domain: str = "log_spectrogram") -> torch.Tensor:
    return reconstruction_loss(m(a_debiased), a_target, domain)


def pretrain_dereverberator(
    pool: Dataset,
    cfg: Optional[DereverbConfig] = None,
    device: Optional[torch.device] = None,
) -> Tuple[ReverbModel, List[float]]:
    """
    Reverberant -> anechoic on the paired pool, for a fixed epoch budget.
    Pool items are dicts with 'audio' (reverberant) and 'source' (anechoic).
    """
    cfg = cfg or DereverbConfig()
    device = device or torch.device("cpu")
    if len(pool) == 0:
        raise TrainingError("dereverberator needs a non-empty paired pool")

    torch.manual_seed(cfg.seed)
    model = ReverbModel.dereverberator(cfg).to(device)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    loader = DataLoader(pool, batch_size=cfg.batch_size, shuffle=True,
                        generator=torch.Generator().manual_seed(cfg.seed))

    history: List[float] = []
    for epoch in range(cfg.epochs):
        total, count = 0.0, 0
        for batch in tqdm(loader, desc=f"dereverb epoch {epoch + 1}/{cfg.epochs}", leave=False):
            pred = model(batch["audio"].to(device))
            loss = log_stft_error_tensor(pred, batch["source"].to(device))
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += float(loss) * pred.shape[0]
            count += pred.shape[0]
        history.append(total / max(count, 1))
        logger.info("dereverberator epoch %d: log-stft loss %.4f", epoch + 1, history[-1])
    model.is_trained.fill_(True)
    model.eval()
    return model, history
