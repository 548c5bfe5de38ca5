"""
De-biasing GAN: spectrogram-mask generator G and metric-surrogate discriminator D.
"""
from __future__ import annotations

import contextlib
from typing import Dict, Iterator, Optional

import torch
import torch.nn as nn

from core.config import DebiasConfig
from core.dsp import DEFAULT_STFT, StftConfig, Waveform, WaveLike, as_batch, istft_tensor, magnitude_tensor, stft_tensor


class Generator(nn.Module):
    """
    BiLSTM over log1p magnitude frames -> FC(300) -> LeakyReLU -> FC(257) -> sigmoid mask.
    Output = istft(mask * |stft(a)|, phase(stft(a))).
    """

    def __init__(self, cfg: Optional[DebiasConfig] = None, stft: StftConfig = DEFAULT_STFT):
        super().__init__()
        cfg = cfg or DebiasConfig()
        self.stft = stft
        n_bins = stft.n_bins
        self.lstm = nn.LSTM(n_bins, cfg.lstm_hidden, num_layers=cfg.lstm_layers,
                            batch_first=True, bidirectional=True)
        self.fc1 = nn.Linear(2 * cfg.lstm_hidden, cfg.fc_hidden)
        self.act = nn.LeakyReLU(0.3)
        self.fc2 = nn.Linear(cfg.fc_hidden, n_bins)
        # test hook: bypass the network with an all-ones mask
        self.force_identity = False
        self.register_buffer("is_trained", torch.tensor(False))

    def mask(self, magnitudes: torch.Tensor) -> torch.Tensor:
        """[B, frames, bins] -> mask of the same shape in (0, 1]."""
        if self.force_identity:
            return torch.ones_like(magnitudes)
        h, _ = self.lstm(torch.log1p(magnitudes))
        return torch.sigmoid(self.fc2(self.act(self.fc1(h))))

    def forward(self, a: torch.Tensor) -> torch.Tensor:
        spec = stft_tensor(a, self.stft)
        mag = spec.abs()
        phase = torch.angle(spec).detach()
        return istft_tensor(self.mask(mag) * mag, phase, self.stft, length=a.shape[-1])


def gen_forward(g: Generator, a: WaveLike) -> Waveform:
    p = next(g.parameters())
    x = as_batch(a, dtype=p.dtype, device=p.device)
    with torch.no_grad():
        y = g(x)[0]
    return Waveform(samples=y.double().cpu().numpy())


class Discriminator(nn.Module):
    """4 x Conv2d(5x5, 15 ch) on log1p magnitudes, spatial mean, FC 50 -> 10 -> 1."""

    def __init__(self, cfg: Optional[DebiasConfig] = None, stft: StftConfig = DEFAULT_STFT):
        super().__init__()
        cfg = cfg or DebiasConfig()
        self.stft = stft
        ch, k = cfg.d_channels, cfg.d_kernel
        layers = []
        for cin in (1, ch, ch, ch):
            layers += [nn.Conv2d(cin, ch, kernel_size=k, padding=k // 2), nn.LeakyReLU(0.3)]
        self.convs = nn.Sequential(*layers)
        self.fc = nn.Sequential(
            nn.Linear(ch, 50), nn.LeakyReLU(0.3),
            nn.Linear(50, 10), nn.LeakyReLU(0.3),
            nn.Linear(10, 1),
        )

    def forward(self, a: torch.Tensor) -> torch.Tensor:
        """[B, T] -> [B]"""
        x = torch.log1p(magnitude_tensor(a, self.stft)).unsqueeze(1)
        h = self.convs(x).mean(dim=(-2, -1))
        return self.fc(h).squeeze(-1)


@contextlib.contextmanager
def frozen(module: nn.Module) -> Iterator[nn.Module]:
    """Parameters stop requiring grad for the duration; restored afterwards."""
    flags = [p.requires_grad for p in module.parameters()]
    for p in module.parameters():
        p.requires_grad_(False)
    try:
        yield module
    finally:
        for p, f in zip(module.parameters(), flags):
            p.requires_grad_(f)


def disc_loss_terms(
    d: Discriminator,
    a_t: torch.Tensor,
    g_out: torch.Tensor,
    scores_t: torch.Tensor,
    scores_g: torch.Tensor,
    replay: Optional[torch.Tensor] = None,
    replay_scores: Optional[torch.Tensor] = None,
) -> Dict[str, torch.Tensor]:
    """
    Squared errors of D against the metric on real clips, on generated clips and
    on replayed clips (stored scores). The replay term is absent when nothing is replayed.
    """
    terms = {
        "target": torch.mean((d(a_t) - scores_t) ** 2),
        "generated": torch.mean((d(g_out) - scores_g) ** 2),
    }
    if replay is not None and replay.shape[0] > 0:
        terms["replay"] = torch.mean((d(replay) - replay_scores) ** 2)
    return terms


def disc_loss(d, a_t, g_out, scores_t, scores_g, replay=None, replay_scores=None) -> torch.Tensor:
    terms = disc_loss_terms(d, a_t, g_out, scores_t, scores_g, replay, replay_scores)
    return sum(terms.values())


def gen_loss(d: Discriminator, g_out: torch.Tensor) -> torch.Tensor:
    """Pushes D's score of generated audio towards 1; D receives no gradient."""
    with frozen(d):
        return torch.mean((d(g_out) - 1.0) ** 2)
