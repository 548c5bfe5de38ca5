from __future__ import annotations

from typing import Callable, List, Sequence, Tuple

import torch
import torch.nn as nn

from core.config import DebiasConfig
from core.verify_report import VerifyReport
from core.verifiers.base import BaseVerifier
from models.debiaser import Discriminator, Generator, disc_loss, gen_loss
from models.reverberator import ReverbModel, loss_blind, loss_visual

N = 2048
COND_DIM = 8


def tiny_reverberator(conditional: bool, seed: int = 0) -> ReverbModel:
    torch.manual_seed(seed)
    m = ReverbModel(channels=4, blocks=2, dilations=(1, 2), kernel_size=3,
                    cond_dim=COND_DIM if conditional else 0, fusion_hidden=8, tail_seconds=0.05)
    # zero-initialised heads would leave most gradients at exactly 0
    with torch.no_grad():
        for p in m.parameters():
            p.normal_(0.0, 0.3)
    return m.double()


def tiny_debiaser(seed: int = 0) -> Tuple[Generator, Discriminator]:
    torch.manual_seed(seed)
    cfg = DebiasConfig(lstm_hidden=4, lstm_layers=1, fc_hidden=6, d_channels=3)
    return Generator(cfg).double(), Discriminator(cfg).double()


def fd_check(loss_fn: Callable[[], torch.Tensor], params: Sequence[nn.Parameter], k: int = 8,
             eps: float = 1e-6) -> float:
    """
    Worst relative error between autograd and central differences over the k
    coordinates with the largest analytic gradient.
    """
    params = list(params)
    grads = torch.autograd.grad(loss_fn(), params)
    cands: List[Tuple[float, int, int]] = []
    for pi, g in enumerate(grads):
        flat = g.reshape(-1).abs()
        top = torch.topk(flat, min(k, flat.numel()))
        cands += [(float(v), pi, int(j)) for v, j in zip(top.values, top.indices)]
    cands.sort(reverse=True)

    worst = 0.0
    with torch.no_grad():
        for _, pi, j in cands[:k]:
            flat = params[pi].data.view(-1)
            orig = float(flat[j])
            flat[j] = orig + eps
            hi = float(loss_fn())
            flat[j] = orig - eps
            lo = float(loss_fn())
            flat[j] = orig
            fd = (hi - lo) / (2.0 * eps)
            an = float(grads[pi].reshape(-1)[j])
            worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-12))
    return worst


def gradient_inputs(seed: int = 3):
    g = torch.Generator().manual_seed(seed)
    a = 0.1 * torch.randn(2, N, generator=g, dtype=torch.float64)
    target = 0.1 * torch.randn(2, N, generator=g, dtype=torch.float64)
    v = torch.randn(2, COND_DIM, generator=g, dtype=torch.float64)
    return a, v, target


class GradientVerifier(BaseVerifier):
    name = "gradients"

    def verify(self) -> VerifyReport:
        rep = VerifyReport(ok=True, kind="gradient", summary="Finite-difference gradient checks (float64)")
        a, v, target = gradient_inputs()

        rv = tiny_reverberator(conditional=True)
        err = fd_check(lambda: loss_visual(rv, a, v, target), rv.parameters())
        rep.add("grad.loss_visual", err < 1e-4, f"max relative error {err:.2e}")

        rb = tiny_reverberator(conditional=False, seed=1)
        err = fd_check(lambda: loss_blind(rb, a, target), rb.parameters())
        rep.add("grad.loss_blind", err < 1e-4, f"max relative error {err:.2e}")

        gen, d = tiny_debiaser()
        scores = torch.tensor([0.3, 0.8], dtype=torch.float64)
        hist = target.flip(0)
        err = fd_check(lambda: disc_loss(d, target, a, scores, scores.flip(0), hist, scores), d.parameters())
        rep.add("grad.disc_loss", err < 1e-4, f"max relative error {err:.2e}")

        err = fd_check(lambda: gen_loss(d, gen(a)), gen.parameters())
        rep.add("grad.gen_loss", err < 1e-3, f"max relative error {err:.2e}")

        d.zero_grad(set_to_none=True)
        gen_loss(d, gen(a)).backward()
        untouched = all(p.grad is None for p in d.parameters())
        rep.add("grad.gen_loss_freezes_d", untouched, "discriminator receives no gradient from the generator loss")
        return rep
