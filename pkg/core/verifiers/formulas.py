from __future__ import annotations

import sympy as sp
import torch

from core.config import DebiasConfig
from core.metrics import normalize_srmr
from core.verify_report import VerifyReport
from core.verifiers.base import BaseVerifier
from models.debiaser import Discriminator, disc_loss, gen_loss
from models.residue import combine_scores, residue_score

TOL = 1e-12


def logistic(x) -> sp.Expr:
    return 1 / (1 + sp.exp(-x))


def residue_oracle(rt_blind, rt_visual, rt_target, floor=sp.Rational(1, 10)) -> sp.Expr:
    """Exact residue score over rationals."""
    gap = sp.Abs(rt_blind - rt_target) - sp.Abs(rt_visual - rt_target)
    return logistic(gap / sp.Max(floor, rt_target))


def tiny_discriminator(seed: int = 0) -> Discriminator:
    torch.manual_seed(seed)
    return Discriminator(DebiasConfig(d_channels=3)).double()


def naive_disc_loss(d: Discriminator, batches) -> float:
    """Sum over (audio, scores) groups of per-row squared errors, averaged row by row."""
    total = 0.0
    for audio, scores in batches:
        acc = 0.0
        for i in range(audio.shape[0]):
            pred = float(d(audio[i:i + 1])[0])
            acc += (pred - float(scores[i])) ** 2
        total += acc / audio.shape[0]
    return total


class FormulaVerifier(BaseVerifier):
    name = "formulas"

    def verify(self) -> VerifyReport:
        rep = VerifyReport(ok=True, kind="oracle", summary="Metric and loss formulas")
        r = sp.Rational

        got = float(residue_score(0.75, 0.25, 0.5))
        rep.add("residue.equal_errors", got == 0.5, f"equal blind/visual errors -> {got}")

        # blind error 0.3 s, visual error 0, RT(A_t)=0.05 s clamps to 0.1 s
        want = residue_oracle(r(35, 100), r(5, 100), r(5, 100))
        got = float(residue_score(0.35, 0.05, 0.05))
        exact = float(sp.N(want, 30))
        rep.add("residue.clamped_floor", abs(got - exact) < TOL and abs(exact - 0.9526) < 5e-5,
                f"sigma(3) -> {got:.6f} (oracle {exact:.6f})")

        grid = [float(residue_score(0.5 + g, 0.5, 0.5)) for g in (0.0, 0.1, 0.2, 0.3, 0.4)]
        rep.add("residue.monotone", all(a < b for a, b in zip(grid, grid[1:])), "increasing in the error gap")

        got = float(combine_scores(0.6, 0.5, 0.7))
        want = float(r(7, 10) * r(3, 5) + r(3, 10) * r(1, 2))
        rep.add("combined.arithmetic", abs(got - want) < TOL, f"0.7*0.6 + 0.3*0.5 -> {got:.6f}")
        rep.add("combined.alpha_one", float(combine_scores(0.37, 0.91, 1.0)) == 0.37, "alpha=1 is srmr_norm")
        rep.add("combined.alpha_zero", float(combine_scores(0.37, 0.91, 0.0)) == 0.91, "alpha=0 is the residue")

        got = normalize_srmr(13.14)
        rep.add("srmr_norm.scale", abs(got - 0.657) < TOL, f"13.14 / 20 -> {got}")
        rep.add("srmr_norm.saturates", normalize_srmr(35.0) == 1.0 and normalize_srmr(0.0) == 0.0, "clipped to [0, 1]")

        d = tiny_discriminator()
        g = torch.Generator().manual_seed(1)
        a_t, g_out, hist = (torch.randn(3, 2048, generator=g, dtype=torch.float64) * 0.1 for _ in range(3))
        s_t, s_g, s_h = (torch.rand(3, generator=g, dtype=torch.float64) for _ in range(3))
        with torch.no_grad():
            got = float(disc_loss(d, a_t, g_out, s_t, s_g, hist, s_h))
            want = naive_disc_loss(d, [(a_t, s_t), (g_out, s_g), (hist, s_h)])
            rep.add("disc_loss.decomposes", abs(got - want) < 1e-9 * max(1.0, abs(want)),
                    f"{got:.10f} vs summed terms {want:.10f}")

            got = float(disc_loss(d, a_t, g_out, s_t, s_g, hist[:0], s_h[:0]))
            want = naive_disc_loss(d, [(a_t, s_t), (g_out, s_g)])
            rep.add("disc_loss.empty_replay", abs(got - want) < 1e-9 * max(1.0, abs(want)), "replay term omitted")

            got = float(gen_loss(d, g_out))
            want = float(torch.mean((d(g_out) - 1.0) ** 2))
            rep.add("gen_loss.distance_from_one", abs(got - want) < TOL, f"{got:.10f}")
        return rep
