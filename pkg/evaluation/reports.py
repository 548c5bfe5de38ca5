"""
Diagnostic reports over the test split, written as CSV next to the evaluation output.
"""
from __future__ import annotations

import logging
import os
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
import torch
from scipy.stats import ttest_rel

from core.audio_io import read_wav
from core.config import AppConfig
from core.dsp import convolve_rir
from core.errors import ConfigError, MetricError, StagedDependencyError
from core.metrics import srmr
from evaluation.evaluate import edges_to_bins
from evaluation.infer import System
from models.residue import combined_metric, residue_metric
from synth.data_loader import batches, load_split, read_clip, read_rir

logger = logging.getLogger(__name__)

DEBIAS_HEADER = ["audio", "n", "rt60_mean", "rte_vs_source", "srmr_mean", "p_rt60", "p_srmr"]
SRMR_STRATA_HEADER = ["rt60_lo", "rt60_hi", "n", "srmr_dereverberated", "srmr_debiased"]
PROBE_HEADER = ["audio", "n", "residue_mean", "combined_mean", "gap"]
RECOMPUTE_HEADER = ["variant", "n", "rte"]


def write_csv(df: pd.DataFrame, out_dir: str, name: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    df.to_csv(path, index=False)
    return path


def _srmr_or_nan(x: np.ndarray) -> float:
    try:
        return srmr(x)
    except MetricError:
        return float("nan")


@torch.no_grad()
def _stages(system: System, cfg: AppConfig, max_samples: Optional[int]) -> Dict[str, np.ndarray]:
    """Per-clip RT60 estimates and SRMR for reverberant, dereverberated and de-biased test audio."""
    entries = [e for e in load_split(cfg.data_dir, "test") if e.source_path]
    if max_samples is not None:
        entries = entries[:max_samples]
    if not entries:
        raise ConfigError("test split has no entries with a dry source")

    est = system.estimator
    out: Dict[str, List[float]] = {k: [] for k in (
        "rt_reverberant", "rt_dereverberated", "rt_debiased", "rt_source",
        "srmr_reverberant", "srmr_dereverberated", "srmr_debiased", "rt60_true")}
    for chunk in batches(np.arange(len(entries)), cfg.eval.batch_size):
        group = [entries[int(i)] for i in chunk]
        a = torch.as_tensor(np.stack([read_clip(cfg.data_dir, e.wav_path) for e in group]),
                            dtype=torch.float32, device=system.device)
        src = torch.as_tensor(np.stack([read_clip(cfg.data_dir, e.source_path) for e in group]),
                              dtype=torch.float32, device=system.device)
        derev = system.dereverb(a)
        debiased = system.generator(derev)
        for name, x in (("reverberant", a), ("dereverberated", derev), ("debiased", debiased)):
            out[f"rt_{name}"] += est.estimate_batch(x).cpu().tolist()
            out[f"srmr_{name}"] += [_srmr_or_nan(row) for row in x.double().cpu().numpy()]
        out["rt_source"] += est.estimate_batch(src).cpu().tolist()
        out["rt60_true"] += [e.rt60_true for e in group]
    return {k: np.asarray(v, dtype=np.float64) for k, v in out.items()}


def debias_report(system: System, cfg: AppConfig, out_dir: str, max_samples: Optional[int] = None) -> pd.DataFrame:
    """
    Mean estimated RT60, RTE against the dry source and mean SRMR for
    reverberant -> dereverberated -> de-biased audio. p-values are paired
    t-tests against the previous row.
    """
    system.check("input")
    s = _stages(system, cfg, max_samples)
    rows = []
    prev = None
    for name in ("reverberant", "dereverberated", "debiased"):
        rt, sr = s[f"rt_{name}"], s[f"srmr_{name}"]
        row = {
            "audio": name, "n": len(rt),
            "rt60_mean": float(rt.mean()),
            "rte_vs_source": float(np.abs(rt - s["rt_source"]).mean()),
            "srmr_mean": float(np.nanmean(sr)),
            "p_rt60": np.nan, "p_srmr": np.nan,
        }
        if prev is not None:
            ok = ~(np.isnan(sr) | np.isnan(s[f"srmr_{prev}"]))
            row["p_rt60"] = float(ttest_rel(s[f"rt_{prev}"], rt).pvalue)
            row["p_srmr"] = float(ttest_rel(s[f"srmr_{prev}"][ok], sr[ok]).pvalue)
        rows.append(row)
        prev = name
    df = pd.DataFrame(rows, columns=DEBIAS_HEADER)
    write_csv(df, out_dir, "debias.csv")

    strata = []
    for lo, hi in edges_to_bins(cfg.eval.strata):
        sel = (s["rt60_true"] >= lo) & (s["rt60_true"] < hi)
        if not sel.any():
            continue
        strata.append({
            "rt60_lo": lo, "rt60_hi": hi, "n": int(sel.sum()),
            "srmr_dereverberated": float(np.nanmean(s["srmr_dereverberated"][sel])),
            "srmr_debiased": float(np.nanmean(s["srmr_debiased"][sel])),
        })
    write_csv(pd.DataFrame(strata, columns=SRMR_STRATA_HEADER), out_dir, "srmr_by_rt60.csv")
    logger.info("debias report: rt60 %s", " > ".join(f"{r['rt60_mean']:.3f}" for r in rows))
    return df


@torch.no_grad()
def residue_probe(system: System, cfg: AppConfig, out_dir: str, max_samples: Optional[int] = None) -> pd.DataFrame:
    """
    Residue score of de-biased audio against the same audio put back through
    its own room's RIR. The metric should rate the re-convolved audio lower.
    The combined training metric at the configured alpha is reported alongside.
    """
    if system.r_blind is None:
        raise StagedDependencyError("residue probe needs the blind reverberator")
    system.check("blind")
    entries = [e for e in load_split(cfg.data_dir, "test") if e.rir_path]
    if max_samples is not None:
        entries = entries[:max_samples]
    nets = (system.r_visual, system.r_blind, system.estimator)

    scores: Dict[str, Dict[str, List[float]]] = {
        k: {"residue": [], "combined": []} for k in ("debiased", "reconvolved")
    }
    for chunk in batches(np.arange(len(entries)), cfg.eval.batch_size):
        group = [entries[int(i)] for i in chunk]
        refs = np.stack([read_clip(cfg.data_dir, e.wav_path) for e in group])
        a = torch.as_tensor(refs, dtype=torch.float32, device=system.device)
        debiased = system.generator(system.dereverb(a)).double().cpu().numpy()
        for x, ref, e in zip(debiased, refs, group):
            rev = convolve_rir(x, read_rir(cfg.data_dir, e)).samples
            for audio, clip in (("debiased", x), ("reconvolved", rev)):
                scores[audio]["residue"].append(residue_metric(clip, e.descriptor, ref, *nets, cfg=cfg.debias))
                scores[audio]["combined"].append(combined_metric(clip, e.descriptor, ref, *nets, cfg=cfg.debias))

    gap = float(np.mean(scores["debiased"]["residue"]) - np.mean(scores["reconvolved"]["residue"]))
    df = pd.DataFrame([
        {"audio": audio, "n": len(s["residue"]), "residue_mean": float(np.mean(s["residue"])),
         "combined_mean": float(np.mean(s["combined"])), "gap": gap}
        for audio, s in scores.items()
    ], columns=PROBE_HEADER)
    write_csv(df, out_dir, "residue_probe.csv")
    logger.info("residue probe: debiased %.4f vs reconvolved %.4f (gap %.4f)",
                df["residue_mean"].iloc[0], df["residue_mean"].iloc[1], gap)
    return df


def recompute_rte(eval_dir: str, estimator) -> pd.DataFrame:
    """
    Per-variant RTE rebuilt only from samples.csv and the dumped WAVs, one clip at a time.
    """
    path = os.path.join(eval_dir, "samples.csv")
    if not os.path.exists(path):
        raise ConfigError(f"no samples.csv under {eval_dir}")
    df = pd.read_csv(path, keep_default_na=False)
    if (df["pred_wav"] == "").any() or (df["ref_wav"] == "").any():
        raise ConfigError("evaluation was run without dumped WAVs (eval.dump_wavs=false)")

    rows = []
    for variant, g in df.groupby("variant", sort=False):
        errs = [
            abs(estimator.estimate(read_wav(os.path.join(eval_dir, p)).samples)
                - estimator.estimate(read_wav(os.path.join(eval_dir, r)).samples))
            for p, r in zip(g["pred_wav"], g["ref_wav"])
        ]
        rows.append({"variant": variant, "n": len(errs), "rte": float(np.mean(errs))})
    return pd.DataFrame(rows, columns=RECOMPUTE_HEADER)
