"""
Evaluation harness.

CSV outputs (under out_dir):
    samples.csv     one row per (pair, variant)
    metrics.csv     per-variant means (core.metrics.METRIC_HEADER)
    strata.csv      normalised RTE per target-RT60 stratum
    rt60_hist.csv   predicted vs reference RT60 histograms
    distance.csv    spectrogram errors and DRR per source-listener distance stratum

RTE is always reported. The reference clip is the ground truth
(dry source convolved with the target RIR) when one exists, otherwise the
target room's own reverberant clip. STFT errors need the ground truth.
"""
from __future__ import annotations

import logging
import math
import os
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
import torch
from tqdm import tqdm

from core.audio_io import read_wav, write_wav
from core.config import AppConfig
from core.dsp import Waveform, convolve_rir
from core.errors import UnsupportedMetricError
from core.metrics import METRIC_HEADER, MetricReport, log_stft_error, stft_error
from evaluation.infer import System, infer_batch
from evaluation.pairing import EvalPair, make_pairs
from models.rt60_estimator import Rt60Estimator
from synth.data_loader import batches, read_clip, read_rir

logger = logging.getLogger(__name__)

SAMPLE_HEADER = [
    "pair_id", "variant", "source_id", "target_id", "target_room", "target_rt60", "target_drr",
    "target_distance", "pred_rt60", "ref_rt60", "rte", "stft_err", "log_stft_err", "pred_wav", "ref_wav",
]
STRATA_HEADER = ["variant", "rt60_lo", "rt60_hi", "n", "rte", "normalized_rte"]
HIST_HEADER = ["variant", "bin_lo", "bin_hi", "n_pred", "n_ref"]
DISTANCE_HEADER = ["variant", "d_lo", "d_hi", "n", "stft_err", "log_stft_err", "drr"]
HIST_BINS = np.round(np.arange(0.0, 1.7, 0.1), 2)
STFT_METRICS = ("stft_err", "log_stft_err")
PAIR_COLUMNS = ["pred_rt60", "ref_rt60", "rte", "stft_err", "log_stft_err"]


def ground_truth(pair: EvalPair, data_dir: str) -> Optional[np.ndarray]:
    if not pair.has_ground_truth:
        return None
    src = read_clip(data_dir, pair.source.source_path)
    return convolve_rir(src, read_rir(data_dir, pair.target)).samples


def _roundtrip(path: str, x: np.ndarray) -> np.ndarray:
    write_wav(path, Waveform(samples=x))
    return read_wav(path).samples


def edges_to_bins(edges: Sequence[float]) -> List[tuple]:
    full = [0.0] + list(edges) + [math.inf]
    return list(zip(full[:-1], full[1:]))


def strata_table(df: pd.DataFrame, edges: Sequence[float]) -> pd.DataFrame:
    rows = []
    for variant, g in df.groupby("variant", sort=False):
        for lo, hi in edges_to_bins(edges):
            sel = g[(g["target_rt60"] >= lo) & (g["target_rt60"] < hi)]
            if sel.empty:
                continue
            rows.append({
                "variant": variant, "rt60_lo": lo, "rt60_hi": hi, "n": len(sel),
                "rte": sel["rte"].mean(),
                "normalized_rte": (sel["rte"] / sel["target_rt60"]).mean(),
            })
    return pd.DataFrame(rows, columns=STRATA_HEADER)


def histogram_table(df: pd.DataFrame) -> pd.DataFrame:
    rows = []
    for variant, g in df.groupby("variant", sort=False):
        n_pred, _ = np.histogram(g["pred_rt60"].clip(upper=HIST_BINS[-1] - 1e-9), bins=HIST_BINS)
        n_ref, _ = np.histogram(g["ref_rt60"].clip(upper=HIST_BINS[-1] - 1e-9), bins=HIST_BINS)
        for lo, hi, a, b in zip(HIST_BINS[:-1], HIST_BINS[1:], n_pred, n_ref):
            rows.append({"variant": variant, "bin_lo": lo, "bin_hi": hi, "n_pred": int(a), "n_ref": int(b)})
    return pd.DataFrame(rows, columns=HIST_HEADER)


def distance_table(df: pd.DataFrame, edges: Sequence[float]) -> pd.DataFrame:
    rows = []
    for variant, g in df.groupby("variant", sort=False):
        for lo, hi in edges_to_bins(edges):
            sel = g[(g["target_distance"] >= lo) & (g["target_distance"] < hi)]
            if sel.empty:
                continue
            rows.append({
                "variant": variant, "d_lo": lo, "d_hi": hi, "n": len(sel),
                "stft_err": sel["stft_err"].mean(), "log_stft_err": sel["log_stft_err"].mean(),
                "drr": sel["target_drr"].mean(),
            })
    return pd.DataFrame(rows, columns=DISTANCE_HEADER)


def reports_from_samples(df: pd.DataFrame, edges: Sequence[float]) -> Dict[str, MetricReport]:
    strata = strata_table(df, edges)
    out: Dict[str, MetricReport] = {}
    for variant, g in df.groupby("variant", sort=False):
        stft = g["stft_err"].dropna()
        logs = g["log_stft_err"].dropna()
        s = strata[strata["variant"] == variant]
        out[variant] = MetricReport(
            rte=float(g["rte"].mean()),
            stft_err=float(stft.mean()) if len(stft) else None,
            log_stft_err=float(logs.mean()) if len(logs) else None,
            strata=[(float(h), float(v)) for h, v in zip(s["rt60_hi"], s["normalized_rte"])],
            n=len(g),
        )
    return out


def evaluate_pair_set(estimator: Rt60Estimator, refs: Sequence[np.ndarray], preds: Sequence[np.ndarray],
                      truths: Optional[Sequence[Optional[np.ndarray]]] = None,
                      metrics: Sequence[str] = STFT_METRICS) -> pd.DataFrame:
    """
    Per-pair metrics for aligned rows of predictions and references.
    STFT errors are taken against `truths[i]` and left NaN where it is None
    or the metric is not requested.
    """
    ref_rt = estimator.estimate_batch(torch.as_tensor(np.stack(refs), dtype=torch.float32)).cpu().numpy()
    pred_rt = estimator.estimate_batch(torch.as_tensor(np.stack(preds), dtype=torch.float32)).cpu().numpy()
    truths = list(truths) if truths is not None else [None] * len(preds)
    rows = []
    for i, (pred, gt) in enumerate(zip(preds, truths)):
        rows.append({
            "pred_rt60": float(pred_rt[i]),
            "ref_rt60": float(ref_rt[i]),
            "rte": abs(float(pred_rt[i]) - float(ref_rt[i])),
            "stft_err": stft_error(pred, gt) if gt is not None and "stft_err" in metrics else np.nan,
            "log_stft_err": log_stft_error(pred, gt) if gt is not None and "log_stft_err" in metrics else np.nan,
        })
    return pd.DataFrame(rows, columns=PAIR_COLUMNS)


def evaluate(system: System, cfg: AppConfig, out_dir: str, mode: Optional[str] = None,
             variants: Optional[Sequence[str]] = None, pairs: Optional[List[EvalPair]] = None) -> Dict[str, MetricReport]:
    ec = cfg.eval
    mode = mode or ec.mode
    variants = list(variants or ec.variants)
    if "baseline" in variants and system.baseline is None:
        logger.warning("no augmented baseline in this run; skipping that variant")
        variants.remove("baseline")
    for v in variants:
        system.check(v)

    if pairs is None:
        pairs = make_pairs(mode, cfg.data_dir, np.random.default_rng(ec.seed), ec.max_pairs)
    wants_stft = [m for m in ec.metrics if m in STFT_METRICS]
    if wants_stft and not all(p.has_ground_truth for p in pairs):
        raise UnsupportedMetricError(
            f"{', '.join(wants_stft)} need ground-truth target audio, which some pairs lack", mode=mode
        )

    os.makedirs(out_dir, exist_ok=True)
    wav_dir = os.path.join(out_dir, "wavs")
    est = system.estimator
    rows: List[Dict[str, object]] = []

    for chunk in tqdm(batches(np.arange(len(pairs)), ec.batch_size), desc=f"eval {mode}"):
        group = [pairs[int(i)] for i in chunk]
        audio = torch.as_tensor(np.stack([
            read_clip(cfg.data_dir, p.source.source_path if p.source_anechoic else p.source.wav_path) for p in group
        ]), dtype=torch.float32)
        cond = torch.as_tensor([p.target.descriptor for p in group], dtype=torch.float32)
        gts = [ground_truth(p, cfg.data_dir) for p in group]
        refs = [gt if gt is not None else read_clip(cfg.data_dir, p.target.wav_path) for gt, p in zip(gts, group)]
        ref_paths = [""] * len(group)
        if ec.dump_wavs:
            ref_paths = [os.path.join(wav_dir, "reference", f"{p.pair_id}.wav") for p in group]
            refs = [_roundtrip(path, r) for path, r in zip(ref_paths, refs)]
            gts = [r if gt is not None else None for r, gt in zip(refs, gts)]

        for variant in variants:
            # anechoic routing is decided per pair; all pairs of a mode share it
            pred = infer_batch(system, audio, cond, group[0].source_anechoic, variant).double().cpu().numpy()
            pred_paths = [""] * len(group)
            if ec.dump_wavs:
                pred_paths = [os.path.join(wav_dir, variant, f"{p.pair_id}.wav") for p in group]
                pred = np.stack([_roundtrip(path, x) for path, x in zip(pred_paths, pred)])
            scored = evaluate_pair_set(est, refs, list(pred), gts, wants_stft)

            for i, p in enumerate(group):
                rows.append({
                    "pair_id": p.pair_id,
                    "variant": variant,
                    "source_id": p.source.sample_id,
                    "target_id": p.target.sample_id,
                    "target_room": p.target.room_id,
                    "target_rt60": p.target.rt60_true,
                    "target_drr": p.target.drr_true,
                    "target_distance": p.target.distance,
                    **scored.iloc[i].to_dict(),
                    "pred_wav": os.path.relpath(pred_paths[i], out_dir) if pred_paths[i] else "",
                    "ref_wav": os.path.relpath(ref_paths[i], out_dir) if ref_paths[i] else "",
                })

    df = pd.DataFrame(rows, columns=SAMPLE_HEADER)
    reports = reports_from_samples(df, ec.strata)

    df.to_csv(os.path.join(out_dir, "samples.csv"), index=False)
    pd.DataFrame([r.to_row(v, mode) for v, r in reports.items()], columns=METRIC_HEADER).to_csv(
        os.path.join(out_dir, "metrics.csv"), index=False)
    strata_table(df, ec.strata).to_csv(os.path.join(out_dir, "strata.csv"), index=False)
    histogram_table(df).to_csv(os.path.join(out_dir, "rt60_hist.csv"), index=False)
    distance_table(df, ec.distance_edges).to_csv(os.path.join(out_dir, "distance.csv"), index=False)

    for v, r in reports.items():
        logger.info("%s/%s: rte %.4f s, stft %s, log-stft %s (n=%d)", mode, v, r.rte, r.stft_err, r.log_stft_err, r.n)
    return reports
