"""
Staged training.

    0         RT60 estimator + dereverberator (paired pool)
    1         de-biaser G / discriminator D with srmr_norm as the metric
    2         visual / blind reverberators on G(derev(A_t)) -> A_t
    3         joint fine-tuning with target reverberators and the combined metric
    baseline  visual reverberator on augmented dereverberated audio, no G

Every epoch of stages 1 and 3 is one discriminator epoch followed by one
generator epoch. Batch draws come from a per-(stage, epoch) RNG, so resuming
from a checkpoint replays the same epochs.
"""
from __future__ import annotations

import copy
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn as nn
from torch.utils.data import ConcatDataset
from tqdm import tqdm

from core.config import AppConfig, resolve_device
from core.dsp import AugmentPlan, apply_augment_plan, draw_augment_plan
from core.errors import ConfigError, DivergenceError, StagedDependencyError
from memory.checkpoint import checkpoint_load, checkpoint_save, module_digest
from memory.replay import ReplayBuffer
from memory.schema import EpochRecord
from memory.store import append_epoch
from models.debiaser import Discriminator, Generator, disc_loss, gen_loss
from models.residue import MetricNetworks, TrainingMetric
from models.reverberator import ReverbModel, loss_blind, loss_visual, pretrain_dereverberator
from models.rt60_estimator import ANECHOIC_RT60, Rt60Estimator, train_rt60_estimator
from synth.data_loader import (
    ReverbClipDataset,
    SourceClipDataset,
    batches,
    collate,
    draw_epoch_indices,
    load_split,
    read_rir,
)

logger = logging.getLogger(__name__)

STAGES = ("0", "1", "2", "3")
STAGE_CODES = {"0": 0, "1": 1, "2": 2, "3": 3, "baseline": 4}
TARGETS = {"r_visual": "r_visual_target", "r_blind": "r_blind_target"}
METRIC_ALPHA = {"residue": 0.0, "srmr": 1.0}


def alpha_for_metric(metric: str, alpha: float) -> float:
    if metric == "combined":
        return alpha
    if metric in METRIC_ALPHA:
        return METRIC_ALPHA[metric]
    raise ConfigError(f"unknown training metric: {metric} (combined | residue | srmr)")


def build_model(name: str, cfg: AppConfig) -> nn.Module:
    if name == "estimator":
        return Rt60Estimator()
    if name == "dereverb":
        return ReverbModel.dereverberator(cfg.dereverb)
    if name == "generator":
        return Generator(cfg.debias)
    if name == "discriminator":
        return Discriminator(cfg.debias)
    if name in ("r_visual", "r_visual_target", "baseline"):
        return ReverbModel.visual(cfg.reverb)
    if name in ("r_blind", "r_blind_target"):
        return ReverbModel.blind(cfg.reverb)
    raise ConfigError(f"unknown model name: {name}")


def layout_of(m: nn.Module) -> Dict[str, Any]:
    if isinstance(m, ReverbModel):
        return {"kind": "reverb", "mode": m.mode, "cond_dim": m.cond_dim, "blocks": m.blocks,
                "dilations": list(m.dilations), "n_params": m.n_params}
    return {"kind": type(m).__name__, "n_params": sum(p.numel() for p in m.parameters())}


@dataclass
class RunState:
    stage: str = ""
    epoch: int = 0
    completed: List[str] = field(default_factory=list)
    models: Dict[str, nn.Module] = field(default_factory=dict)
    optimizers: Dict[str, torch.optim.Optimizer] = field(default_factory=dict)
    replay: ReplayBuffer = field(default_factory=ReplayBuffer)
    history: List[Dict[str, Any]] = field(default_factory=list)
    extra: Dict[str, Any] = field(default_factory=dict)


class Trainer:
    def __init__(self, cfg: AppConfig, device: Optional[torch.device] = None):
        self.cfg = cfg
        self.device = device or resolve_device(cfg.device)
        self.state = RunState(replay=ReplayBuffer(cfg.debias.replay_capacity))
        self.log_path = os.path.join(cfg.run_dir, "metrics.jsonl")
        self._datasets: Dict[Tuple[str, bool], ReverbClipDataset] = {}
        self._pending_opt: Dict[str, Any] = {}

    # -----------------------------
    # State / persistence
    # -----------------------------

    def model(self, name: str) -> nn.Module:
        m = self.state.models.get(name)
        if m is None:
            raise StagedDependencyError(f"model '{name}' is not available in this run", completed=self.state.completed)
        return m

    def has(self, name: str) -> bool:
        return name in self.state.models

    def _new_model(self, name: str) -> nn.Module:
        m = build_model(name, self.cfg).to(self.device)
        self.state.models[name] = m
        return m

    def _optimizer(self, name: str, lr: float) -> torch.optim.Optimizer:
        opt = self.state.optimizers.get(name)
        if opt is None:
            opt = torch.optim.Adam(self.model(name).parameters(), lr=lr)
            pending = self._pending_opt.pop(name, None)
            if pending is not None:
                opt.load_state_dict(pending)
            self.state.optimizers[name] = opt
        return opt

    def _require(self, *stages: str) -> None:
        missing = [s for s in stages if s not in self.state.completed]
        if missing:
            raise StagedDependencyError(
                f"stage(s) {', '.join(missing)} must complete first", completed=list(self.state.completed)
            )

    def _begin(self, stage: str) -> int:
        """Returns the number of epochs already done for `stage` (0 unless resuming it)."""
        resuming = self.state.stage == stage and stage not in self.state.completed
        start = self.state.epoch if resuming else 0
        self.state.stage = stage
        self.state.epoch = start
        if stage in STAGES:
            later = [s for s in self.state.completed if s in STAGES and s > stage]
            if later:
                logger.info("re-running stage %s invalidates stage(s) %s", stage, ", ".join(later))
            self.state.completed = [s for s in self.state.completed if s not in later and s != stage]
        elif stage in self.state.completed:
            self.state.completed.remove(stage)
        return start

    def _finish(self, stage: str) -> None:
        if stage not in self.state.completed:
            self.state.completed.append(stage)
        self.save()

    def checkpoint_path(self, stage: Optional[str] = None) -> str:
        return os.path.join(self.cfg.run_dir, f"stage_{stage or self.state.stage}.pt")

    def payload(self) -> Dict[str, Any]:
        return {
            "stage": self.state.stage,
            "completed": list(self.state.completed),
            "epoch": self.state.epoch,
            "models": {k: m.state_dict() for k, m in self.state.models.items()},
            "layouts": {k: layout_of(m) for k, m in self.state.models.items()},
            "optimizers": {k: o.state_dict() for k, o in self.state.optimizers.items()},
            "replay": self.state.replay.state_dict(),
            "rng": {"torch": torch.get_rng_state()},
            "config": self.cfg.to_dict(),
            "history": list(self.state.history),
            "extra": dict(self.state.extra),
        }

    def save(self, path: Optional[str] = None) -> str:
        payload = self.payload()
        path = path or self.checkpoint_path()
        checkpoint_save(payload, path)
        checkpoint_save(payload, os.path.join(self.cfg.run_dir, "latest.pt"))
        return path

    @classmethod
    def load(cls, path: str, cfg: Optional[AppConfig] = None, device: Optional[torch.device] = None,
             require: Sequence[str] = ()) -> "Trainer":
        payload = checkpoint_load(path, require=require)
        cfg = cfg or AppConfig.from_dict(payload["config"])
        t = cls(cfg, device)
        t.restore(payload)
        return t

    def restore(self, payload: Dict[str, Any]) -> None:
        s = self.state
        s.stage = payload.get("stage", "")
        s.epoch = int(payload.get("epoch", 0))
        s.completed = list(payload.get("completed", []))
        s.history = list(payload.get("history", []))
        s.extra = dict(payload.get("extra", {}))
        s.models = {}
        for name, sd in payload.get("models", {}).items():
            m = build_model(name, self.cfg)
            m.load_state_dict(sd)
            s.models[name] = m.to(self.device)
        s.optimizers = {}
        self._pending_opt = dict(payload.get("optimizers", {}))
        s.replay = ReplayBuffer.from_state_dict(payload.get("replay"))
        rng = payload.get("rng", {})
        if "torch" in rng:
            torch.set_rng_state(rng["torch"])

    def digests(self) -> Dict[str, str]:
        return {k: module_digest(m) for k, m in self.state.models.items()}

    # -----------------------------
    # Data helpers
    # -----------------------------

    def dataset(self, split: str, with_source: bool = False) -> ReverbClipDataset:
        key = (split, with_source)
        if key not in self._datasets:
            self._datasets[key] = ReverbClipDataset(load_split(self.cfg.data_dir, split), self.cfg.data_dir, with_source)
        return self._datasets[key]

    def _batch(self, ds: ReverbClipDataset, idx) -> Dict[str, torch.Tensor]:
        return {k: v.to(self.device) for k, v in collate(ds, idx).items()}

    def _epoch_rng(self, stage: str, epoch: int) -> np.random.Generator:
        return np.random.default_rng([self.cfg.train.seed, STAGE_CODES[stage], epoch])

    def _seed_models(self, stage: str) -> None:
        torch.manual_seed(self.cfg.train.seed * 100 + STAGE_CODES[stage])

    @torch.no_grad()
    def dereverberate(self, audio: torch.Tensor) -> torch.Tensor:
        m = self.model("dereverb")
        m.eval()
        return m(audio)

    @torch.no_grad()
    def debias(self, audio: torch.Tensor) -> torch.Tensor:
        """G(derev(A))"""
        return self.model("generator")(self.dereverberate(audio))

    def _log(self, rec: EpochRecord) -> None:
        append_epoch(self.log_path, rec)
        self.state.history.append(rec.to_dict())

    # -----------------------------
    # Stage 0
    # -----------------------------

    def stage0_prerequisites(self) -> Dict[str, Any]:
        self._begin("0")
        dd = self.cfg.data_dir
        train, paired = load_split(dd, "train"), load_split(dd, "paired")
        est_ds = ConcatDataset([
            ReverbClipDataset(train, dd),
            ReverbClipDataset(paired, dd),
            SourceClipDataset(paired, dd, ANECHOIC_RT60),
        ])
        self._seed_models("0")
        est, report = train_rt60_estimator(est_ds, self.cfg.estimator, self.device)
        derev, hist = pretrain_dereverberator(ReverbClipDataset(paired, dd, with_source=True), self.cfg.dereverb, self.device)
        self.state.models["estimator"] = est
        self.state.models["dereverb"] = derev
        self.state.extra["estimator_report"] = report
        self._log(EpochRecord(stage="0", epoch=0, losses={"estimator_mae": report["mae"],
                                                          "dereverb_final": hist[-1] if hist else float("nan")}))
        self._finish("0")
        return report

    # -----------------------------
    # Stages 1 and 3 (adversarial)
    # -----------------------------

    def _metric(self, alpha: float) -> TrainingMetric:
        dc = self.cfg.debias
        nets = MetricNetworks(
            estimator=self.model("estimator"),
            r_visual=self.state.models.get("r_visual"),
            r_blind=self.state.models.get("r_blind"),
            rt60_floor=dc.rt60_floor,
            s_max=dc.srmr_max,
        )
        return TrainingMetric(nets, alpha)

    def discriminator_epoch(self, epoch: int, metric: TrainingMetric, batch_size: int, joint: bool,
                            rng: np.random.Generator) -> Dict[str, float]:
        """
        Per batch: metric scores with the frozen metric networks (one call), D update,
        and in joint mode an update of the target reverberators on the same batch.
        """
        tc = self.cfg.train
        ds = self.dataset("train")
        G, D = self.model("generator"), self.model("discriminator")
        opt_d = self._optimizer("discriminator", tc.lr_d)
        if joint:
            rv_t, rb_t = self.model("r_visual_target"), self.model("r_blind_target")
            opt_v = self._optimizer("r_visual_target", tc.lr_reverb_stage3)
            opt_b = self._optimizer("r_blind_target", tc.lr_reverb_stage3)
        domain = self.cfg.reverb.loss_domain

        sums = {"d": 0.0, "target_visual": 0.0, "target_blind": 0.0}
        n_batches = 0
        idx = draw_epoch_indices(len(ds), tc.samples_per_epoch, rng)
        for b in tqdm(batches(idx, batch_size), desc=f"stage {self.state.stage} D epoch {epoch}", leave=False):
            batch = self._batch(ds, b)
            a_t, v = batch["audio"], batch["descriptor"]
            x = self.dereverberate(a_t)
            with torch.no_grad():
                g = G(x)

            scores = metric(torch.cat([x, g]), torch.cat([v, v]), torch.cat([a_t, a_t])).to(x.dtype)
            s_x, s_g = scores[: len(b)], scores[len(b):]

            replay_w, replay_s = ReplayBuffer.stack(self.state.replay.sample(len(b), rng), device=self.device)
            loss_d = disc_loss(D, x, g, s_x, s_g, replay_w, replay_s)
            opt_d.zero_grad()
            loss_d.backward()
            opt_d.step()
            sums["d"] += float(loss_d)

            if joint:
                lv = loss_visual(rv_t, g, v, a_t, domain)
                lb = loss_blind(rb_t, g, a_t, domain)
                opt_v.zero_grad()
                opt_b.zero_grad()
                (lv + lb).backward()
                opt_v.step()
                opt_b.step()
                sums["target_visual"] += float(lv)
                sums["target_blind"] += float(lb)

            if rng.random() < self.cfg.debias.replay_push_rate:
                self.state.replay.push_batch(g, s_g, epoch)
            n_batches += 1

        out = {k: v / max(n_batches, 1) for k, v in sums.items()}
        if not joint:
            out.pop("target_visual")
            out.pop("target_blind")
        return out

    def generator_epoch(self, epoch: int, batch_size: int, rng: np.random.Generator) -> float:
        tc = self.cfg.train
        ds = self.dataset("train")
        G, D = self.model("generator"), self.model("discriminator")
        opt_g = self._optimizer("generator", tc.lr_g)

        total, n_batches = 0.0, 0
        idx = draw_epoch_indices(len(ds), tc.samples_per_epoch, rng)
        for b in tqdm(batches(idx, batch_size), desc=f"stage {self.state.stage} G epoch {epoch}", leave=False):
            batch = self._batch(ds, b)
            g = G(self.dereverberate(batch["audio"]))
            loss = gen_loss(D, g)
            opt_g.zero_grad()
            loss.backward()
            opt_g.step()
            total += float(loss)
            n_batches += 1
        return total / max(n_batches, 1)

    def copy_targets(self) -> None:
        for live, target in TARGETS.items():
            self.model(live).load_state_dict(self.model(target).state_dict())

    def probe_batch(self) -> Dict[str, torch.Tensor]:
        ds = self.dataset("val")
        n = min(self.cfg.train.probe_size, len(ds))
        return self._batch(ds, list(range(n)))

    @torch.no_grad()
    def probe(self, metric: TrainingMetric) -> Tuple[float, float]:
        """(mean |D - M|, mean M) on G's output for the fixed validation probe."""
        batch = self.probe_batch()
        if batch["audio"].shape[0] == 0:
            return float("nan"), float("nan")
        g = self.debias(batch["audio"])
        m = metric(g, batch["descriptor"], batch["audio"]).to(g.dtype)
        d = self.model("discriminator")(g)
        return float((d - m).abs().mean()), float(m.mean())

    def _adversarial(self, stage: str, epochs: int, batch_size: int, metric: TrainingMetric, joint: bool) -> None:
        tc = self.cfg.train
        start = self._begin(stage)
        strikes = int(self.state.extra.get("strikes", 0)) if start else 0
        for n in range(start + 1, epochs + 1):
            rng = self._epoch_rng(stage, n)
            d_stats = self.discriminator_epoch(n, metric, batch_size, joint, rng)

            copied = False
            if joint and n % tc.target_period == 0:
                self.copy_targets()
                copied = True

            g_loss = self.generator_epoch(n, batch_size, rng)
            gap, mean_metric = self.probe(metric)

            losses = dict(d_stats, g=g_loss)
            self._log(EpochRecord(stage=stage, epoch=n, losses=losses, mean_metric=mean_metric, mean_gap=gap,
                                  buffer_size=len(self.state.replay), copied_targets=copied))
            logger.info("stage %s epoch %d/%d: D %.4f G %.4f gap %.4f metric %.4f",
                        stage, n, epochs, d_stats["d"], g_loss, gap, mean_metric)
            self.state.epoch = n

            if joint:
                strikes = strikes + 1 if gap > tc.divergence_threshold else 0
                self.state.extra["strikes"] = strikes
            self.save()
            if joint and strikes >= tc.divergence_patience:
                raise DivergenceError(
                    f"discriminator drifted from the metric for {strikes} epochs "
                    f"(mean |D - M| = {gap:.3f} > {tc.divergence_threshold})",
                    epoch=n, gap=round(gap, 4),
                )
        self.state.extra["strikes"] = 0

    def stage1_pretrain_debiaser(self) -> None:
        self._require("0")
        self.model("estimator").check_trained()
        if self._begin("1") == 0:
            self._seed_models("1")
            self._new_model("generator")
            self._new_model("discriminator")
            self.state.replay = ReplayBuffer(self.cfg.debias.replay_capacity)
            for k in ("generator", "discriminator"):
                self.state.optimizers.pop(k, None)
        tc = self.cfg.train
        self._adversarial("1", tc.epochs_stage1, tc.batch_stage1, self._metric(alpha=1.0), joint=False)
        self.model("generator").is_trained.fill_(True)
        self._finish("1")

    def stage3_joint_finetune(self) -> None:
        self._require("0", "1", "2")
        tc = self.cfg.train
        if self._begin("3") == 0:
            for live, target in TARGETS.items():
                self.state.models[target] = copy.deepcopy(self.model(live))
                self.state.optimizers.pop(target, None)
            # stored scores from the stage-1 metric do not apply here
            self.state.replay = ReplayBuffer(self.cfg.debias.replay_capacity)
        alpha = alpha_for_metric(tc.metric, self.cfg.debias.alpha)
        self._adversarial("3", tc.epochs_stage3, tc.batch_stage3, self._metric(alpha), joint=True)
        for target in TARGETS.values():
            self.state.models.pop(target, None)
            self.state.optimizers.pop(target, None)
        self._finish("3")

    # -----------------------------
    # Stage 2
    # -----------------------------

    def load_shortcut_debiaser(self, path: str) -> None:
        payload = checkpoint_load(path, require=("1",))
        G = build_model("generator", self.cfg)
        G.load_state_dict(payload["models"]["generator"])
        self.state.models["generator"] = G.to(self.device)
        if "1" not in self.state.completed:
            self.state.completed.append("1")
        self.state.extra["shortcut_debiaser"] = os.path.abspath(path)
        logger.info("shortcut training: de-biaser loaded from %s", path)

    def stage2_pretrain_reverberators(self, debiaser_checkpoint: Optional[str] = None) -> Dict[str, float]:
        self._require("0")
        if debiaser_checkpoint:
            self.load_shortcut_debiaser(debiaser_checkpoint)
        self._require("1")
        tc = self.cfg.train
        start = self._begin("2")
        if start == 0:
            self._seed_models("2")
            for name in ("r_visual", "r_blind"):
                self._new_model(name)
                self.state.optimizers.pop(name, None)
        rv, rb = self.model("r_visual"), self.model("r_blind")
        opt_v = self._optimizer("r_visual", tc.lr_reverb_stage2)
        opt_b = self._optimizer("r_blind", tc.lr_reverb_stage2)
        domain = self.cfg.reverb.loss_domain
        ds = self.dataset("train")

        for n in range(start + 1, tc.epochs_stage2 + 1):
            rng = self._epoch_rng("2", n)
            sums, n_batches = {"visual": 0.0, "blind": 0.0}, 0
            idx = draw_epoch_indices(len(ds), tc.samples_per_epoch, rng)
            for b in tqdm(batches(idx, tc.batch_stage2), desc=f"stage 2 epoch {n}", leave=False):
                batch = self._batch(ds, b)
                a_t, v = batch["audio"], batch["descriptor"]
                g = self.debias(a_t)
                lv = loss_visual(rv, g, v, a_t, domain)
                lb = loss_blind(rb, g, a_t, domain)
                opt_v.zero_grad()
                opt_b.zero_grad()
                (lv + lb).backward()
                opt_v.step()
                opt_b.step()
                sums["visual"] += float(lv)
                sums["blind"] += float(lb)
                n_batches += 1
            losses = {k: v / max(n_batches, 1) for k, v in sums.items()}
            self._log(EpochRecord(stage="2", epoch=n, losses=losses))
            logger.info("stage 2 epoch %d/%d: visual %.4f blind %.4f", n, tc.epochs_stage2, losses["visual"], losses["blind"])
            self.state.epoch = n
            self.save()

        rv.is_trained.fill_(True)
        rb.is_trained.fill_(True)
        val = self.reverberator_val_losses()
        self.state.extra["stage2_val"] = val
        logger.info("stage 2 held-out: visual %.4f blind %.4f", val["visual"], val["blind"])
        self._finish("2")
        return val

    @torch.no_grad()
    def reverberator_val_losses(self, split: str = "val", permute: bool = False) -> Dict[str, float]:
        """Mean held-out losses of R_v and R_b; `permute` shuffles descriptors across samples."""
        ds = self.dataset(split)
        rv, rb = self.model("r_visual"), self.model("r_blind")
        rv.eval()
        rb.eval()
        domain = self.cfg.reverb.loss_domain
        sums, n = {"visual": 0.0, "blind": 0.0}, 0
        rng = np.random.default_rng(self.cfg.train.seed)
        for b in batches(np.arange(len(ds)), self.cfg.train.batch_stage2):
            batch = self._batch(ds, b)
            a_t, v = batch["audio"], batch["descriptor"]
            if permute:
                v = v[torch.as_tensor(rng.permutation(len(b)), device=v.device)]
            g = self.debias(a_t)
            sums["visual"] += float(loss_visual(rv, g, v, a_t, domain)) * len(b)
            sums["blind"] += float(loss_blind(rb, g, a_t, domain)) * len(b)
            n += len(b)
        rv.train()
        rb.train()
        return {k: v / max(n, 1) for k, v in sums.items()}

    # -----------------------------
    # Augmented baseline
    # -----------------------------

    def train_baseline(self) -> None:
        self._require("0")
        tc, ac = self.cfg.train, self.cfg.augment
        start = self._begin("baseline")
        if start == 0:
            self._seed_models("baseline")
            self._new_model("baseline")
            self.state.optimizers.pop("baseline", None)
        model = self.model("baseline")
        opt = self._optimizer("baseline", tc.lr_reverb_stage2)
        pool = [read_rir(self.cfg.data_dir, e) for e in load_split(self.cfg.data_dir, "paired")]
        ds = self.dataset("train")
        domain = self.cfg.reverb.loss_domain

        for n in range(start + 1, tc.epochs_baseline + 1):
            rng = self._epoch_rng("baseline", n)
            total, n_batches = 0.0, 0
            idx = draw_epoch_indices(len(ds), tc.samples_per_epoch, rng)
            for b in tqdm(batches(idx, tc.batch_stage2), desc=f"baseline epoch {n}", leave=False):
                batch = self._batch(ds, b)
                a_t, v = batch["audio"], batch["descriptor"]
                x = self.dereverberate(a_t).cpu().double().numpy()
                plans: List[AugmentPlan] = [draw_augment_plan(rng, ac, len(pool)) for _ in range(len(b))]
                aug = np.stack([apply_augment_plan(row, p, ac, pool).samples for row, p in zip(x, plans)])
                aug_t = torch.as_tensor(aug, dtype=a_t.dtype, device=self.device)
                loss = loss_visual(model, aug_t, v, a_t, domain)
                opt.zero_grad()
                loss.backward()
                opt.step()
                total += float(loss)
                n_batches += 1
            self._log(EpochRecord(stage="baseline", epoch=n, losses={"visual": total / max(n_batches, 1)}))
            self.state.epoch = n
            self.save()

        model.is_trained.fill_(True)
        self._finish("baseline")

    # -----------------------------
    # Dispatch
    # -----------------------------

    def run(self, stage: str, debiaser_checkpoint: Optional[str] = None) -> None:
        if stage == "all":
            for s in STAGES:
                self.run(s)
            return
        if stage == "0":
            self.stage0_prerequisites()
        elif stage == "1":
            self.stage1_pretrain_debiaser()
        elif stage == "2":
            self.stage2_pretrain_reverberators(debiaser_checkpoint)
        elif stage == "3":
            self.stage3_joint_finetune()
        elif stage == "baseline":
            self.train_baseline()
        else:
            raise ConfigError(f"unknown stage: {stage}")


def open_run(cfg: AppConfig, device: Optional[torch.device] = None) -> Trainer:
    """Trainer resumed from run_dir/latest.pt when it exists, fresh otherwise."""
    latest = os.path.join(cfg.run_dir, "latest.pt")
    if os.path.exists(latest):
        logger.info("resuming run from %s", latest)
        return Trainer.load(latest, cfg=cfg, device=device)
    return Trainer(cfg, device)
