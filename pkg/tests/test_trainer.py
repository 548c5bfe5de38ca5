from __future__ import annotations

import os
from dataclasses import replace

import pytest
import torch

from core.audio_io import record_reads
from core.errors import ConfigError, DivergenceError, StagedDependencyError
from memory.checkpoint import checkpoint_load, module_digest
from memory.store import load_epochs
from training.trainer import Trainer, alpha_for_metric, open_run


class Interrupted(Exception):
    pass


def stage_checkpoint(run: Trainer, stage: str) -> str:
    return os.path.join(run.cfg.run_dir, f"stage_{stage}.pt")


def resumed(run: Trainer, stage: str, cfg) -> Trainer:
    """A new trainer writing into cfg.run_dir, started from the session run's checkpoint."""
    return Trainer.load(stage_checkpoint(run, stage), cfg=cfg)


def no_anechoic(paths) -> bool:
    marker = os.sep + "anechoic" + os.sep
    return not any(marker in p for p in paths)


class TestDependencies:
    @pytest.mark.parametrize("stage", ["1", "2", "3", "baseline"])
    def test_stage_needs_prerequisites(self, cfg, stage):
        with pytest.raises(StagedDependencyError):
            Trainer(cfg).run(stage)

    def test_stage3_needs_stage2(self, trained_run, cfg):
        t = resumed(trained_run, "1", cfg)
        with pytest.raises(StagedDependencyError):
            t.run("3")

    def test_unknown_stage(self, cfg):
        with pytest.raises(ConfigError):
            Trainer(cfg).run("4")

    def test_unknown_metric(self):
        with pytest.raises(ConfigError):
            alpha_for_metric("pesq", 0.7)
        assert alpha_for_metric("combined", 0.7) == 0.7
        assert alpha_for_metric("residue", 0.7) == 0.0
        assert alpha_for_metric("srmr", 0.7) == 1.0

    def test_missing_model(self, cfg):
        with pytest.raises(StagedDependencyError):
            Trainer(cfg).model("generator")


class TestCheckpoints:
    def test_stage_files(self, trained_run):
        for stage in ("0", "1", "2", "3", "baseline"):
            assert os.path.exists(stage_checkpoint(trained_run, stage))
        payload = checkpoint_load(os.path.join(trained_run.cfg.run_dir, "latest.pt"))
        assert payload["completed"] == ["0", "1", "2", "3", "baseline"]

    def test_targets_dropped_after_stage3(self, trained_run):
        assert not trained_run.has("r_visual_target")
        assert not trained_run.has("r_blind_target")
        payload = checkpoint_load(stage_checkpoint(trained_run, "3"))
        assert "r_visual_target" not in payload["models"]

    def test_load_restores_weights(self, trained_run):
        back = Trainer.load(os.path.join(trained_run.cfg.run_dir, "latest.pt"))
        assert back.digests() == trained_run.digests()

    def test_open_run_resumes(self, trained_run):
        t = open_run(trained_run.cfg)
        assert t.state.completed == trained_run.state.completed

    def test_everything_marked_trained(self, trained_run):
        for name in ("estimator", "dereverb", "generator", "r_visual", "r_blind", "baseline"):
            assert bool(trained_run.model(name).is_trained), name

    def test_epoch_log(self, trained_run):
        recs = load_epochs(trained_run.log_path)
        stages = [r.stage for r in recs]
        assert stages.count("1") == 2 and stages.count("3") == 2 and stages.count("baseline") == 1
        stage3 = [r for r in recs if r.stage == "3"]
        assert [r.copied_targets for r in stage3] == [False, True]
        assert all(r.mean_gap is not None for r in stage3)


class TestFreezing:
    def test_stage2_leaves_prerequisites_alone(self, trained_run, cfg):
        t = resumed(trained_run, "1", cfg)
        before = t.digests()
        t.run("2")
        after = t.digests()
        for name in ("estimator", "dereverb", "generator", "discriminator"):
            assert after[name] == before[name], name

    def test_stage3_leaves_metric_networks_alone(self, trained_run, cfg):
        t = resumed(trained_run, "2", cfg)
        before = t.digests()
        t.run("3")
        after = t.digests()
        assert after["estimator"] == before["estimator"]
        assert after["dereverb"] == before["dereverb"]
        assert after["generator"] != before["generator"]

    def test_target_copy_is_bitwise(self, trained_run, cfg, monkeypatch):
        t = resumed(trained_run, "2", cfg)
        seen = []
        original = Trainer.copy_targets

        def spy(self):
            original(self)
            seen.append((module_digest(self.model("r_visual")), module_digest(self.model("r_visual_target")),
                         module_digest(self.model("r_blind")), module_digest(self.model("r_blind_target"))))

        monkeypatch.setattr(Trainer, "copy_targets", spy)
        t.run("3")
        assert len(seen) == 1
        live_v, target_v, live_b, target_b = seen[0]
        assert live_v == target_v and live_b == target_b

    def test_live_reverberators_move_only_by_copy(self, trained_run, cfg):
        t = resumed(trained_run, "2", replace(cfg, train=replace(cfg.train, epochs_stage3=1)))
        before = t.digests()
        t.run("3")
        assert t.digests()["r_visual"] == before["r_visual"]
        assert t.digests()["r_blind"] == before["r_blind"]


class TestAudit:
    def test_adversarial_stages_never_open_dry_sources(self, trained_run, cfg):
        t = resumed(trained_run, "0", cfg)
        with record_reads() as paths:
            t.run("1")
            t.run("2")
            t.run("3")
        assert paths
        assert no_anechoic(paths)

    def test_stage0_uses_the_paired_pool(self, cfg):
        with record_reads() as paths:
            Trainer(cfg).run("0")
        assert not no_anechoic(paths)
        marker = os.sep + "anechoic" + os.sep
        assert all(os.sep + "paired" + os.sep in p for p in paths if marker in p)


class TestMetricCalls:
    def test_one_metric_call_per_batch(self, trained_run, cfg, monkeypatch):
        t = resumed(trained_run, "0", cfg)
        made = []
        original = Trainer._metric

        def spy(self, alpha):
            m = original(self, alpha)
            made.append(m)
            return m

        monkeypatch.setattr(Trainer, "_metric", spy)
        t.run("1")
        tc = cfg.train
        per_epoch = -(-tc.samples_per_epoch // tc.batch_stage1) + 1  # D batches + probe
        assert len(made) == 1
        assert made[0].calls == tc.epochs_stage1 * per_epoch

    def test_replay_scores_are_frozen(self, trained_run, cfg):
        t = resumed(trained_run, "0", cfg)
        t.run("1")
        stored = [(e.score, e.epoch) for e in t.state.replay]
        assert stored
        assert all(0.0 <= s <= 1.0 for s, _ in stored)
        t2 = Trainer.load(os.path.join(cfg.run_dir, "latest.pt"))
        assert [(e.score, e.epoch) for e in t2.state.replay] == stored


class TestResume:
    def test_interrupted_stage1_resumes_identically(self, trained_run, cfg, tmp_path, monkeypatch):
        straight = resumed(trained_run, "0", cfg)
        straight.run("1")
        want = straight.digests()

        cfg_b = replace(cfg, run_dir=str(tmp_path / "interrupted"))
        crashing = resumed(trained_run, "0", cfg_b)
        calls = {"n": 0}
        original = Trainer.probe

        def flaky(self, metric):
            calls["n"] += 1
            if calls["n"] == 2:
                raise Interrupted("power cut")
            return original(self, metric)

        monkeypatch.setattr(Trainer, "probe", flaky)
        with pytest.raises(Interrupted):
            crashing.run("1")
        monkeypatch.setattr(Trainer, "probe", original)

        again = Trainer.load(os.path.join(cfg_b.run_dir, "latest.pt"), cfg=cfg_b)
        assert again.state.stage == "1" and again.state.epoch == 1
        again.run("1")
        got = again.digests()
        assert got["generator"] == want["generator"]
        assert got["discriminator"] == want["discriminator"]

    def test_completed_stage_reruns_from_scratch(self, trained_run, cfg):
        t = resumed(trained_run, "1", cfg)
        t.run("1")
        recs = [r for r in load_epochs(t.log_path) if r.stage == "1"]
        assert [r.epoch for r in recs] == [1, 2]


class TestShortcutAndDivergence:
    def test_shortcut_debiaser(self, trained_run, cfg):
        t = resumed(trained_run, "0", cfg)
        t.run("2", debiaser_checkpoint=stage_checkpoint(trained_run, "1"))
        assert "1" in t.state.completed and "2" in t.state.completed
        assert t.state.extra["shortcut_debiaser"].endswith("stage_1.pt")
        assert module_digest(t.model("generator")) == module_digest(
            resumed(trained_run, "1", cfg).model("generator"))

    def test_divergence_aborts_stage3(self, trained_run, cfg):
        strict = replace(cfg, train=replace(cfg.train, divergence_threshold=-1.0, divergence_patience=1))
        t = resumed(trained_run, "2", strict)
        with pytest.raises(DivergenceError):
            t.run("3")
        assert "3" not in t.state.completed

    def test_unknown_metric_in_stage3(self, trained_run, cfg):
        bad = replace(cfg, train=replace(cfg.train, metric="pesq"))
        with pytest.raises(ConfigError):
            resumed(trained_run, "2", bad).run("3")


@pytest.mark.slow
def test_descriptor_helps_visual_reverberator(trained_run):
    true_v = trained_run.reverberator_val_losses()
    shuffled = trained_run.reverberator_val_losses(permute=True)
    assert true_v["visual"] <= shuffled["visual"]
    assert torch.isfinite(torch.tensor(true_v["blind"]))
