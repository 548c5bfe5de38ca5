from __future__ import annotations

import os
import sys

import numpy as np
import pytest

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

from core.config import (  # noqa: E402
    AppConfig,
    DebiasConfig,
    DereverbConfig,
    EstimatorConfig,
    EvalConfig,
    ReverbConfig,
    SynthConfig,
    TrainConfig,
)


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run training-scale tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: training-scale behavioural check (needs --runslow)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def tiny_config(data_dir: str, run_dir: str) -> AppConfig:
    """Small enough to render and train every stage in seconds on a CPU."""
    return AppConfig(
        data_dir=data_dir,
        run_dir=run_dir,
        device="cpu",
        log_level="WARNING",
        synth=SynthConfig(n_train=8, n_val=4, n_test=6, n_paired=8, clips_per_room=2, seed=7),
        estimator=EstimatorConfig(epochs=1, batch_size=8, min_samples=8, holdout=0.25),
        reverb=ReverbConfig(channels=4, blocks=1, dilations=(1, 2), fusion_hidden=8, tail_seconds=0.2),
        dereverb=DereverbConfig(channels=4, blocks=1, dilations=(1, 2), epochs=1, batch_size=4),
        debias=DebiasConfig(lstm_hidden=8, lstm_layers=1, fc_hidden=16, d_channels=3, replay_push_rate=1.0),
        train=TrainConfig(
            epochs_stage1=2, epochs_stage2=1, epochs_stage3=2, epochs_baseline=1,
            samples_per_epoch=4, batch_stage1=2, batch_stage2=2, batch_stage3=2,
            target_period=2, probe_size=2, divergence_threshold=10.0,
        ),
        eval=EvalConfig(batch_size=4, max_pairs=4),
    )


def bench_config(data_dir: str, run_dir: str) -> AppConfig:
    """Large enough for the learned components to show their effect; minutes on a CPU."""
    return AppConfig(
        data_dir=data_dir,
        run_dir=run_dir,
        device="cpu",
        log_level="WARNING",
        synth=SynthConfig(n_train=240, n_val=24, n_test=48, n_paired=120, clips_per_room=4, seed=11),
        estimator=EstimatorConfig(epochs=15, batch_size=16, min_samples=400, holdout=0.1),
        reverb=ReverbConfig(channels=8, blocks=1, dilations=(1, 2, 4, 8), fusion_hidden=32, tail_seconds=1.2),
        dereverb=DereverbConfig(channels=8, blocks=1, dilations=(1, 2, 4, 8, 16, 32), epochs=8, batch_size=8),
        debias=DebiasConfig(lstm_hidden=32, lstm_layers=1, fc_hidden=64, d_channels=8, replay_push_rate=0.5),
        train=TrainConfig(
            epochs_stage1=4, epochs_stage2=6, epochs_stage3=4, epochs_baseline=4,
            samples_per_epoch=64, batch_stage1=8, batch_stage2=4, batch_stage3=4,
            lr_g=1e-3, target_period=2, probe_size=16, divergence_threshold=10.0,
        ),
        eval=EvalConfig(batch_size=8, max_pairs=48),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def dataset_dir(tmp_path_factory):
    """A rendered tiny benchmark shared by the whole session (read-only)."""
    from synth.dataset import build_dataset

    data_dir = str(tmp_path_factory.mktemp("data"))
    build_dataset(tiny_config(data_dir, "").synth, data_dir)
    return data_dir


@pytest.fixture
def cfg(dataset_dir, tmp_path):
    return tiny_config(dataset_dir, str(tmp_path / "run"))


@pytest.fixture(scope="session")
def trained_run(dataset_dir, tmp_path_factory):
    """Every stage plus the augmented baseline, trained once. Do not mutate."""
    from training.trainer import Trainer

    run_dir = str(tmp_path_factory.mktemp("run"))
    t = Trainer(tiny_config(dataset_dir, run_dir))
    t.run("all")
    t.run("baseline")
    return t


@pytest.fixture
def system(trained_run):
    from evaluation.infer import System

    return System.from_trainer(trained_run)


@pytest.fixture(scope="session")
def bench_dir(tmp_path_factory):
    from synth.dataset import build_dataset

    data_dir = str(tmp_path_factory.mktemp("bench_data"))
    build_dataset(bench_config(data_dir, "").synth, data_dir)
    return data_dir


@pytest.fixture(scope="session")
def bench_run(bench_dir, tmp_path_factory):
    """Every stage plus the baseline on the bench data. Checkpoints stay in run_dir; do not mutate."""
    from training.trainer import Trainer

    t = Trainer(bench_config(bench_dir, str(tmp_path_factory.mktemp("bench_run"))))
    t.run("all")
    t.run("baseline")
    return t


@pytest.fixture(scope="session")
def bench_system(bench_run):
    from evaluation.infer import System

    return System.from_trainer(bench_run)
