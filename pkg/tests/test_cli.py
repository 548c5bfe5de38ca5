from __future__ import annotations

import io
import json
import os

import numpy as np
import pandas as pd
import pytest

from app import EXIT_ERROR, EXIT_OK, EXIT_USAGE, METRICS_COLUMNS, main
from core.audio_io import read_wav, write_wav
from core.dsp import Waveform
from synth.data_loader import load_split


def write_config(cfg, path) -> str:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(cfg.to_dict(), f)
    return str(path)


def last_json(text: str) -> dict:
    return json.loads(text.strip().splitlines()[-1])


@pytest.fixture
def run_config(trained_run, tmp_path):
    return write_config(trained_run.cfg, tmp_path / "run.json")


class TestUsage:
    def test_missing_subcommand(self, capsys):
        assert main([]) == EXIT_USAGE
        assert last_json(capsys.readouterr().err)["error"] == "usage_error"

    def test_missing_required_flag(self, capsys):
        assert main(["train"]) == EXIT_USAGE
        assert last_json(capsys.readouterr().err)["error"] == "usage_error"

    def test_metrics_needs_two_wavs(self, run_config, dataset_dir, capsys):
        wav = os.path.join(dataset_dir, load_split(dataset_dir, "test")[0].wav_path)
        assert main(["--config", run_config, "metrics", "--wav", wav]) == EXIT_USAGE
        assert last_json(capsys.readouterr().err)["error"] == "usage_error"

    def test_bad_override(self, capsys):
        assert main(["--set", "nope.key=1", "verify", "--group", "formulas"]) == EXIT_ERROR
        assert last_json(capsys.readouterr().err)["error"] == "config_error"

    def test_missing_config_file(self, tmp_path, capsys):
        assert main(["--config", str(tmp_path / "absent.json"), "verify"]) == EXIT_ERROR
        assert last_json(capsys.readouterr().err)["error"] == "config_error"


class TestCommands:
    def test_infer_missing_source(self, run_config, tmp_path, capsys):
        out = tmp_path / "out.wav"
        code = main(["--config", run_config, "infer", "--source", str(tmp_path / "missing.wav"),
                     "--room", "test_000000", "--out", str(out)])
        assert code == EXIT_ERROR
        assert last_json(capsys.readouterr().err)["error"] == "file_not_found"
        assert not out.exists()

    def test_infer_writes_matching_length(self, run_config, dataset_dir, tmp_path, capsys):
        e = load_split(dataset_dir, "test")[0]
        src = os.path.join(dataset_dir, e.source_path)
        out = tmp_path / "out.wav"
        code = main(["--config", run_config, "infer", "--source", src, "--room", e.room_id,
                     "--out", str(out), "--anechoic"])
        assert code == EXIT_OK
        assert last_json(capsys.readouterr().out)["anechoic"] is True
        assert len(read_wav(str(out))) == len(read_wav(src))

    def test_infer_rejects_long_source(self, run_config, tmp_path, capsys):
        src = tmp_path / "long.wav"
        write_wav(str(src), Waveform(samples=0.1 * np.sin(np.arange(50000) * 0.05)))
        out = tmp_path / "out.wav"
        code = main(["--config", run_config, "infer", "--source", str(src), "--room", "test_000000",
                     "--out", str(out)])
        assert code == EXIT_ERROR
        err = last_json(capsys.readouterr().err)
        assert err["error"] == "contract_error"
        assert err["details"]["limit"] == "40960"
        assert not out.exists()

    def test_infer_unknown_room(self, run_config, dataset_dir, tmp_path, capsys):
        src = os.path.join(dataset_dir, load_split(dataset_dir, "test")[0].source_path)
        code = main(["--config", run_config, "infer", "--source", src, "--room", "nowhere",
                     "--out", str(tmp_path / "out.wav")])
        assert code == EXIT_ERROR
        assert last_json(capsys.readouterr().err)["error"] == "config_error"

    def test_metrics_on_identical_wavs(self, run_config, dataset_dir, capsys):
        wav = os.path.join(dataset_dir, load_split(dataset_dir, "test")[0].wav_path)
        assert main(["--config", run_config, "metrics", "--wav", wav, "--wav", wav]) == EXIT_OK
        table = pd.read_csv(io.StringIO(capsys.readouterr().out))
        assert list(table.columns) == METRICS_COLUMNS
        row = table.iloc[0]
        assert row["rt60_a"] == row["rt60_b"] > 0
        assert row["rte"] == 0.0 and row["stft_err"] == 0.0 and row["log_stft_err"] == 0.0

    def test_eval_without_checkpoint(self, cfg, tmp_path, capsys):
        config = write_config(cfg, tmp_path / "fresh.json")
        assert main(["--config", config, "eval", "--mode", "unseen"]) == EXIT_ERROR
        assert last_json(capsys.readouterr().err)["error"] == "staged_dependency_error"

    def test_eval_and_recompute(self, run_config, tmp_path, capsys):
        out = str(tmp_path / "eval")
        assert main(["--config", run_config, "eval", "--mode", "cross", "--out", out,
                     "--variants", "full", "--dump-wavs"]) == EXIT_OK
        summary = last_json(capsys.readouterr().out)
        assert summary["mode"] == "cross" and set(summary["variants"]) == {"full"}

        assert main(["--config", run_config, "recompute-rte", out]) == EXIT_OK
        again = pd.read_csv(io.StringIO(capsys.readouterr().out))
        assert again["variant"].tolist() == ["full"]
        assert again["rte"].iloc[0] == pytest.approx(summary["variants"]["full"]["rte"], abs=1e-4)

    def test_verify_formulas(self, capsys):
        assert main(["verify", "--group", "formulas"]) == EXIT_OK
        rep = last_json(capsys.readouterr().out)
        assert rep["ok"] is True
        assert any(item["name"].startswith("structure.") for item in rep["items"])
