"""
Command-line entry point.

    python app.py synth-data
    python app.py train --stage {0,1,2,3,all,baseline} [--debiaser-checkpoint PATH]
    python app.py eval --mode {seen,unseen,cross} [--checkpoint PATH] [--dump-wavs] [--reports]
    python app.py infer --source WAV (--room ID | --descriptor FILE) --out WAV [--anechoic]   (sources up to 2.56 s)
    python app.py metrics --wav A --wav B
    python app.py recompute-rte EVAL_DIR
    python app.py verify [--group dsp|formulas|gradients|all]

Global flags: --config PATH, --set section.key=value (repeatable).
Errors are printed to stderr as one JSON line; exit 1 for domain errors, 2 for usage errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd

from core.config import AppConfig, apply_overrides, load_config, resolve_device, setup_logging
from core.errors import ConfigError, ContractError, StagedDependencyError, VamError

logger = logging.getLogger("app")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2

METRICS_COLUMNS = ["rt60_a", "rt60_b", "rte", "stft_err", "log_stft_err"]


class UsageError(Exception):
    pass


class CliParser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(message)


def emit_error(code: str, message: str, **details: Any) -> None:
    d: Dict[str, Any] = {"error": code, "message": message}
    if details:
        d["details"] = {k: str(v) for k, v in details.items()}
    print(json.dumps(d), file=sys.stderr)


def emit(obj: Dict[str, Any]) -> None:
    print(json.dumps(obj, sort_keys=True, default=str))


def build_parser() -> CliParser:
    p = CliParser(prog="app.py", description="Self-supervised visual acoustic matching")
    p.add_argument("--config", default=None, help="JSON config file (default: $VAM_CONFIG or configs/default.json)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config value, e.g. train.epochs_stage1=2")
    sub = p.add_subparsers(dest="command", parser_class=CliParser)
    sub.required = True

    sub.add_parser("synth-data", help="render the synthetic dataset")

    t = sub.add_parser("train", help="run a training stage")
    t.add_argument("--stage", required=True, choices=["0", "1", "2", "3", "all", "baseline"])
    t.add_argument("--debiaser-checkpoint", default=None, help="stage 2 only: take G from this checkpoint")

    e = sub.add_parser("eval", help="evaluate a trained system")
    e.add_argument("--mode", default=None, choices=["seen", "unseen", "cross"])
    e.add_argument("--checkpoint", default=None)
    e.add_argument("--out", default=None, help="output directory (default: RUN_DIR/eval_MODE)")
    e.add_argument("--variants", nargs="+", default=None, choices=["full", "blind", "input", "baseline"])
    e.add_argument("--dump-wavs", action="store_true")
    e.add_argument("--reports", action="store_true", help="also write debias / srmr / residue-probe reports")

    i = sub.add_parser("infer", help="re-synthesise one clip for a target room")
    i.add_argument("--source", required=True)
    target = i.add_mutually_exclusive_group(required=True)
    target.add_argument("--room", default=None, help="sample id or room id from a manifest")
    target.add_argument("--descriptor", default=None, help="JSON file holding the descriptor vector")
    i.add_argument("--out", required=True)
    i.add_argument("--anechoic", action="store_true", help="source is dry: skip dereverberation and G")
    i.add_argument("--variant", default="full", choices=["full", "blind", "input", "baseline"])
    i.add_argument("--checkpoint", default=None)

    m = sub.add_parser("metrics", help="RTE and spectrogram errors between two WAVs")
    m.add_argument("--wav", action="append", required=True)
    m.add_argument("--checkpoint", default=None)

    r = sub.add_parser("recompute-rte", help="rebuild per-variant RTE from dumped evaluation WAVs")
    r.add_argument("eval_dir")
    r.add_argument("--checkpoint", default=None)

    v = sub.add_parser("verify", help="run oracle checks")
    v.add_argument("--group", action="append", default=None, choices=["all", "dsp", "formulas", "gradients"])
    return p


def _checkpoint(cfg: AppConfig, path: Optional[str]) -> str:
    path = path or os.path.join(cfg.run_dir, "latest.pt")
    if not os.path.exists(path):
        raise StagedDependencyError(f"no checkpoint at {path}; train first")
    return path


def _trainer(cfg: AppConfig, path: Optional[str]):
    from training.trainer import Trainer

    return Trainer.load(_checkpoint(cfg, path), cfg=cfg, device=resolve_device(cfg.device))


def _system(cfg: AppConfig, path: Optional[str]):
    from evaluation.infer import System

    return System.from_trainer(_trainer(cfg, path))


def cmd_synth_data(cfg: AppConfig, args) -> int:
    from synth.dataset import build_dataset

    manifests = build_dataset(cfg.synth, cfg.data_dir)
    emit({"data_dir": cfg.data_dir, "counts": {k: len(v) for k, v in manifests.items()}})
    return EXIT_OK


def cmd_train(cfg: AppConfig, args) -> int:
    from training.trainer import open_run

    trainer = open_run(cfg, resolve_device(cfg.device))
    trainer.run(args.stage, debiaser_checkpoint=args.debiaser_checkpoint)
    emit({"run_dir": cfg.run_dir, "completed": trainer.state.completed})
    return EXIT_OK


def cmd_eval(cfg: AppConfig, args) -> int:
    from evaluation.evaluate import evaluate
    from evaluation.reports import debias_report, residue_probe

    mode = args.mode or cfg.eval.mode
    if args.dump_wavs:
        cfg.eval.dump_wavs = True
    out = args.out or os.path.join(cfg.run_dir, f"eval_{mode}")
    system = _system(cfg, args.checkpoint)
    reports = evaluate(system, cfg, out, mode=mode, variants=args.variants)
    if args.reports:
        debias_report(system, cfg, out)
        if system.r_blind is not None:
            residue_probe(system, cfg, out)
    emit({"out": out, "mode": mode, "variants": {k: r.to_row(k, mode) for k, r in reports.items()}})
    return EXIT_OK


def _read_descriptor(path: str) -> List[float]:
    from memory.schema import DESCRIPTOR_DIM

    with open(path, "r", encoding="utf-8") as f:
        raw = json.load(f)
    values = raw.get("descriptor") if isinstance(raw, dict) else raw
    if not isinstance(values, list) or len(values) != DESCRIPTOR_DIM:
        raise ConfigError(f"descriptor file must hold {DESCRIPTOR_DIM} numbers", path=path)
    return [float(x) for x in values]


def _room_descriptor(cfg: AppConfig, key: str) -> List[float]:
    from synth.data_loader import find_entry, load_split

    for split in ("test", "val", "train"):
        try:
            e = find_entry(load_split(cfg.data_dir, split), key)
        except ConfigError:
            continue
        if e is not None:
            return list(e.descriptor)
    raise ConfigError(f"no manifest entry or room named {key!r} under {cfg.data_dir}")


def cmd_infer(cfg: AppConfig, args) -> int:
    from core.audio_io import read_wav, write_wav
    from core.dsp import CLIP_SAMPLES, SAMPLE_RATE, Waveform, fit_length
    from evaluation.infer import infer

    if not os.path.exists(args.source):
        raise FileNotFoundError(args.source)
    source = read_wav(args.source)
    if len(source) > CLIP_SAMPLES:
        raise ContractError(
            f"source is {len(source)} samples; infer takes at most {CLIP_SAMPLES} "
            f"({CLIP_SAMPLES / SAMPLE_RATE:.2f} s), trim or split it first",
            samples=len(source), limit=CLIP_SAMPLES,
        )
    v_t = _read_descriptor(args.descriptor) if args.descriptor else _room_descriptor(cfg, args.room)
    system = _system(cfg, args.checkpoint)
    out = infer(fit_length(source.samples, CLIP_SAMPLES), v_t, system, anechoic=args.anechoic, variant=args.variant)
    write_wav(args.out, Waveform(samples=out.samples[: len(source)]))
    emit({"out": args.out, "variant": args.variant, "anechoic": args.anechoic})
    return EXIT_OK


def cmd_metrics(cfg: AppConfig, args) -> int:
    from core.audio_io import read_wav
    from core.dsp import CLIP_SAMPLES, fit_length
    from core.metrics import log_stft_error, stft_error
    from models.rt60_estimator import estimate_rt60

    if len(args.wav) != 2:
        raise UsageError("metrics needs exactly two --wav arguments")
    for p in args.wav:
        if not os.path.exists(p):
            raise FileNotFoundError(p)
    a, b = (fit_length(read_wav(p).samples, CLIP_SAMPLES) for p in args.wav)
    estimator = _trainer(cfg, args.checkpoint).model("estimator")
    estimator.eval()
    rt_a, rt_b = estimate_rt60(estimator, a), estimate_rt60(estimator, b)
    row = {"rt60_a": rt_a, "rt60_b": rt_b, "rte": abs(rt_a - rt_b),
           "stft_err": stft_error(a, b), "log_stft_err": log_stft_error(a, b)}
    pd.DataFrame([row], columns=METRICS_COLUMNS).to_csv(sys.stdout, index=False)
    return EXIT_OK


def cmd_recompute_rte(cfg: AppConfig, args) -> int:
    from evaluation.reports import recompute_rte

    estimator = _trainer(cfg, args.checkpoint).model("estimator")
    estimator.eval()
    recompute_rte(args.eval_dir, estimator).to_csv(sys.stdout, index=False)
    return EXIT_OK


def cmd_verify(cfg: AppConfig, args) -> int:
    from core.verify_engine import verify

    rep = verify(args.group, cfg)
    emit(rep.to_dict())
    for item in rep.failed:
        logger.error("%s: %s", item.name, item.message)
    return EXIT_OK if rep.ok else EXIT_ERROR


COMMANDS = {
    "synth-data": cmd_synth_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "infer": cmd_infer,
    "metrics": cmd_metrics,
    "recompute-rte": cmd_recompute_rte,
    "verify": cmd_verify,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        emit_error("usage_error", str(e))
        return EXIT_USAGE
    except SystemExit as e:  # --help
        return int(e.code or 0)

    try:
        cfg = apply_overrides(load_config(args.config), args.overrides)
        setup_logging(cfg.log_level)
        return COMMANDS[args.command](cfg, args)
    except UsageError as e:
        emit_error("usage_error", str(e))
        return EXIT_USAGE
    except VamError as e:
        d = e.to_dict()
        emit_error(d["error"], d["message"], **e.details)
        return EXIT_ERROR
    except FileNotFoundError as e:
        emit_error("file_not_found", f"no such file: {e.filename or e}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
