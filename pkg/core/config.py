from __future__ import annotations

import dataclasses
import json
import logging
import os
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from dotenv import load_dotenv

from core.errors import ConfigError

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = "configs/default.json"


@dataclass
class SynthConfig:
    n_train: int = 4000
    n_val: int = 200
    n_test: int = 500
    n_paired: int = 500          # (reverberant, anechoic) pool for the dereverberator
    clips_per_room: int = 4
    descriptor_noise: float = 0.1
    rt60_range: Tuple[float, float] = (0.1, 1.2)
    absorption_range: Tuple[float, float] = (0.02, 0.6)
    dim_range: Tuple[float, float] = (2.0, 20.0)
    source_folder: Optional[str] = None
    workers: int = 1
    seed: int = 0


@dataclass
class AugmentConfig:
    beta_range: Tuple[float, float] = (0.0, 2.0)
    snr_db_range: Tuple[float, float] = (10.0, 30.0)
    noise_scale: float = 1.0
    p_invert: float = 0.5
    p_rir: float = 0.9


@dataclass
class EstimatorConfig:
    epochs: int = 30
    batch_size: int = 32
    lr: float = 1e-3
    holdout: float = 0.1
    min_samples: int = 1000
    seed: int = 0


@dataclass
class ReverbConfig:
    channels: int = 32
    blocks: int = 2
    dilations: Tuple[int, ...] = (1, 2, 4, 8)
    kernel_size: int = 3
    cond_dim: int = 8
    fusion_hidden: int = 64
    tail_seconds: float = 1.5
    loss_domain: str = "log_spectrogram"   # or "waveform"


@dataclass
class DereverbConfig:
    channels: int = 32
    blocks: int = 2
    dilations: Tuple[int, ...] = (1, 2, 4, 8, 16, 32, 64, 128, 256)
    kernel_size: int = 3
    epochs: int = 20
    batch_size: int = 8
    lr: float = 1e-3
    seed: int = 0


@dataclass
class DebiasConfig:
    lstm_hidden: int = 200
    lstm_layers: int = 2
    fc_hidden: int = 300
    d_channels: int = 15
    d_kernel: int = 5
    alpha: float = 0.7
    rt60_floor: float = 0.1
    srmr_max: float = 20.0
    replay_capacity: int = 2000
    replay_push_rate: float = 0.1


@dataclass
class TrainConfig:
    epochs_stage1: int = 20
    epochs_stage2: int = 30
    epochs_stage3: int = 24
    epochs_baseline: int = 30
    samples_per_epoch: int = 10000
    batch_stage1: int = 32
    batch_stage2: int = 4
    batch_stage3: int = 2
    lr_g: float = 2e-6
    lr_d: float = 5e-4
    lr_reverb_stage2: float = 1e-2
    lr_reverb_stage3: float = 1e-6
    target_period: int = 8
    metric: str = "combined"     # combined | residue | srmr
    divergence_threshold: float = 0.5
    divergence_patience: int = 3
    probe_size: int = 16
    seed: int = 0


@dataclass
class EvalConfig:
    mode: str = "unseen"         # seen | unseen | cross
    strata: Tuple[float, ...] = (0.2, 0.4, 0.6, 0.8, 1.0, 1.2)
    variants: Tuple[str, ...] = ("full", "blind", "input")
    metrics: Tuple[str, ...] = ("rte", "stft_err", "log_stft_err")
    distance_edges: Tuple[float, ...] = (0.5, 1.0, 2.0, 3.0, 5.0)
    batch_size: int = 8
    max_pairs: Optional[int] = None
    dump_wavs: bool = False
    seed: int = 0


@dataclass
class AppConfig:
    data_dir: str = "data"
    run_dir: str = "runs/default"
    device: str = "cpu"
    log_level: str = "INFO"
    synth: SynthConfig = field(default_factory=SynthConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    reverb: ReverbConfig = field(default_factory=ReverbConfig)
    dereverb: DereverbConfig = field(default_factory=DereverbConfig)
    debias: DebiasConfig = field(default_factory=DebiasConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @staticmethod
    def from_dict(d: Dict[str, Any]) -> "AppConfig":
        return _build(AppConfig, d, prefix="")


def _coerce(value: Any, default: Any, key: str) -> Any:
    if isinstance(default, tuple) and isinstance(value, (list, tuple)):
        return tuple(value)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected a boolean, got {value!r}")
        return value
    if isinstance(default, int) and not isinstance(default, bool) and isinstance(value, float) and value.is_integer():
        return int(value)
    if isinstance(default, float) and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    return value


def _build(cls, d: Dict[str, Any], prefix: str):
    if not isinstance(d, dict):
        raise ConfigError(f"{prefix or 'config'}: expected an object")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(d) - set(known))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(prefix + k for k in unknown)}")

    base = cls()
    kwargs: Dict[str, Any] = {}
    for name, f in known.items():
        if name not in d:
            continue
        default = getattr(base, name)
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), d[name], prefix=f"{prefix}{name}.")
        else:
            kwargs[name] = _coerce(d[name], default, prefix + name)
    return cls(**kwargs)


def load_config(path: Optional[str] = None) -> AppConfig:
    """
    JSON file -> AppConfig. Missing file at the default path falls back to defaults;
    an explicitly requested missing file is an error.
    Environment (VAM_DATA_DIR, VAM_RUN_DIR, VAM_DEVICE, VAM_LOG_LEVEL) overrides the file.
    """
    load_dotenv()
    explicit = path is not None
    path = path or os.getenv("VAM_CONFIG", DEFAULT_CONFIG_PATH)

    if os.path.exists(path):
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file is not valid JSON: {path}: {e}")
        cfg = AppConfig.from_dict(raw)
    elif explicit:
        raise ConfigError(f"config file not found: {path}")
    else:
        cfg = AppConfig()

    for env_key, attr in (
        ("VAM_DATA_DIR", "data_dir"),
        ("VAM_RUN_DIR", "run_dir"),
        ("VAM_DEVICE", "device"),
        ("VAM_LOG_LEVEL", "log_level"),
    ):
        v = os.getenv(env_key, "").strip()
        if v:
            setattr(cfg, attr, v)
    return cfg


def parse_override(text: str) -> Tuple[str, Any]:
    if "=" not in text:
        raise ConfigError(f"override must look like section.key=value: {text!r}")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def apply_overrides(cfg: AppConfig, overrides: List[str]) -> AppConfig:
    for text in overrides or []:
        key, value = parse_override(text)
        target: Any = cfg
        parts = key.split(".")
        for p in parts[:-1]:
            if not hasattr(target, p) or not dataclasses.is_dataclass(getattr(target, p)):
                raise ConfigError(f"unknown config section in override: {key}")
            target = getattr(target, p)
        leaf = parts[-1]
        if not dataclasses.is_dataclass(target) or leaf not in {f.name for f in dataclasses.fields(target)}:
            raise ConfigError(f"unknown config key in override: {key}")
        setattr(target, leaf, _coerce(value, getattr(target, leaf), key))
    return cfg


def setup_logging(level: str = "INFO") -> None:
    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def resolve_device(name: str):
    import torch

    if name == "auto":
        return torch.device("cuda" if torch.cuda.is_available() else "cpu")
    if name.startswith("cuda") and not torch.cuda.is_available():
        logger.warning("CUDA requested but unavailable, falling back to cpu")
        return torch.device("cpu")
    return torch.device(name)
