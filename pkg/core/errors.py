from __future__ import annotations

from typing import Any, Dict


class VamError(Exception):
    """
    Base class for every domain error raised by the package.
    `code` is stable and machine-readable (the CLI prints it).
    """
    code: str = "vam_error"

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details: Dict[str, Any] = details

    def to_dict(self) -> Dict[str, Any]:
        d: Dict[str, Any] = {"error": self.code, "message": self.message}
        if self.details:
            d["details"] = {k: str(v) for k, v in self.details.items()}
        return d


class ConfigError(VamError):
    code = "config_error"


class LengthError(VamError):
    code = "length_error"


class ContractError(VamError):
    code = "contract_error"


class ShapeError(VamError):
    code = "shape_error"


class EstimationError(VamError):
    code = "estimation_error"


class MetricError(VamError):
    code = "metric_error"


class TrainingError(VamError):
    code = "training_error"


class StagedDependencyError(VamError):
    code = "staged_dependency_error"


class DivergenceError(TrainingError):
    code = "divergence_error"


class BuildError(VamError):
    code = "build_error"


class CheckpointVersionError(VamError):
    code = "checkpoint_version_error"


class UnsupportedMetricError(VamError):
    code = "unsupported_metric"


class AudioFormatError(VamError):
    code = "audio_format_error"
