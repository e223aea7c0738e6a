"""JSON run configuration with full defaults.

Every section is optional; anything omitted falls back to the niobium
cavity constants and the default pipeline and fit options. Unknown keys
are rejected with their dotted location.
"""

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

from .exceptions import ConfigError, VortexLossError
from .fitting import FitConfig
from .io import read_json
from .model import MaterialParams
from .pipeline import DEFAULT_WINDOW, Q1_DEFAULT

OUTPUT_DIR_ENV = "VORTEXLOSS_OUTPUT_DIR"


@dataclass
class PipelineOptions:
    window: int = DEFAULT_WINDOW
    q1: float = Q1_DEFAULT
    cal: float = 1.0
    temp_tol_k: float = 0.01
    bins_per_decade: int = 1
    interpolate: bool = False


@dataclass
class RunConfig:
    material: MaterialParams = field(default_factory=MaterialParams)
    pipeline: PipelineOptions = field(default_factory=PipelineOptions)
    fit: FitConfig = field(default_factory=FitConfig)
    output_dir: str = None

    def resolve_output(self, path):
        """Place relative output paths under the configured output directory.

        The ``VORTEXLOSS_OUTPUT_DIR`` environment variable takes precedence
        over ``output_dir`` from the file.
        """
        path = Path(path)
        base = os.environ.get(OUTPUT_DIR_ENV) or self.output_dir
        if base and not path.is_absolute():
            return Path(base) / path
        return path


def build_section(cls, data, where):
    """Instantiate dataclass ``cls`` from ``data``, rejecting unknown keys."""
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{where}.{unknown[0]}: unknown key")
    try:
        return cls(**data)
    except (TypeError, ValueError, VortexLossError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _fit_section(data, where):
    if isinstance(data, dict) and isinstance(data.get("bounds"), dict):
        data = dict(data)
        bounds = {}
        for key, value in data["bounds"].items():
            if not (isinstance(value, (list, tuple)) and len(value) == 2):
                raise ConfigError(f"{where}.bounds.{key}: expected [lower, upper]")
            bounds[key] = tuple(float(v) for v in value)
        data["bounds"] = {**FitConfig().bounds, **bounds}
    return build_section(FitConfig, data, where)


def parse_run_config(data, where="config"):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = sorted(set(data) - {"material", "pipeline", "fit", "output_dir"})
    if unknown:
        raise ConfigError(f"{where}.{unknown[0]}: unknown key")
    return RunConfig(
        material=build_section(MaterialParams, data.get("material"), f"{where}.material"),
        pipeline=build_section(PipelineOptions, data.get("pipeline"), f"{where}.pipeline"),
        fit=_fit_section(data.get("fit"), f"{where}.fit"),
        output_dir=data.get("output_dir"),
    )


def load_run_config(path=None):
    if path is None:
        return RunConfig()
    try:
        data = read_json(path)
    except VortexLossError as exc:
        raise ConfigError(str(exc)) from None
    return parse_run_config(data, where=str(path))
