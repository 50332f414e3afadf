"""Scenario configuration: a single JSON file fully determines an experiment.

Angles are degrees in the file and radians everywhere else.  Unknown keys
are rejected.  :func:`config_hash` is a sha256 over the canonical JSON of
the validated model (defaults filled in), excluding the output directory
and the noise seed; the seed is recorded next to the hash instead.
"""
from __future__ import annotations

import hashlib
import json
import math
from importlib import resources
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator


class ConfigError(ValueError):
    """Raised for unreadable or invalid configuration files (exit code 2)."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class WaveformConfig(_Strict):
    f_c_hz: float = 240e9
    bandwidth_hz: float = 10e9
    chirp_s: float = 100e-6
    n_freq: int = 128


class SceneConfig(_Strict):
    radar: tuple[float, float] = (0.0, 4.0)
    surface1: tuple[float, float] = (-0.1, 0.0)
    surface2: tuple[float, float] = (0.1, 0.0)


class SurfacesConfig(_Strict):
    n_elements: int = 256
    spacing_m: Optional[float] = None  # None: half a wavelength at the design frequency
    steer_deg: tuple[float, float] = (15.0, 75.0)
    design_freq_hz: Optional[float] = None  # None: the carrier


class TargetConfig(_Strict):
    theta_deg: Optional[float] = None
    s1_m: Optional[float] = None
    x_m: Optional[float] = None
    y_m: Optional[float] = None
    rcs: Union[float, Literal["uniform"]] = 1.0

    @model_validator(mode="after")
    def _one_placement(self):
        polar = self.theta_deg is not None and self.s1_m is not None
        cart = self.x_m is not None and self.y_m is not None
        partial = [v is not None for v in (self.theta_deg, self.s1_m, self.x_m, self.y_m)]
        if polar == cart or sum(partial) != 2:
            raise ValueError("give either theta_deg+s1_m or x_m+y_m")
        if isinstance(self.rcs, float) and not self.rcs >= 0:
            raise ValueError("rcs must be >= 0")
        return self


class NoiseConfig(_Strict):
    snr_db: Union[float, Literal["inf"]] = 20.0
    seed: int = 0

    @property
    def snr(self) -> float:
        return math.inf if self.snr_db == "inf" else float(self.snr_db)


class EstimationConfig(_Strict):
    angle_step_deg: float = Field(0.5, gt=0, lt=90)
    solver: Literal["lasso", "omp"] = "lasso"
    lambda_ratio: float = Field(0.1, gt=0, le=1)
    mode: Literal["joint", "independent"] = "joint"
    refine: bool = True
    max_iter: int = Field(5000, ge=1)
    tol: float = Field(1e-10, gt=0)
    brute_budget: int = Field(5_000_000, ge=1)
    amplitude_refit: bool = False
    branch: Literal["near", "far"] = "near"


class CoherenceConfig(_Strict):
    angle_step_deg: float = Field(0.5, gt=0, lt=90)  # grid of the exported matrices
    region_step_deg: float = Field(0.1, gt=0, lt=90)  # finer grid for the high-gain region score
    range_m: Optional[float] = None  # None: range of the first target
    bandwidths_hz: list[float] = Field(default_factory=lambda: [10e9, 60e9], min_length=1)
    region_db: Optional[float] = Field(3.0, gt=0)


class ScenarioConfig(_Strict):
    waveform: WaveformConfig = Field(default_factory=WaveformConfig)
    scene: SceneConfig = Field(default_factory=SceneConfig)
    surfaces: SurfacesConfig = Field(default_factory=SurfacesConfig)
    targets: list[TargetConfig] = Field(default_factory=list)
    noise: NoiseConfig = Field(default_factory=NoiseConfig)
    estimation: EstimationConfig = Field(default_factory=EstimationConfig)
    coherence: CoherenceConfig = Field(default_factory=CoherenceConfig)
    output_dir: str = "out"

    @field_validator("output_dir")
    @classmethod
    def _nonempty(cls, v):
        if not v:
            raise ValueError("output_dir must not be empty")
        return v


def canonical_json(cfg: ScenarioConfig) -> str:
    data = cfg.model_dump(mode="json", exclude={"output_dir": True, "noise": {"seed"}})
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def config_hash(cfg: ScenarioConfig) -> str:
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()[:16]


def builtin_configs() -> list[str]:
    root = resources.files("thzsense") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def resolve_path(name_or_path) -> Path:
    """A file path, or the name of a config shipped with the package."""
    p = Path(name_or_path)
    if p.exists():
        return p
    stem = p.name[:-5] if p.name.endswith(".json") else p.name
    if stem in builtin_configs():
        return Path(str(resources.files("thzsense") / "configs" / f"{stem}.json"))
    raise ConfigError(f"{name_or_path}: no such file or builtin config (builtins: {', '.join(builtin_configs())})")


def _locate(text: str, loc) -> str:
    """Best-effort ``line:col`` of the last key in a pydantic error location."""
    pos = 0
    found = None
    for part in loc:
        if isinstance(part, str):
            i = text.find(f'"{part}"', pos)
            if i < 0:
                break
            pos, found = i, i
    if found is None:
        return ""
    line = text.count("\n", 0, found) + 1
    col = found - (text.rfind("\n", 0, found) + 1) + 1
    return f"{line}:{col}"


def parse_config(text: str, source: str = "<config>") -> ScenarioConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: top level must be a JSON object")
    try:
        return ScenarioConfig.model_validate(raw)
    except ValidationError as exc:
        lines = []
        for err in exc.errors():
            where = _locate(text, err["loc"])
            path = ".".join(str(p) for p in err["loc"]) or "<root>"
            lines.append(f"{source}:{where + ': ' if where else ' '}{path}: {err['msg']}")
        raise ConfigError("\n".join(lines)) from None


def load_config(name_or_path) -> ScenarioConfig:
    path = resolve_path(name_or_path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return parse_config(text, str(path))
