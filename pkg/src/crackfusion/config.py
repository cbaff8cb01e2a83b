"""Pipeline configuration: dataclass sections read from one TOML document."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .dataio import SignalModel, SynthConfig
from .errors import ValidationError
from .mlp import TrainConfig
from .pf import DEFAULT_NOISE_GRID, PFConfig


@dataclass(frozen=True)
class PathsConfig:
    dataset: str = "dataset"  # relative paths resolve against --out
    model: str = "model.json"


@dataclass(frozen=True)
class DspConfig:
    energy_fraction: float = 0.95
    template_energy: float = 0.98
    entropy_bins: int = 64

    def __post_init__(self):
        if not 0 < self.energy_fraction < 1 or not 0 < self.template_energy < 1:
            raise ValidationError("energy fractions must lie in (0, 1)")
        if self.entropy_bins < 2:
            raise ValidationError("entropy_bins must be >= 2")


@dataclass(frozen=True)
class FractureConfig:
    grid_points: int = 20
    a_min: float = 0.1
    fit_width: bool = True
    b_mm: float | None = None  # fixed half-width; skips the width fit

    def __post_init__(self):
        if self.grid_points < 3:
            raise ValidationError("grid_points must be >= 3")
        if not self.a_min > 0:
            raise ValidationError("a_min must be positive")
        if self.b_mm is not None and not self.b_mm > 0:
            raise ValidationError("b_mm must be positive")


@dataclass(frozen=True)
class TuneConfig:
    enabled: bool = True
    n_observed: int = 4
    grid: tuple[tuple[float, float], ...] = DEFAULT_NOISE_GRID
    n_particles: int = 300  # cheaper ensembles while scanning the grid

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple((float(w), float(v)) for w, v in self.grid))
        if not self.grid:
            raise ValidationError("empty noise grid")
        if self.n_observed < 1:
            raise ValidationError("n_observed must be >= 1")


@dataclass(frozen=True)
class PredictConfig:
    refit_constant_amplitude: bool = True
    refit_variable_amplitude: bool = False


@dataclass(frozen=True)
class PipelineConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    simulate: SynthConfig = field(default_factory=SynthConfig)
    dsp: DspConfig = field(default_factory=DspConfig)
    fracture: FractureConfig = field(default_factory=FractureConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    pf: PFConfig = field(default_factory=PFConfig)
    tune: TuneConfig = field(default_factory=TuneConfig)
    predict: PredictConfig = field(default_factory=PredictConfig)


_SECTIONS = {f.name: f.default_factory for f in dataclasses.fields(PipelineConfig)}


def _build(cls, values: dict, where: str):
    if not isinstance(values, dict):
        raise ValidationError(f"[{where}] must be a table")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise ValidationError(f"[{where}] unknown keys: {', '.join(unknown)}")
    kwargs = {}
    for k, v in values.items():
        if cls is SynthConfig and k == "signals":
            v = _build(SignalModel, v, f"{where}.signals")
        elif isinstance(v, list):
            v = tuple(tuple(x) if isinstance(x, list) else x for x in v)
        kwargs[k] = v
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ValidationError(f"[{where}] {exc}") from None


def config_from_dict(doc: dict) -> PipelineConfig:
    unknown = sorted(set(doc) - set(_SECTIONS))
    if unknown:
        raise ValidationError(f"unknown config sections: {', '.join(unknown)}")
    parts = {}
    for name, factory in _SECTIONS.items():
        cls = type(factory())
        parts[name] = _build(cls, doc.get(name, {}), name)
    return PipelineConfig(**parts)


def load_config(path: str | Path | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"config file not found: {p}")
    try:
        doc = tomllib.loads(p.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ValidationError(f"config is not valid TOML: {exc}") from None
    return config_from_dict(doc)
