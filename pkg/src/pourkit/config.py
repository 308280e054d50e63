"""Experiment configuration: a YAML document with units spelled out in keys.

Angles are degrees in the file and in these dataclasses; ``controller()``
is the single place they become radians. Mesh paths are relative to the
config file unless they start with ``builtin:`` (bundled meshes).
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from .controller import ControllerConfig
from .errors import ConfigError
from .geometry import CameraModel
from .hmm import HistogramSpec
from .observation import ConfusionTable

BUILTIN = "builtin:"


@dataclass
class MeshSection:
    source: str = "builtin:source_cup"
    targets: dict = field(
        default_factory=lambda: {
            "cylinder": "builtin:cylinder",
            "frustum": "builtin:frustum",
            "box": "builtin:box",
        }
    )


@dataclass
class CameraSection:
    width_px: int = 96
    height_px: int = 96
    fx_px: float = 240.0
    fy_px: float = 240.0
    eye_m: list = field(default_factory=lambda: [0.0, -0.175, 0.363])
    look_at_m: list = field(default_factory=lambda: [0.0, 0.0, 0.06])


@dataclass
class HistogramSection:
    bins: int = 100
    v_max_ml: float = 400.0


@dataclass
class TableSection:
    liquid_given_liquid: float = 0.9
    liquid_given_not_liquid: float = 0.2


@dataclass
class ControllerSection:
    pre_tilt_deg: float = 75.0
    kp_deg_s_per_ml: float = 0.01
    kd_deg_per_ml: float = 0.2
    pre_tilt_rate_deg_s: float = 30.0
    return_rate_deg_s: float = 30.0
    max_wrist_rate_deg_s: float = 60.0


@dataclass
class SourceSection:
    flow_coefficient_per_s: float = 4.0
    transport_delay_s: float = 0.3
    spill_fraction: float = 0.0
    pivot_m: list = field(default_factory=lambda: [0.0, 0.03, 0.085])


@dataclass
class ProtocolSection:
    duration_s: float = 25.0
    rate_hz: float = 30.0
    collection_count: int = 60
    collection_target_ml: float = 250.0
    collection_sources_ml: list = field(default_factory=lambda: [300.0, 350.0, 400.0])
    eval_per_container: int = 10
    targets_ml: list = field(default_factory=lambda: [100.0, 150.0, 200.0, 250.0, 300.0])
    sources_ml: list = field(default_factory=lambda: [300.0, 350.0, 400.0])
    min_headroom_ml: float = 100.0
    train_fraction: float = 0.75


@dataclass
class TransitionSection:
    smoothing: float = 1.0
    prior_stay: float = 0.9  # drift prior used while collecting data
    prior_max_step: int = 5


@dataclass
class ExperimentConfig:
    seed: int = 0
    output_dir: str = "runs"
    meshes: MeshSection = field(default_factory=MeshSection)
    camera: CameraSection = field(default_factory=CameraSection)
    histogram: HistogramSection = field(default_factory=HistogramSection)
    observation: TableSection = field(default_factory=TableSection)
    noise: TableSection = field(default_factory=TableSection)
    controller_gains: ControllerSection = field(default_factory=ControllerSection)
    source: SourceSection = field(default_factory=SourceSection)
    protocol: ProtocolSection = field(default_factory=ProtocolSection)
    transition: TransitionSection = field(default_factory=TransitionSection)
    base_dir: Path = field(default=Path("."), repr=False, compare=False)

    # -- derived objects (the unit boundary) --------------------------------

    def controller(self) -> ControllerConfig:
        c = self.controller_gains
        d = math.pi / 180.0
        return ControllerConfig(
            pre_tilt_angle=c.pre_tilt_deg * d,
            kp=c.kp_deg_s_per_ml * d,
            kd=c.kd_deg_per_ml * d,
            pre_tilt_rate=c.pre_tilt_rate_deg_s * d,
            return_rate=c.return_rate_deg_s * d,
            max_wrist_rate=c.max_wrist_rate_deg_s * d,
        )

    def camera_model(self) -> CameraModel:
        c = self.camera
        return CameraModel.looking_at(c.width_px, c.height_px, c.fx_px, c.fy_px, eye=c.eye_m, target=c.look_at_m)

    def histogram_spec(self) -> HistogramSpec:
        return HistogramSpec(self.histogram.bins, self.histogram.v_max_ml)

    def observation_table(self) -> ConfusionTable:
        return ConfusionTable.from_rates(self.observation.liquid_given_liquid, self.observation.liquid_given_not_liquid)

    def noise_table(self) -> ConfusionTable:
        return ConfusionTable.from_rates(self.noise.liquid_given_liquid, self.noise.liquid_given_not_liquid)

    @property
    def dt(self) -> float:
        return 1.0 / self.protocol.rate_hz

    def resolve_mesh(self, ref: str) -> Path:
        if ref.startswith(BUILTIN):
            name = ref[len(BUILTIN):]
            return Path(str(resources.files("pourkit") / "data" / "meshes" / f"{name}.obj"))
        p = Path(ref)
        return p if p.is_absolute() else self.base_dir / p

    def validate(self) -> ExperimentConfig:
        refs = [self.meshes.source, *self.meshes.targets.values()]
        for ref in refs:
            if not self.resolve_mesh(ref).is_file():
                raise ConfigError(f"mesh file not found: {ref}")
        if not self.meshes.targets:
            raise ConfigError("at least one target mesh is required")
        p = self.protocol
        if not (p.duration_s > 0 and p.rate_hz > 0):
            raise ConfigError("protocol duration and rate must be positive")
        if p.collection_count < 1 or p.eval_per_container < 1:
            raise ConfigError("pour counts must be positive")
        if not 0 < p.train_fraction < 1:
            raise ConfigError("train_fraction must lie in (0, 1)")
        top = max([*p.targets_ml, p.collection_target_ml])
        if self.histogram.v_max_ml < top:
            raise ConfigError(f"histogram v_max_ml {self.histogram.v_max_ml:g} below largest target {top:g}")
        # constructing these runs their own checks
        try:
            self.controller()
            self.camera_model()
            self.histogram_spec()
            self.observation_table()
            self.noise_table()
        except Exception as exc:
            raise ConfigError(str(exc)) from exc
        return self

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("base_dir")
        return d

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=False)

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def from_dict(cls, data: dict, base_dir=".") -> ExperimentConfig:
        if not isinstance(data, dict):
            raise ConfigError("config must be a mapping")
        kwargs = {}
        for f in dataclasses.fields(cls):
            if f.name == "base_dir" or f.name not in data:
                continue
            value = data[f.name]
            sub = _SECTIONS.get(f.name)
            kwargs[f.name] = _section(sub, value, f.name) if sub else value
        unknown = set(data) - {f.name for f in dataclasses.fields(cls)} - {"base_dir"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            cfg = cls(**kwargs, base_dir=Path(base_dir))
            cfg.seed = int(cfg.seed)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        return cfg

    @classmethod
    def loads(cls, text: str, base_dir=".") -> ExperimentConfig:
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"config is not valid YAML: {exc}") from exc
        return cls.from_dict(data or {}, base_dir)


_SECTIONS = {
    "meshes": MeshSection,
    "camera": CameraSection,
    "histogram": HistogramSection,
    "observation": TableSection,
    "noise": TableSection,
    "controller_gains": ControllerSection,
    "source": SourceSection,
    "protocol": ProtocolSection,
    "transition": TransitionSection,
}


def _section(cls, value, name):
    if not isinstance(value, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(value) - names
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {sorted(unknown)}")
    try:
        return cls(**value)
    except TypeError as exc:
        raise ConfigError(f"section {name!r}: {exc}") from exc


def load_config(path=None) -> ExperimentConfig:
    """Read and validate a config file; ``None`` gives the built-in defaults."""
    if path is None:
        return ExperimentConfig().validate()
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return ExperimentConfig.loads(text, base_dir=path.parent).validate()
