"""Pipeline configuration: defaults, TOML loading, overrides and validation."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import tomli_w

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .classify import CHANNEL_ORDER, CvConfig
from .errors import ConfigError
from .trajectories import TrajectoryConfig


@dataclass
class FrameSection:
    fps: float = 30.0
    gain: int = 64
    denoise: bool = False
    denoise_radius: int = 1


@dataclass
class SurfSection:
    grid_step: int = 8
    scales: list = field(default_factory=lambda: [1.6, 3.2])


@dataclass
class TrajectorySection:
    step: int = 5
    max_step: float = 8.0
    min_disp: float = 2.0
    var_thresh: float = 1e-4
    flow_eps: float = 0.4
    flow_window: int = 15
    flow_iterations: int = 3
    flow_smooth: float = 1.0


@dataclass
class CodebookSection:
    k: int = 500
    # per-channel overrides, e.g. {MBH = 1000}
    k_per_channel: dict = field(default_factory=dict)
    budget: int = 100_000
    mode: str = "per_fold"


@dataclass
class ClassifierSection:
    kind: str = "svm"
    C: float = 1.0
    tol: float = 1e-3
    knn_k: int = 1


@dataclass
class DataSection:
    # [width, height]; empty means "use the sensor profile's geometry"
    geometry: list = field(default_factory=list)
    allow_wrap: bool = False


@dataclass
class RunSection:
    seed: int = 0
    channels: list = field(default_factory=lambda: ["XY", "XT", "YT", "MBH"])
    compare: bool = True
    workers: int = 1
    svg: bool = False


@dataclass
class PipelineConfig:
    frames: FrameSection = field(default_factory=FrameSection)
    surf: SurfSection = field(default_factory=SurfSection)
    trajectories: TrajectorySection = field(default_factory=TrajectorySection)
    codebook: CodebookSection = field(default_factory=CodebookSection)
    classifier: ClassifierSection = field(default_factory=ClassifierSection)
    data: DataSection = field(default_factory=DataSection)
    run: RunSection = field(default_factory=RunSection)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())

    def trajectory_config(self) -> TrajectoryConfig:
        return TrajectoryConfig(**dataclasses.asdict(self.trajectories))

    def cv_config(self) -> CvConfig:
        return CvConfig(
            k=dict(self.codebook.k_per_channel),
            default_k=self.codebook.k,
            budget=self.codebook.budget,
            seed=self.run.seed,
            classifier=self.classifier.kind,
            C=self.classifier.C,
            svm_tol=self.classifier.tol,
            knn_k=self.classifier.knn_k,
            codebook_mode=self.codebook.mode,
        )

    def validate(self) -> "PipelineConfig":
        checks = [
            (self.frames.fps > 0, "frames.fps must be > 0"),
            (self.frames.gain >= 1, "frames.gain must be >= 1"),
            (self.frames.denoise_radius >= 1, "frames.denoise_radius must be >= 1"),
            (self.surf.grid_step >= 1, "surf.grid_step must be >= 1"),
            (len(self.surf.scales) > 0 and all(s > 0 for s in self.surf.scales), "surf.scales must be positive"),
            (self.trajectories.step >= 1, "trajectories.step must be >= 1"),
            (self.trajectories.max_step > 0, "trajectories.max_step must be > 0"),
            (self.trajectories.min_disp >= 0, "trajectories.min_disp must be >= 0"),
            (self.trajectories.flow_window >= 3, "trajectories.flow_window must be >= 3"),
            (self.codebook.k >= 1, "codebook.k must be >= 1"),
            (all(int(v) >= 1 for v in self.codebook.k_per_channel.values()), "codebook.k_per_channel values must be >= 1"),
            (set(self.codebook.k_per_channel) <= set(CHANNEL_ORDER), f"codebook.k_per_channel keys must be in {CHANNEL_ORDER}"),
            (self.codebook.budget >= 1, "codebook.budget must be >= 1"),
            (self.codebook.mode in ("per_fold", "shared"), "codebook.mode must be per_fold or shared"),
            (self.classifier.kind in ("svm", "knn", "majority"), "classifier.kind must be svm, knn or majority"),
            (self.classifier.C > 0, "classifier.C must be > 0"),
            (self.classifier.tol > 0, "classifier.tol must be > 0"),
            (self.classifier.knn_k >= 1, "classifier.knn_k must be >= 1"),
            (len(self.data.geometry) in (0, 2), "data.geometry must be [width, height] or empty"),
            (len(self.run.channels) > 0, "run.channels must not be empty"),
            (set(self.run.channels) <= set(CHANNEL_ORDER), f"run.channels must be drawn from {CHANNEL_ORDER}"),
            (self.run.workers >= 1, "run.workers must be >= 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        return self


def from_dict(data: dict) -> PipelineConfig:
    cfg = PipelineConfig()
    for section, values in data.items():
        if section not in {f.name for f in dataclasses.fields(cfg)}:
            raise ConfigError(f"unknown config section [{section}]")
        if not isinstance(values, dict):
            raise ConfigError(f"[{section}] must be a table")
        sub = getattr(cfg, section)
        names = {f.name: f for f in dataclasses.fields(sub)}
        for key, value in values.items():
            if key not in names:
                raise ConfigError(f"unknown key {section}.{key}")
            setattr(sub, key, _coerce(getattr(sub, key), value, f"{section}.{key}"))
    return cfg.validate()


def _coerce(current, value, name):
    if isinstance(current, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{name} must be true or false")
        return value
    if isinstance(current, int) and not isinstance(value, bool):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, int):
            raise ConfigError(f"{name} must be an integer")
        return value
    if isinstance(current, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name} must be a number")
        return float(value)
    if isinstance(current, str):
        if not isinstance(value, str):
            raise ConfigError(f"{name} must be a string")
        return value
    if isinstance(current, list):
        if not isinstance(value, list):
            raise ConfigError(f"{name} must be a list")
        return value
    if isinstance(current, dict):
        if not isinstance(value, dict):
            raise ConfigError(f"{name} must be a table")
        return value
    return value


def load_config(path=None, overrides=()) -> PipelineConfig:
    """Read a TOML file (optional) and apply ``section.key=value`` overrides.

    Override values are parsed as TOML literals, falling back to plain strings.
    """
    data: dict = {}
    if path is not None:
        try:
            data = tomllib.loads(Path(path).read_text())
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep or "." not in key:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        section, name = key.strip().split(".", 1)
        data.setdefault(section, {})[name] = parse_value(raw.strip())
    return from_dict(data)


def parse_value(raw: str):
    try:
        return tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        return raw


def benchmark_config(**overrides) -> PipelineConfig:
    """Settings used for the synthetic gesture benchmark."""
    cfg = PipelineConfig()
    cfg.data.geometry = [64, 64]
    cfg.codebook.budget = 20_000
    for key, value in overrides.items():
        section, name = key.split("__")
        setattr(getattr(cfg, section), name, value)
    return cfg.validate()
