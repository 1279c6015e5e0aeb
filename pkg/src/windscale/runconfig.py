"""Run configuration: one YAML document describing a whole experiment.

A RunConfig bundles the synthetic-data recipe, the loss, the trainer
schedule, network sizes, and evaluation/plot options. Parsing is strict:
unknown sections or keys are rejected by name, every field has a default,
and parse(emit(cfg)) reproduces cfg exactly, so config files can be
round-tripped through tooling without drift.

The named presets reproduce the experiment grid the pipeline is built
around: an unconditional baseline (no covariates), the conditional model
without frequency separation, and conditional variants with full or partial
frequency separation at box kernels 5, 9, 13. All presets share identical
trainer settings; they differ only in loss mode/kernel and covariate use, so
curve comparisons across presets are apples to apples.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigurationError
from .losses import FsMode, LossConfig
from .nets import CriticSpec, GeneratorSpec
from .synth import SynthConfig
from .train import TrainConfig


@dataclass(frozen=True)
class TrainSection:
    max_steps: int = 100
    critic_iters: int = 5
    batch_size: int = 32
    crops_per_pair: int = 192
    crop_size: int = 128
    lr: float = 2.5e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.9
    val_crops_per_pair: int = 32
    val_every: int = 1
    interval_len: int = 25
    checkpoint_every: int = 50
    seed: int = 0
    dtype: str = "float32"


@dataclass(frozen=True)
class NetworkConfig:
    cov_channels: int = 3
    trunk_width: int = 64
    n_rrdb: int = 16
    growth: int = 32
    critic_width: int = 64

    def gen_spec(self) -> GeneratorSpec:
        return GeneratorSpec(cov_channels=self.cov_channels,
                             trunk_width=self.trunk_width,
                             n_rrdb=self.n_rrdb, growth=self.growth)

    def critic_spec(self) -> CriticSpec:
        return CriticSpec(base_width=self.critic_width)


@dataclass(frozen=True)
class EvalSection:
    methods: tuple[str, ...] = ("model", "bilinear", "nearest")
    regions: dict = field(default_factory=dict)
    power_floor: float = 1e-12
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(str(m) for m in self.methods))
        regions = {}
        for name, box in dict(self.regions).items():
            regions[str(name)] = tuple(int(v) for v in box)
        object.__setattr__(self, "regions", regions)
        if self.workers < 1:
            raise ConfigurationError("eval.workers must be >= 1")


@dataclass(frozen=True)
class PlotSection:
    dpi: int = 120

    def __post_init__(self):
        if self.dpi < 10:
            raise ConfigurationError("plot.dpi must be >= 10")


@dataclass(frozen=True)
class RunConfig:
    synth: SynthConfig = field(default_factory=SynthConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainSection = field(default_factory=TrainSection)
    networks: NetworkConfig = field(default_factory=NetworkConfig)
    eval: EvalSection = field(default_factory=EvalSection)
    plot: PlotSection = field(default_factory=PlotSection)

    def train_config(self) -> TrainConfig:
        t = self.train
        return TrainConfig(max_steps=t.max_steps, critic_iters=t.critic_iters,
                           batch_size=t.batch_size, crops_per_pair=t.crops_per_pair,
                           crop_size=t.crop_size, lr=t.lr,
                           adam_beta1=t.adam_beta1, adam_beta2=t.adam_beta2,
                           loss=self.loss, val_crops_per_pair=t.val_crops_per_pair,
                           val_every=t.val_every, interval_len=t.interval_len,
                           checkpoint_every=t.checkpoint_every, seed=t.seed,
                           dtype=t.dtype)


_SECTIONS = {
    "synth": SynthConfig,
    "loss": LossConfig,
    "train": TrainSection,
    "networks": NetworkConfig,
    "eval": EvalSection,
    "plot": PlotSection,
}


def _build_section(cls, data, section: str):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigurationError(f"section {section!r} must be a mapping")
    known = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        f = known.get(key)
        if f is None:
            raise ConfigurationError(f"unknown config key {section}.{key}")
        if isinstance(value, list) and str(f.type).startswith("tuple"):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as e:
        raise ConfigurationError(f"bad section {section!r}: {e}") from None


def from_dict(data: dict | None) -> RunConfig:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigurationError("config root must be a mapping")
    unknown = set(data) - set(_SECTIONS)
    if unknown:
        raise ConfigurationError(f"unknown config sections: {sorted(unknown)}")
    sections = {name: _build_section(cls, data.get(name), name)
                for name, cls in _SECTIONS.items()}
    return RunConfig(**sections)


def to_dict(cfg: RunConfig) -> dict:
    def clean(value):
        if isinstance(value, FsMode):
            return value.value
        if isinstance(value, tuple):
            return [clean(v) for v in value]
        if isinstance(value, dict):
            return {k: clean(v) for k, v in value.items()}
        return value

    out = {}
    for name in _SECTIONS:
        section = getattr(cfg, name)
        out[name] = {f.name: clean(getattr(section, f.name))
                     for f in dataclasses.fields(section)}
    return out


def parse(text: str) -> RunConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigurationError(f"invalid YAML: {e}") from None
    return from_dict(data)


def emit(cfg: RunConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False)


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"no config file at {path}")
    return parse(path.read_text())


def save_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(emit(cfg))


def apply_overrides(cfg: RunConfig, overrides) -> RunConfig:
    """Apply section.key=value strings on top of a config; values parse as YAML."""
    data = to_dict(cfg)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} must look like section.key=value")
        path, raw = item.split("=", 1)
        parts = path.strip().split(".")
        if len(parts) != 2:
            raise ConfigurationError(f"override target {path!r} must be section.key")
        section, key = parts
        if section not in data:
            raise ConfigurationError(f"unknown config section {section!r}")
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError:
            raise ConfigurationError(f"cannot parse override value {raw!r}") from None
        data[section][key] = value
    return from_dict(data)


# --- presets -----------------------------------------------------------------

PRESET_NAMES = ("baseline-downgan", "cond-nfs",
                "cond-fs5", "cond-fs9", "cond-fs13",
                "cond-pfs5", "cond-pfs9", "cond-pfs13")


def preset(name: str) -> RunConfig:
    """Named experiment config; all presets share identical trainer settings."""
    if name not in PRESET_NAMES:
        raise ConfigurationError(
            f"unknown preset {name!r}; available: {', '.join(PRESET_NAMES)}"
        )
    base = RunConfig()
    if name == "baseline-downgan":
        return dataclasses.replace(
            base,
            networks=dataclasses.replace(base.networks, cov_channels=0),
            loss=LossConfig(fs_mode=FsMode.NONE),
        )
    if name == "cond-nfs":
        return dataclasses.replace(base, loss=LossConfig(fs_mode=FsMode.NONE))
    mode = FsMode.FS if name.startswith("cond-fs") else FsMode.PFS
    kernel = int(name.rsplit("fs", 1)[1])
    return dataclasses.replace(base, loss=LossConfig(fs_mode=mode, fs_kernel=kernel))
