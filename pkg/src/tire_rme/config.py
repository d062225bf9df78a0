"""Training and evaluation configuration, loaded from a strict JSON file."""

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .models import DiscriminatorConfig, GeneratorConfig, TinConfig
from .scene import DEFAULT_OUTAGE_THRESHOLD

GAN_LOSS_VARIANTS = ("paper_log1m", "nonsaturating")
ESTIMATORS = ("idw", "kriging", "unet", "tiregan", "truth", "zeros")


@dataclass
class DataConfig:
    """Either a manifest path or a synthetic-generation recipe."""

    manifest: str | None = None
    n_scenes: int = 200
    size: int = 32
    n_buildings: int = 5
    n_tx: int = 1
    seed: int = 0
    ref_power_db: float = 0.0
    pathloss_exponent: float = 3.0
    wall_loss_db: float = 6.0
    shadow_sigma_db: float = 0.0
    floor_db: float = -60.0


@dataclass
class EvalConfig:
    estimators: list = field(default_factory=lambda: ["idw"])
    sr: float = 0.01
    sr_list: list = field(default_factory=lambda: [0.01, 0.03, 0.05, 0.10])
    snr_list: list = field(default_factory=lambda: [None, 30.0, 20.0, 10.0, 0.0])
    split: str = "test"
    seed: int = 1234
    idw_power: float = 2.0
    kriging_bins: int = 10
    nmse_eps: float = 1.0 / 255.0
    mask_buildings: bool = False
    max_maps: int | None = None


@dataclass
class TrainConfig:
    alpha: float = 1.0
    beta: float = 0.1
    lr_g: float = 2e-4
    lr_d: float = 2e-4
    lr_tin: float = 1e-3
    lr_regressor: float = 1e-3
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    steps: int = 2000
    tin_steps: int = 300
    batch_size: int = 4
    seed: int = 0
    outage_threshold: float = DEFAULT_OUTAGE_THRESHOLD
    gan_loss_variant: str = "nonsaturating"
    sr: float = 0.01
    low_threshold: float = 0.0
    noise_snr_db: float | None = None
    rdm_lambda: float = 2.0
    use_rdm: bool = True
    out_dir: str = "runs/default"
    tin_checkpoint: str | None = None
    log_every: int = 1
    data: DataConfig = field(default_factory=DataConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    discriminator: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)
    tin: TinConfig = field(default_factory=TinConfig)
    regressor: TinConfig = field(default_factory=lambda: TinConfig(in_channels=4))
    eval: EvalConfig = field(default_factory=EvalConfig)
    base_dir: str = "."

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError("alpha and beta must be non-negative")
        if self.gan_loss_variant not in GAN_LOSS_VARIANTS:
            raise ConfigError(f"gan_loss_variant must be one of {GAN_LOSS_VARIANTS}")
        if self.steps < 0 or self.tin_steps < 0 or self.batch_size < 1:
            raise ConfigError("steps must be >= 0 and batch_size >= 1")
        if not 0 < self.outage_threshold < 1:
            raise ConfigError("outage_threshold must lie in (0, 1)")
        if not (self.rdm_lambda > 0 and math.isfinite(self.rdm_lambda)):
            raise ConfigError("rdm_lambda must be positive")
        if self.generator.size != self.data.size:
            raise ConfigError(f"generator size {self.generator.size} differs from data size {self.data.size}")
        for name in self.eval.estimators:
            if name not in ESTIMATORS:
                raise ConfigError(f"unknown estimator {name!r}; choose from {ESTIMATORS}")

    def path(self, p):
        p = Path(p)
        return p if p.is_absolute() else Path(self.base_dir) / p

    @property
    def out_path(self):
        return self.path(self.out_dir)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d.pop("base_dir")
        return d


_NESTED = {"data": DataConfig, "generator": GeneratorConfig, "discriminator": DiscriminatorConfig,
           "tin": TinConfig, "regressor": TinConfig, "eval": EvalConfig}


def _build(cls, d, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected a JSON object")
    names = {f.name for f in dataclasses.fields(cls)} - {"base_dir"}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for k, v in d.items():
        if cls is TrainConfig and k in _NESTED:
            v = _build(_NESTED[k], v, f"{where}.{k}")
        kwargs[k] = v
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def config_from_dict(d, base_dir="."):
    cfg = _build(TrainConfig, d, "config")
    cfg.base_dir = str(base_dir)
    return cfg


def load_config(path):
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file {path} not found") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return config_from_dict(d, base_dir=path.parent)
