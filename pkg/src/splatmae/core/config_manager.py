"""Run configuration: dataclass sections, TOML files and flag overrides."""

import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

import toml

from ..grouping.features import FeatureSelection
from ..utils.exceptions import ConfigurationError, SplatMaeError
from ..utils.logging_config import get_logger
from ..utils.validators import ConfigValidator

RESOLVED_CONFIG_NAME = "resolved_config.toml"
OUTPUT_ROOT_ENV = "SPLATMAE_OUTPUT_ROOT"

PROTOCOLS = ("full", "mlp-linear", "mlp-3")
TASKS = ("cls", "seg")
DOWNSAMPLE_METHODS = ("fps", "random")
MODEL_PRESETS = ("base", "desk")


@dataclass
class FeatureConfig:
    """Grouping (G) and embedding (E) parameter selection."""

    grouping: List[str] = field(default_factory=lambda: ["C"])
    embedding: List[str] = field(default_factory=lambda: ["C"])
    weights: Dict[str, float] = field(default_factory=dict)
    centroid_only_fps: bool = False
    pool_space: str = "centroid"

    def selection(self) -> FeatureSelection:
        return FeatureSelection(
            grouping=tuple(self.grouping),
            embedding=tuple(self.embedding),
            weights=dict(self.weights),
        )


@dataclass
class GroupingConfig:
    """Downsampling and group construction settings."""

    num_splats: int = 1024
    num_groups: int = 64
    group_size: int = 32
    pool_neighbors: int = 0
    pool_slots: int = 0
    lift_dim: int = 128
    use_pooling: bool = True
    downsample_method: str = "fps"

    @property
    def resolved_pool_neighbors(self) -> int:
        """P; 0 means twice the group size."""
        return self.pool_neighbors or 2 * self.group_size

    @property
    def resolved_pool_slots(self) -> int:
        """k; 0 means the group size."""
        return self.pool_slots or self.group_size


@dataclass
class ModelConfig:
    """Transformer dimensions."""

    preset: str = "base"
    token_dim: int = 384
    encoder_depth: int = 12
    decoder_depth: int = 4
    num_heads: int = 6
    mlp_ratio: float = 4.0
    drop_path: float = 0.1

    @classmethod
    def for_preset(cls, preset: str) -> "ModelConfig":
        if preset == "desk":
            return cls(
                preset="desk",
                token_dim=96,
                encoder_depth=3,
                decoder_depth=1,
                num_heads=4,
            )
        if preset == "base":
            return cls()
        raise ConfigurationError(
            f"Unknown model preset: {preset}", {"known": list(MODEL_PRESETS)}
        )


@dataclass
class PretrainConfig:
    """Masked-autoencoder pretraining schedule."""

    mask_ratio: float = 0.6
    epochs: int = 300
    warmup_epochs: int = 10
    lr: float = 1e-3
    weight_decay: float = 0.05
    batch_size: int = 8
    checkpoint_every: int = 25


@dataclass
class FinetuneConfig:
    """Downstream head training."""

    protocol: str = "full"
    task: str = "cls"
    epochs: int = 300
    warmup_epochs: int = 10
    lr: float = 5e-4
    weight_decay: float = 0.05
    batch_size: int = 8
    head_hidden: List[int] = field(default_factory=lambda: [512, 256])
    head_dropout: float = 0.5
    num_classes: int = 0
    num_parts: int = 0
    interp_k: int = 3
    interp_power: float = 2.0


@dataclass
class SeedConfig:
    data: int = 0
    mask: int = 1
    init: int = 2


SECTION_TYPES = {
    "features": FeatureConfig,
    "grouping": GroupingConfig,
    "model": ModelConfig,
    "pretrain": PretrainConfig,
    "finetune": FinetuneConfig,
    "seeds": SeedConfig,
}


@dataclass
class RunConfig:
    """Every setting of one run."""

    features: FeatureConfig = field(default_factory=FeatureConfig)
    grouping: GroupingConfig = field(default_factory=GroupingConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    finetune: FinetuneConfig = field(default_factory=FinetuneConfig)
    seeds: SeedConfig = field(default_factory=SeedConfig)

    def to_dict(self) -> Dict[str, Dict[str, Any]]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RunConfig":
        schema = {
            name: [f.name for f in fields(t)] for name, t in SECTION_TYPES.items()
        }
        ConfigValidator.validate_config_dict(data, schema)

        sections: Dict[str, Any] = {}
        for name, section_type in SECTION_TYPES.items():
            values = dict(data.get(name, {}))
            if name == "model":
                base = asdict(ModelConfig.for_preset(values.get("preset", "base")))
                base.update(values)
                values = base
            try:
                sections[name] = section_type(**values)
            except TypeError as e:
                raise ConfigurationError(
                    f"Invalid [{name}] section: {e}", {"section": name}
                )
        config = cls(**sections)
        config.validate()
        return config

    def to_toml(self) -> str:
        return toml.dumps(self.to_dict())

    @classmethod
    def from_toml(cls, text: str) -> "RunConfig":
        try:
            data = toml.loads(text)
        except toml.TomlDecodeError as e:
            raise ConfigurationError(f"Malformed config: {e}")
        return cls.from_dict(data)

    def validate(self) -> None:
        """Raise ConfigurationError on the first inconsistent setting."""
        try:
            self.features.selection()
        except SplatMaeError as e:
            raise ConfigurationError(e.message, e.details)

        if self.features.pool_space not in ("centroid", "grouping"):
            raise ConfigurationError(f"Unknown pool_space: {self.features.pool_space}")
        if self.grouping.downsample_method not in DOWNSAMPLE_METHODS:
            raise ConfigurationError(
                f"Unknown downsample_method: {self.grouping.downsample_method}"
            )
        if self.finetune.protocol not in PROTOCOLS:
            raise ConfigurationError(
                f"Unknown protocol: {self.finetune.protocol}",
                {"known": list(PROTOCOLS)},
            )
        if self.finetune.task not in TASKS:
            raise ConfigurationError(f"Unknown task: {self.finetune.task}")

        positive = {
            "grouping.num_splats": self.grouping.num_splats,
            "grouping.num_groups": self.grouping.num_groups,
            "grouping.group_size": self.grouping.group_size,
            "grouping.lift_dim": self.grouping.lift_dim,
            "model.token_dim": self.model.token_dim,
            "model.encoder_depth": self.model.encoder_depth,
            "model.decoder_depth": self.model.decoder_depth,
            "model.num_heads": self.model.num_heads,
            "pretrain.batch_size": self.pretrain.batch_size,
            "pretrain.checkpoint_every": self.pretrain.checkpoint_every,
            "finetune.batch_size": self.finetune.batch_size,
            "finetune.interp_k": self.finetune.interp_k,
        }
        for key, value in positive.items():
            if value < 1:
                raise ConfigurationError(
                    f"{key} must be positive, got {value}", {"key": key}
                )
        non_negative = {
            "grouping.pool_neighbors": self.grouping.pool_neighbors,
            "grouping.pool_slots": self.grouping.pool_slots,
            "pretrain.epochs": self.pretrain.epochs,
            "pretrain.warmup_epochs": self.pretrain.warmup_epochs,
            "finetune.epochs": self.finetune.epochs,
            "finetune.warmup_epochs": self.finetune.warmup_epochs,
            "finetune.num_classes": self.finetune.num_classes,
            "finetune.num_parts": self.finetune.num_parts,
        }
        for key, value in non_negative.items():
            if value < 0:
                raise ConfigurationError(
                    f"{key} must be >= 0, got {value}", {"key": key}
                )

        if not 0.0 <= self.pretrain.mask_ratio < 1.0:
            raise ConfigurationError(
                f"pretrain.mask_ratio must be in [0, 1), got {self.pretrain.mask_ratio}"
            )
        if self.model.token_dim % self.model.num_heads != 0:
            raise ConfigurationError(
                f"model.token_dim {self.model.token_dim} is not divisible by "
                f"{self.model.num_heads} heads"
            )
        if self.grouping.group_size > self.grouping.num_splats:
            raise ConfigurationError("grouping.group_size exceeds grouping.num_splats")
        if self.grouping.num_groups > self.grouping.num_splats:
            raise ConfigurationError("grouping.num_groups exceeds grouping.num_splats")
        gc = self.grouping
        if gc.use_pooling and gc.resolved_pool_neighbors < gc.group_size:
            raise ConfigurationError(
                "grouping.pool_neighbors must be >= grouping.group_size"
            )


def _parse_override_value(value: Any) -> Any:
    """Decode a string override as a TOML value, falling back to the raw string."""
    if not isinstance(value, str):
        return value
    try:
        return toml.loads(f"v = {value}")["v"]
    except toml.TomlDecodeError:
        return value


class ConfigManager:
    """Loads, overrides and persists a RunConfig.

    Example:
        ```python
        manager = ConfigManager(Path("run.toml"))
        manager.apply_overrides({"pretrain.epochs": 5})
        manager.write_resolved(out_dir)
        ```
    """

    def __init__(self, config_path: Optional[Union[str, Path]] = None):
        self.logger = get_logger(__name__)
        self.config_path = Path(config_path) if config_path else None
        self._data: Dict[str, Dict[str, Any]] = {}
        if self.config_path is not None:
            self._data = self._load_file(self.config_path)
        self._config = RunConfig.from_dict(self._data)

    def _load_file(self, path: Path) -> Dict[str, Dict[str, Any]]:
        if not path.exists():
            raise ConfigurationError(
                f"Config file not found: {path}", {"path": str(path)}
            )
        try:
            data = toml.load(path)
        except toml.TomlDecodeError as e:
            raise ConfigurationError(
                f"Malformed config file {path}: {e}", {"path": str(path)}
            )
        self.logger.info(f"Configuration loaded from {path}")
        return data

    @property
    def config(self) -> RunConfig:
        return self._config

    def apply_overrides(self, overrides: Mapping[str, Any]) -> RunConfig:
        """Apply dotted-key overrides (e.g. ``pretrain.epochs``); later calls win."""
        data = {section: dict(values) for section, values in self._data.items()}
        for key, value in overrides.items():
            if value is None:
                continue
            if "." not in key:
                raise ConfigurationError(f"Override key must be section.key: {key}")
            section, name = key.split(".", 1)
            data.setdefault(section, {})[name] = _parse_override_value(value)
            self.logger.debug(f"Config override {key} = {value!r}")
        self._config = RunConfig.from_dict(data)
        self._data = data
        return self._config

    def write_resolved(self, out_dir: Union[str, Path]) -> Path:
        """Write the effective configuration next to run outputs."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / RESOLVED_CONFIG_NAME
        path.write_text(self._config.to_toml())
        self.logger.info(f"Resolved configuration written to {path}")
        return path


def resolve_output_path(path: Union[str, Path]) -> Path:
    """Place relative output paths under SPLATMAE_OUTPUT_ROOT when it is set."""
    path = Path(path)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not path.is_absolute():
        return Path(root) / path
    return path
