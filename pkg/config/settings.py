"""
NumHTML - Configuration Management

Configuration system that resolves every setting from:
1. Command-line overrides - Priority 1
2. A flat KEY=value config file (--config) - Priority 2
3. Environment variables (.env) - Priority 3
4. Default values - Priority 4
"""

import os
import hashlib
import logging
from pathlib import Path
from dataclasses import dataclass, field, fields
from typing import Any, Dict, Mapping, Optional, Tuple

from dotenv import dotenv_values, load_dotenv

from utils.exceptions import ConfigurationError
from utils.validators import SUPPORTED_HORIZONS, collect_errors, validate_horizons, validate_positive

# Load environment variables from .env file (if exists)
env_path = Path(__file__).parent.parent / ".env"
load_dotenv(env_path)

logger = logging.getLogger(__name__)


def _key(name: str, default: Any, **kwargs) -> Any:
    """Declare a dataclass field bound to a flat configuration key."""
    if isinstance(default, (list, dict, set)):
        raise TypeError("mutable defaults are not supported")
    return field(default=default, metadata={"key": name}, **kwargs)


def _cast(value: Any, template: Any) -> Any:
    """Convert a raw setting to the type of the field's default value."""
    if isinstance(template, bool):
        if isinstance(value, bool):
            return value
        return str(value).strip().lower() in ("true", "1", "yes", "on")
    if isinstance(template, int):
        return int(value)
    if isinstance(template, float):
        return float(value)
    if isinstance(template, tuple):
        if isinstance(value, (list, tuple)):
            return tuple(int(v) for v in value)
        return tuple(int(v) for v in str(value).replace(" ", "").split(",") if v)
    return str(value)


class SettingSources:
    """Ordered lookup over CLI overrides, config-file values and the environment."""

    def __init__(
        self,
        overrides: Optional[Mapping[str, Any]] = None,
        file_values: Optional[Mapping[str, Any]] = None,
        use_environment: bool = True,
    ):
        self.overrides = {k.upper(): v for k, v in (overrides or {}).items() if v is not None}
        self.file_values = {k.upper(): v for k, v in (file_values or {}).items() if v is not None}
        self.use_environment = use_environment

    @classmethod
    def from_file(cls, config_file: Optional[str | Path], overrides: Optional[Mapping[str, Any]] = None):
        """Build sources from an optional KEY=value file plus overrides."""
        file_values: Dict[str, Any] = {}
        if config_file:
            path = Path(config_file)
            if not path.is_file():
                raise ConfigurationError(f"Config file not found: {path}")
            file_values = dict(dotenv_values(path))
            logger.info(f"Loaded {len(file_values)} settings from {path}")
        return cls(overrides=overrides, file_values=file_values)

    def get(self, key: str) -> Optional[Any]:
        if key in self.overrides:
            return self.overrides[key]
        if key in self.file_values:
            return self.file_values[key]
        if self.use_environment and (env_value := os.getenv(key)) is not None:
            return env_value
        return None

    def known_keys(self) -> set:
        return set(self.overrides) | set(self.file_values)


class _Section:
    """Mixin that fills dataclass fields from ``SettingSources``."""

    def apply(self, sources: SettingSources) -> "_Section":
        for f in fields(self):
            key = f.metadata.get("key")
            if not key:
                continue
            raw = sources.get(key)
            if raw is None:
                continue
            try:
                setattr(self, f.name, _cast(raw, getattr(self, f.name)))
            except (TypeError, ValueError) as e:
                raise ConfigurationError(f"{key}: cannot parse {raw!r} ({e})") from e
        return self

    def flat_items(self) -> Dict[str, Any]:
        return {f.metadata["key"]: getattr(self, f.name) for f in fields(self) if f.metadata.get("key")}

    @classmethod
    def keys(cls) -> set:
        return {f.metadata["key"] for f in fields(cls) if f.metadata.get("key")}


@dataclass
class ModelConfig(_Section):
    """Hierarchical encoder dimensions."""
    token_dim: int = _key("TOKEN_DIM", 32)
    sentence_dim: int = _key("SENTENCE_DIM", 32)
    token_blocks: int = _key("TOKEN_BLOCKS", 2)
    sentence_blocks: int = _key("SENTENCE_BLOCKS", 2)
    heads: int = _key("HEADS", 2)
    ffn_dim: int = _key("FFN_DIM", 64)
    max_sentences: int = _key("MAX_SENTENCES", 16)
    max_sentence_length: int = _key("MAX_SENTENCE_LENGTH", 32)
    audio_dim: int = 27
    init_scale: float = _key("INIT_SCALE", 0.1)


@dataclass
class PretrainConfig(_Section):
    """Structured adaptive pre-training (NCC and MC)."""
    ncc_epochs: int = _key("NCC_EPOCHS", 4)
    mc_epochs: int = _key("MC_EPOCHS", 6)
    lr: float = _key("PRETRAIN_LR", 0.003)
    batch_size: int = _key("PRETRAIN_BATCH_SIZE", 32)
    probe_hidden: int = _key("PROBE_HIDDEN", 16)
    holdout_fraction: float = _key("PRETRAIN_HOLDOUT", 0.2)


@dataclass
class TrainingConfig(_Section):
    """Adam settings shared by the multi-task trainers."""
    epochs: int = _key("EPOCHS", 8)
    lr: float = _key("LR", 0.002)
    lr_decay: float = _key("LR_DECAY", 0.95)
    beta1: float = _key("BETA1", 0.9)
    beta2: float = _key("BETA2", 0.999)
    adam_eps: float = _key("ADAM_EPS", 1e-8)
    batch_size: int = _key("BATCH_SIZE", 16)
    horizon: int = _key("TRAIN_HORIZON", 3)
    use_pareto: bool = _key("USE_PARETO", True)
    use_pretrain: bool = _key("USE_PRETRAIN", True)
    text_only: bool = _key("TEXT_ONLY", False)
    workers: int = _key("WORKERS", 1)


@dataclass
class ParetoConfig(_Section):
    """Pareto multi-task learning settings."""
    preference_count: int = _key("PREFERENCE_COUNT", 10)
    activation_tolerance: float = _key("ACTIVATION_TOLERANCE", 1e-3)
    max_active_constraints: int = _key("MAX_ACTIVE_CONSTRAINTS", 5)
    init_step: float = _key("INIT_STEP", 0.05)
    init_max_iters: int = _key("INIT_MAX_ITERS", 20)
    critical_tolerance: float = 1e-10


@dataclass
class DataConfig(_Section):
    """Corpus location, horizons and output directory."""
    seed: int = _key("SEED", 7)
    corpus_path: str = _key("CORPUS", "data/corpus.jsonl")
    output_dir: str = _key("OUT", "runs/latest")
    horizons: Tuple[int, ...] = _key("HORIZONS", SUPPORTED_HORIZONS)
    calls: int = _key("CALLS", 200)
    text_effect: float = _key("TEXT_EFFECT", 1.0)
    numeral_effect: float = _key("NUMERAL_EFFECT", 1.0)
    audio_effect: float = _key("AUDIO_EFFECT", 1.0)
    pre_event_days: int = _key("PRE_EVENT_DAYS", 5)


@dataclass
class TradingConfig(_Section):
    """Trading simulation settings."""
    tau: int = _key("TAU", 3)
    risk_free_rate: float = _key("RISK_FREE_RATE", 0.0)
    strategy: str = _key("STRATEGY", "model")


@dataclass
class LoggingConfig(_Section):
    """Logging configuration."""
    level: str = "INFO"
    format: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

    def __post_init__(self):
        """Load logging settings from environment."""
        if level := os.getenv("LOG_LEVEL"):
            self.level = level.upper()


@dataclass
class Config:
    """Main configuration class holding all sub-configurations."""
    model: ModelConfig = field(default_factory=ModelConfig)
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    pareto: ParetoConfig = field(default_factory=ParetoConfig)
    data: DataConfig = field(default_factory=DataConfig)
    trading: TradingConfig = field(default_factory=TradingConfig)
    logging: LoggingConfig = field(default_factory=LoggingConfig)

    @property
    def project_root(self) -> Path:
        """Get the project root directory."""
        return Path(__file__).parent.parent

    @property
    def output_dir(self) -> Path:
        """Get the run output directory."""
        return Path(self.data.output_dir)

    def sections(self):
        return (self.model, self.pretrain, self.training, self.pareto, self.data, self.trading)

    def apply(self, sources: SettingSources) -> "Config":
        known = set()
        for section in self.sections():
            section.apply(sources)
            known |= section.keys()
        unknown = sorted(sources.known_keys() - known)
        if unknown:
            logger.warning(f"Ignoring unknown configuration keys: {', '.join(unknown)}")
        return self

    def as_flat_dict(self) -> Dict[str, Any]:
        """Resolved settings as a flat KEY -> value map."""
        flat: Dict[str, Any] = {}
        for section in self.sections():
            flat.update(section.flat_items())
        return dict(sorted(flat.items()))

    def config_hash(self) -> str:
        """SHA-256 over the sorted KEY=value rendering of the resolved settings."""
        text = "\n".join(f"{k}={_render(v)}" for k, v in self.as_flat_dict().items())
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def validate(self) -> bool:
        """
        Validate configuration.
        Returns True if valid, raises ConfigurationError otherwise.
        """
        m, t, p, d = self.model, self.training, self.pareto, self.data
        checks = [
            validate_positive("TOKEN_DIM", m.token_dim),
            validate_positive("SENTENCE_DIM", m.sentence_dim),
            validate_positive("HEADS", m.heads),
            validate_positive("FFN_DIM", m.ffn_dim),
            validate_positive("MAX_SENTENCES", m.max_sentences),
            validate_positive("MAX_SENTENCE_LENGTH", m.max_sentence_length),
            validate_positive("SENTENCE_BLOCKS", m.sentence_blocks),
            validate_positive("LR", t.lr),
            validate_positive("PRETRAIN_LR", self.pretrain.lr),
            validate_positive("BATCH_SIZE", t.batch_size),
            validate_positive("PRETRAIN_BATCH_SIZE", self.pretrain.batch_size),
            validate_positive("PROBE_HIDDEN", self.pretrain.probe_hidden),
            validate_positive("INIT_STEP", p.init_step),
            validate_horizons(d.horizons),
        ]
        errors = collect_errors(checks)

        if m.token_blocks < 2:
            errors.append("TOKEN_BLOCKS must be at least 2 (sentence vectors pool the second-last block)")
        if m.heads > 0 and (m.token_dim % m.heads or m.sentence_dim % m.heads):
            errors.append("HEADS must divide TOKEN_DIM and SENTENCE_DIM")
        if m.max_sentence_length < 2:
            errors.append("MAX_SENTENCE_LENGTH must leave room for the end-of-sentence token")
        if p.preference_count < 2:
            errors.append("PREFERENCE_COUNT must be at least 2")
        if p.max_active_constraints < 0:
            errors.append("MAX_ACTIVE_CONSTRAINTS must be non-negative")
        if not (0 < t.lr_decay <= 1):
            errors.append("LR_DECAY must be in (0, 1]")
        if t.epochs < 0 or self.pretrain.ncc_epochs < 0 or self.pretrain.mc_epochs < 0:
            errors.append("epoch counts must be non-negative")
        if t.horizon not in d.horizons:
            errors.append("TRAIN_HORIZON must be one of HORIZONS")
        if self.trading.tau not in SUPPORTED_HORIZONS:
            errors.append(f"TAU must be one of {list(SUPPORTED_HORIZONS)}")
        if min(d.text_effect, d.numeral_effect, d.audio_effect) < 0:
            errors.append("effect sizes must be non-negative")
        if d.calls < 0:
            errors.append("CALLS must be non-negative")
        if not (0 < self.pretrain.holdout_fraction < 1):
            errors.append("PRETRAIN_HOLDOUT must be in (0, 1)")

        if errors:
            raise ConfigurationError("Configuration validation failed:\n" + "\n".join(f"  - {e}" for e in errors))

        return True


def _render(value: Any) -> str:
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def load_config(
    config_file: Optional[str | Path] = None,
    overrides: Optional[Mapping[str, Any]] = None,
    validate: bool = True,
) -> Config:
    """
    Resolve a configuration from a config file, the environment and overrides.

    Args:
        config_file: Optional flat KEY=value file
        overrides: KEY -> value pairs that win over every other source
        validate: Whether to run ``Config.validate``

    Returns:
        Resolved configuration
    """
    config = Config().apply(SettingSources.from_file(config_file, overrides))
    if validate:
        config.validate()
    return config
