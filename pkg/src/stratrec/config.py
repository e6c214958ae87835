"""Run configuration.

A single flat dataclass backs every entry point.  On disk it is an INI file
whose sections ([data]/[encoder]/[memory]/[fusion]/[train]) are cosmetic
grouping only; keys are globally unique and may be overridden from the command
line as repeated ``--set key=value`` flags, last one winning.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError
from .labels import NUM_STRATEGIES

_BOOLEAN_STATES = configparser.ConfigParser.BOOLEAN_STATES


@dataclass
class ModelConfig:
    # data
    min_freq: int = 1
    max_context: int = 4
    sentiment_neg_threshold: float = -0.1
    sentiment_pos_threshold: float = 0.1
    # encoder
    embed_dim: int = 32
    hidden_dim: int = 32
    n_heads: int = 4
    use_role_embedding: bool = True
    use_positional_encoding: bool = False
    use_post_norm: bool = False
    # memory
    top_k: int = 2
    feedback_step: float = 0.5
    pool_capacity: int = 10
    feedback_weight_min: float = 0.0
    feedback_weight_max: float = 2.0
    pool_aggregation: str = "mean"
    teacher_force_strategy: bool = True
    teacher_force_emotion: bool = False
    # fusion
    fusion_variant: str = "double_head"
    # train
    learning_rate: float = 1e-3
    batch_size: int = 8
    epochs: int = 5
    seed: int = 0
    strategy_loss_weight: float = 0.5
    emotion_loss_weight: float = 0.5
    selector_loss_weight: float = 0.5
    grad_clip: float = 5.0
    patience: int = 5
    no_memory: bool = False
    no_multitask: bool = False
    no_fusion: bool = False

    @property
    def d_model(self) -> int:
        # utterance vectors concatenate both LSTM directions
        return 2 * self.hidden_dim

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        p = []
        if self.min_freq < 1:
            p.append(f"min_freq must be >= 1, got {self.min_freq}")
        if self.max_context < 2:
            p.append(f"max_context must be >= 2, got {self.max_context}")
        if self.sentiment_neg_threshold > self.sentiment_pos_threshold:
            p.append(
                "sentiment_neg_threshold must not exceed sentiment_pos_threshold, "
                f"got {self.sentiment_neg_threshold} > {self.sentiment_pos_threshold}"
            )
        for name in ("embed_dim", "hidden_dim", "n_heads", "pool_capacity",
                     "batch_size", "patience"):
            if getattr(self, name) < 1:
                p.append(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.n_heads >= 1 and self.d_model % self.n_heads != 0:
            p.append(
                f"n_heads must divide 2*hidden_dim ({self.d_model}), got {self.n_heads}"
            )
        if not 1 <= self.top_k <= NUM_STRATEGIES:
            p.append(f"top_k must be in 1..{NUM_STRATEGIES}, got {self.top_k}")
        if self.feedback_step < 0:
            p.append(f"feedback_step must be >= 0, got {self.feedback_step}")
        if not self.feedback_weight_min <= 1.0 <= self.feedback_weight_max:
            p.append(
                "feedback weight bounds must bracket the initial value 1.0, "
                f"got [{self.feedback_weight_min}, {self.feedback_weight_max}]"
            )
        if self.pool_aggregation not in ("mean", "max"):
            p.append(f"pool_aggregation must be mean or max, got {self.pool_aggregation!r}")
        if self.fusion_variant not in ("mlp", "double_head", "co_attention"):
            p.append(
                "fusion_variant must be one of mlp, double_head, co_attention, "
                f"got {self.fusion_variant!r}"
            )
        if self.learning_rate <= 0:
            p.append(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 0:
            p.append(f"epochs must be >= 0, got {self.epochs}")
        for name in ("strategy_loss_weight", "emotion_loss_weight", "selector_loss_weight"):
            if getattr(self, name) < 0:
                p.append(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.grad_clip <= 0:
            p.append(f"grad_clip must be > 0, got {self.grad_clip}")
        if p:
            raise ConfigError(p)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_SECTIONS = {
    "data": ("min_freq", "max_context", "sentiment_neg_threshold",
             "sentiment_pos_threshold"),
    "encoder": ("embed_dim", "hidden_dim", "n_heads", "use_role_embedding",
                "use_positional_encoding", "use_post_norm"),
    "memory": ("top_k", "feedback_step", "pool_capacity", "feedback_weight_min",
               "feedback_weight_max", "pool_aggregation", "teacher_force_strategy",
               "teacher_force_emotion"),
    "fusion": ("fusion_variant",),
    "train": ("learning_rate", "batch_size", "epochs", "seed",
              "strategy_loss_weight", "emotion_loss_weight", "selector_loss_weight",
              "grad_clip", "patience", "no_memory", "no_multitask", "no_fusion"),
}

_FIELD_TYPES = {f.name: type(f.default) for f in dataclasses.fields(ModelConfig)}
assert set(_FIELD_TYPES) == {k for keys in _SECTIONS.values() for k in keys}


def _parse_value(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    raw = raw.strip()
    if kind is bool:
        state = _BOOLEAN_STATES.get(raw.lower())
        if state is None:
            raise ValueError(f"{key}: expected a boolean, got {raw!r}")
        return state
    if kind is int:
        try:
            return int(raw)
        except ValueError:
            raise ValueError(f"{key}: expected an integer, got {raw!r}") from None
    if kind is float:
        try:
            return float(raw)
        except ValueError:
            raise ValueError(f"{key}: expected a number, got {raw!r}") from None
    return raw


def _read_ini(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError([f"no such config file: {path}"])
    parser = configparser.ConfigParser()
    try:
        parser.read_string(path.read_text(encoding="utf-8"), source=str(path))
    except configparser.Error as exc:
        raise ConfigError([f"{path}: {exc}"]) from exc
    values, problems = {}, []
    for section in parser.sections():
        for key, raw in parser.items(section):
            if key not in _FIELD_TYPES:
                problems.append(f"{path}: unknown config key {key!r}")
                continue
            try:
                values[key] = _parse_value(key, raw)
            except ValueError as exc:
                problems.append(f"{path}: {exc}")
    if problems:
        raise ConfigError(problems)
    return values


def _apply_overrides(values: dict, overrides) -> None:
    problems = []
    for item in overrides:
        if "=" not in item:
            problems.append(f"--set expects key=value, got {item!r}")
            continue
        key, _, raw = item.partition("=")
        key = key.strip()
        if key not in _FIELD_TYPES:
            problems.append(f"unknown config key {key!r}")
            continue
        try:
            values[key] = _parse_value(key, raw)
        except ValueError as exc:
            problems.append(str(exc))
    if problems:
        raise ConfigError(problems)


def load_config(path=None, overrides=()) -> ModelConfig:
    """Defaults, then the INI file if given, then --set overrides in order."""
    values: dict = {}
    if path is not None:
        values.update(_read_ini(path))
    _apply_overrides(values, overrides)
    return ModelConfig(**values)


def config_to_ini(cfg: ModelConfig) -> str:
    parser = configparser.ConfigParser()
    for section, keys in _SECTIONS.items():
        parser[section] = {k: str(getattr(cfg, k)) for k in keys}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def save_config(cfg: ModelConfig, path) -> None:
    Path(path).write_text(config_to_ini(cfg), encoding="utf-8")
