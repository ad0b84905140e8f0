"""Training configuration and its YAML form."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from ..exceptions import InvalidConfigError
from ..model.config import ModelConfig
from .prompts import PROMPT_KINDS, PROMPT_MODES

STAGES = ("base", "adapter", "fusion")
STAGE_VARIANT = {"base": "base-only", "adapter": "adapter-only", "fusion": "fusion"}
STAGE_GROUP = {"base": "base", "adapter": "adapters", "fusion": "fusion"}
SCHEMA_VERSION = 1
_MODEL_KEYS = {f.name for f in fields(ModelConfig)} - {"vocab_size", "variant"}


@dataclass(frozen=True)
class TrainConfig:
    """Everything one training stage needs besides the corpus and prior checkpoint.

    A ``base`` stage without an initial checkpoint runs the sense-free
    pretraining recipe and ignores the objective flags. With an initial
    checkpoint it fine-tunes every base parameter on the configured
    objectives.
    """

    stage: str = "fusion"
    variant: str | None = None
    copy: bool = True
    sim: bool = True
    prompts: tuple[str, ...] = ("type_cls", "defn_gen")
    prompt_mode: str = "multi"
    ce_weight: float = 1.0
    sim_weight: float = 1.0
    epochs: int = 35
    batch_size: int = 8
    lr: float = 1e-3
    seed: int = 0
    corpus: str | None = None
    init_checkpoint: str | None = None
    reference_checkpoint: str | None = None
    out: str | None = None
    model: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        object.__setattr__(self, "prompts", tuple(self.prompts))
        object.__setattr__(self, "model", dict(self.model))
        if self.stage not in STAGES:
            raise InvalidConfigError(f"unknown stage {self.stage!r}; expected one of {STAGES}")
        if self.variant is not None and self.variant != STAGE_VARIANT[self.stage]:
            raise InvalidConfigError(
                f"stage {self.stage!r} trains nothing under variant {self.variant!r}; "
                f"it requires {STAGE_VARIANT[self.stage]!r}")
        bad = set(self.prompts) - set(PROMPT_KINDS[1:])
        if bad:
            raise InvalidConfigError(f"unknown prompt kinds {sorted(bad)}")
        if self.prompt_mode not in PROMPT_MODES:
            raise InvalidConfigError(f"prompt_mode must be one of {PROMPT_MODES}")
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidConfigError("epochs and batch_size must be positive")
        if not self.lr > 0:
            raise InvalidConfigError("lr must be positive")
        if self.ce_weight < 0 or self.sim_weight < 0:
            raise InvalidConfigError("loss weights must be nonnegative")
        unknown = set(self.model) - _MODEL_KEYS
        if unknown:
            raise InvalidConfigError(f"unknown model keys {sorted(unknown)}")
        if self.schema_version != SCHEMA_VERSION:
            raise InvalidConfigError(f"training config schema {self.schema_version} != {SCHEMA_VERSION}")

    @property
    def model_variant(self) -> str:
        return STAGE_VARIANT[self.stage]

    @property
    def trainable_group(self) -> str:
        return STAGE_GROUP[self.stage]

    def model_config(self, vocab_size: int) -> ModelConfig:
        return ModelConfig(vocab_size=vocab_size, variant=self.model_variant, **self.model)

    def replace(self, **changes) -> "TrainConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["prompts"] = list(self.prompts)
        return d


def config_from_dict(d: dict, cls=TrainConfig):
    if d is None:
        d = {}
    if not isinstance(d, dict):
        raise InvalidConfigError("configuration must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise InvalidConfigError(f"unknown configuration keys: {sorted(unknown)}")
    return cls(**d)


def load_train_config(path) -> TrainConfig:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise InvalidConfigError(f"{path}: not valid YAML ({exc})") from exc
    return config_from_dict(data)


def dump_config(cfg) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True, default_flow_style=False)
