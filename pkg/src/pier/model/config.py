from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from ..exceptions import InvalidConfigError

VARIANTS = ("base-only", "adapter-only", "fusion")


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    n_layers: int = 2
    d_model: int = 64
    n_heads: int = 4
    d_ff: int = 128
    max_seq_len: int = 64
    adapter_bottleneck: int = 16
    variant: str = "fusion"
    fuse_decoder: bool = False

    def __post_init__(self):
        for name in ("vocab_size", "n_layers", "d_model", "n_heads", "d_ff", "max_seq_len", "adapter_bottleneck"):
            if int(getattr(self, name)) <= 0:
                raise InvalidConfigError(f"{name} must be positive")
        if self.d_model % self.n_heads:
            raise InvalidConfigError("d_model must be divisible by n_heads")
        if self.adapter_bottleneck >= self.d_model:
            raise InvalidConfigError("adapter_bottleneck must be smaller than d_model")
        if self.variant not in VARIANTS:
            raise InvalidConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")

    @property
    def n_fusion_layers(self) -> int:
        return self.n_layers * (2 if self.fuse_decoder else 1)

    def replace(self, **changes) -> "ModelConfig":
        d = asdict(self)
        d.update(changes)
        return ModelConfig(**d)

    def to_pairs(self) -> dict[str, str]:
        return {k: str(v) for k, v in asdict(self).items()}

    @classmethod
    def from_pairs(cls, pairs: dict[str, str]) -> "ModelConfig":
        kwargs = {}
        for f in fields(cls):
            if f.name not in pairs:
                continue
            raw = pairs[f.name]
            if f.type in ("int", int):
                kwargs[f.name] = int(raw)
            elif f.type in ("bool", bool):
                kwargs[f.name] = raw in ("True", "true", "1")
            else:
                kwargs[f.name] = raw
        unknown = set(pairs) - {f.name for f in fields(cls)}
        if unknown:
            raise InvalidConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**kwargs)
