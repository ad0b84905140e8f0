"""Base transformer, adapters, fusion layers and checkpoints."""

from .checkpoint import group_checksums, load_checkpoint, load_into, read_checkpoint, save_checkpoint
from .config import VARIANTS, ModelConfig
from .fused import BOS, EOS, EncoderOutput, FusedModel, pad_batch, span_weights
from .layers import Adapter, FusionLayer

__all__ = [
    "Adapter", "BOS", "EOS", "EncoderOutput", "FusedModel", "FusionLayer", "ModelConfig", "VARIANTS",
    "group_checksums", "load_checkpoint", "load_into", "pad_batch", "read_checkpoint",
    "save_checkpoint", "span_weights",
]
