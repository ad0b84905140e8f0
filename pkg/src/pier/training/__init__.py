"""Objectives, prompt sampling and the staged trainer."""

from .config import STAGES, TrainConfig, config_from_dict, dump_config, load_train_config
from .objectives import (
    LossBreakdown,
    ObjectiveWeights,
    TargetCache,
    copy_loss,
    idiomatic_target_embedding,
    literal_target_embedding,
    prompt_infill_loss,
    similarity_loss,
    total_loss,
)
from .prompts import PROMPT_KINDS, TrainingExample, assign_prompts, build_prompt
from .trainer import TrainResult, loss_log_csv, train_stage

__all__ = [
    "LossBreakdown", "ObjectiveWeights", "PROMPT_KINDS", "STAGES", "TargetCache", "TrainConfig",
    "TrainResult", "TrainingExample", "assign_prompts", "build_prompt", "config_from_dict",
    "copy_loss", "dump_config", "idiomatic_target_embedding", "literal_target_embedding",
    "load_train_config", "loss_log_csv", "prompt_infill_loss", "similarity_loss", "total_loss",
    "train_stage",
]
