"""Multi-modal knowledge graph entity alignment."""

from ._mmea import (
    AlignmentTask,
    SynthConfig,
    TrainConfig,
    TrainState,
    csls_adjust,
    evaluate,
    evaluate_model,
    induce_visual_pivots,
    load_checkpoint,
    load_task,
    main,
    nca_loss,
    save_checkpoint,
    save_task,
    synthesize,
    train,
    visual_pivots,
)

__all__ = [
    "AlignmentTask",
    "SynthConfig",
    "TrainConfig",
    "TrainState",
    "csls_adjust",
    "evaluate",
    "evaluate_model",
    "induce_visual_pivots",
    "load_checkpoint",
    "load_task",
    "main",
    "nca_loss",
    "save_checkpoint",
    "save_task",
    "synthesize",
    "train",
    "visual_pivots",
]
