"""对照组：SFT、GAN、score-free DMD 骨架。"""

from .arms import (
    GraphRollout,
    StudentStepResult,
    dmd_scaffold_loss,
    dmd_scaffold_step,
    gan_step,
    generator_loss,
    graph_rollout,
    sft_step,
    weighted_fm_terms,
)

__all__ = [
    "GraphRollout",
    "StudentStepResult",
    "dmd_scaffold_loss",
    "dmd_scaffold_step",
    "gan_step",
    "generator_loss",
    "graph_rollout",
    "sft_step",
    "weighted_fm_terms",
]
