"""判别器更新：φ ← φ − η_D ∇_φ L（BT 或 GAN 损失）。"""

from __future__ import annotations

from dataclasses import dataclass

from ..autodiff.optim import AdamW
from ..student.video import VideoBatch
from .losses import DiscLoss, disc_loss
from .model import Discriminator


@dataclass(frozen=True, slots=True)
class DiscStepResult:
    loss: float
    grad_norm: float


def disc_step(
    disc: Discriminator,
    teacher: VideoBatch,
    student: VideoBatch,
    optimizer: AdamW,
    kind: DiscLoss = DiscLoss.BT,
) -> DiscStepResult:
    """一步判别器更新；optimizer.lr == 0 时参数逐位不变。"""

    leaves = disc.params.leaves()
    loss = disc_loss(kind, disc, teacher, student, leaves)
    loss.backward()
    norm = optimizer.step(disc.params, disc.params.grads_of(leaves))
    return DiscStepResult(loss=loss.item(), grad_norm=norm)
