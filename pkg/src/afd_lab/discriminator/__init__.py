"""提示条件判别器、BT/GAN 损失、优势流水线。"""

from .advantage import Advantage, advantage, baselines, compute_advantages, paired_weights, weights_of
from .losses import DiscLoss, bce_with_logits, bt_loss, bt_loss_from_logits, disc_loss, gan_loss
from .model import DiscGeometry, Discriminator
from .reward_stats import MomentState, RewardNormalizer
from .training import DiscStepResult, disc_step

__all__ = [
    "Advantage",
    "DiscGeometry",
    "DiscLoss",
    "DiscStepResult",
    "Discriminator",
    "MomentState",
    "RewardNormalizer",
    "advantage",
    "baselines",
    "bce_with_logits",
    "bt_loss",
    "bt_loss_from_logits",
    "compute_advantages",
    "disc_loss",
    "disc_step",
    "gan_loss",
    "paired_weights",
    "weights_of",
]
