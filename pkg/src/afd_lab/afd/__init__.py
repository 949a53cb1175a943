"""AFD 学生目标。"""

from .objective import (
    AFDConfig,
    AFDLoss,
    afd_loss,
    nft_from_velocity,
    nft_loss,
    prior_from_velocity,
    prior_loss,
    v_minus,
    v_plus,
)

__all__ = [
    "AFDConfig",
    "AFDLoss",
    "afd_loss",
    "nft_from_velocity",
    "nft_loss",
    "prior_from_velocity",
    "prior_loss",
    "v_minus",
    "v_plus",
]
