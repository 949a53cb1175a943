"""流匹配基础：日程、前向加噪、流匹配损失、少步 Euler 采样。"""

from .path import (
    NoisedStates,
    NoisySample,
    VelocityFieldLike,
    fm_loss,
    forward_noise,
    make_noised_states,
    sample_ode,
)
from .schedules import RECTIFIED_FLOW, Schedule, get_schedule, register_schedule, schedule_names

__all__ = [
    "RECTIFIED_FLOW",
    "NoisedStates",
    "NoisySample",
    "Schedule",
    "VelocityFieldLike",
    "fm_loss",
    "forward_noise",
    "get_schedule",
    "make_noised_states",
    "register_schedule",
    "sample_ode",
    "schedule_names",
]
