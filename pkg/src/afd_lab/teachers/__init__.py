"""黑盒教师：物理振子、偏移域振子、高斯混合、隐藏流模型。"""

from .base import (
    SupportsOracleDensity,
    TeacherChannel,
    TeacherHandle,
    oracle_log_density,
    sample_batch,
)
from .hidden_flow import HiddenFlowTeacher, train_hidden_flow
from .mixture import MixtureTeacher
from .physics import Dynamics, OscillatorDynamics, PhysicsTeacher, ShiftedPhysicsTeacher, WarpedDynamics

__all__ = [
    "Dynamics",
    "HiddenFlowTeacher",
    "MixtureTeacher",
    "OscillatorDynamics",
    "PhysicsTeacher",
    "ShiftedPhysicsTeacher",
    "SupportsOracleDensity",
    "TeacherChannel",
    "TeacherHandle",
    "WarpedDynamics",
    "oracle_log_density",
    "sample_batch",
    "train_hidden_flow",
]
