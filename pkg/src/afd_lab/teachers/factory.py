"""按运行配置构造教师。"""

from __future__ import annotations

from pathlib import Path

from ..config import RunConfig, TeacherKind
from ..errors import CheckpointError, ConfigurationError
from .base import TeacherHandle
from .hidden_flow import HiddenFlowTeacher
from .mixture import MixtureTeacher
from .physics import PhysicsTeacher, ShiftedPhysicsTeacher


def physics_teacher(cfg: RunConfig) -> PhysicsTeacher:
    t, s = cfg.teacher, cfg.student
    return PhysicsTeacher(
        n_blocks=s.n_blocks,
        n_prompts=s.n_prompts,
        omega_range=t.omega_range,
        zeta=t.zeta,
        dt=t.dt,
        sigma_obs=t.sigma_obs,
        init_radius=t.init_radius,
        init_std=t.init_std,
    )


def build_teacher(cfg: RunConfig) -> TeacherHandle:
    t, s = cfg.teacher, cfg.student
    match t.kind:
        case TeacherKind.PHYSICS:
            return physics_teacher(cfg)
        case TeacherKind.SHIFTED_PHYSICS:
            return ShiftedPhysicsTeacher(
                physics_teacher(cfg), warp=t.warp, offset=t.offset, noise_scale=t.noise_scale
            )
        case TeacherKind.MIXTURE:
            return MixtureTeacher(
                n_blocks=s.n_blocks,
                dim=s.dim,
                n_prompts=s.n_prompts,
                spread=t.mixture_spread,
                std=t.mixture_std,
                weight=t.mixture_weight,
                seed=t.seed,
            )
        case TeacherKind.HIDDEN_FLOW:
            if t.checkpoint is None:
                raise ConfigurationError("teacher.checkpoint: hidden_flow 教师需要检查点路径")
            teacher = HiddenFlowTeacher.load(Path(t.checkpoint))
            if (teacher.n_blocks, teacher.dim, teacher.n_prompts) != (s.n_blocks, s.dim, s.n_prompts):
                raise CheckpointError(
                    f"隐藏教师几何 ({teacher.n_blocks}, {teacher.dim}, {teacher.n_prompts}) "
                    f"与学生 ({s.n_blocks}, {s.dim}, {s.n_prompts}) 不一致"
                )
            return teacher
    raise ConfigurationError(f"未知教师类型: {t.kind}")
