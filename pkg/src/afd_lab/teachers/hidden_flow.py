"""隐藏流教师：非因果地一次生成全部 K 个块的流模型。

内部是一个只有 1 个"块"、维度为 K·d 的速度场，宽度与学生不同，用 M_T=64 步 Euler 采样。
它与学生在结构上不对齐（没有逐块的历史、步数也不同），
外部只能拿到干净样本，没有解析密度。
"""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path

import numpy as np
from loguru import logger

from ..autodiff.optim import AdamW
from ..errors import CheckpointError, InputError
from ..flow.path import fm_loss, make_noised_states, sample_ode
from ..flow.schedules import RECTIFIED_FLOW
from ..student.field import FieldGeometry, VelocityField
from ..student.video import Source, Video
from .base import TeacherHandle, check_prompt, sample_batch

DEFAULT_TEACHER_STEPS = 64


class HiddenFlowTeacher:
    def __init__(
        self,
        field: VelocityField,
        *,
        n_blocks: int,
        dim: int,
        steps: int = DEFAULT_TEACHER_STEPS,
        name: str = "hidden_flow",
    ) -> None:
        if field.geometry.n_blocks != 1 or field.geometry.dim != n_blocks * dim:
            raise InputError(
                f"隐藏教师内部场应为单块、维度 {n_blocks * dim}，收到 {field.geometry}"
            )
        if steps < 1:
            raise InputError(f"M_T 必须 >= 1: {steps}")
        self._field = field
        self.n_blocks = n_blocks
        self.dim = dim
        self.n_prompts = field.geometry.n_prompts
        self.steps = steps
        self.name = name

    def sample(self, prompt: int, rng: np.random.Generator) -> Video:
        check_prompt(self, prompt)
        ids = np.array([prompt])
        h = self._field.history_summary([], 1)
        x = sample_ode(self._field, ids, h, self.steps, rng)
        return Video(x.value.reshape(self.n_blocks, self.dim), prompt, Source.TEACHER)

    def save(self, path: Path) -> None:
        self._field.save(path, teacher_blocks=self.n_blocks, teacher_dim=self.dim, teacher_steps=self.steps)

    @classmethod
    def load(cls, path: Path) -> HiddenFlowTeacher:
        field, header = VelocityField.load_with_header(path)
        try:
            return cls(
                field,
                n_blocks=int(header["teacher_blocks"]),
                dim=int(header["teacher_dim"]),
                steps=int(header["teacher_steps"]),
            )
        except KeyError as exc:
            raise CheckpointError(f"{path} 不是隐藏流教师检查点: 缺少 {exc}") from exc


def train_hidden_flow(
    target: TeacherHandle,
    *,
    hidden: int = 96,
    layers: int = 2,
    steps: int = 2000,
    lr: float = 1e-3,
    batch: int = 64,
    teacher_steps: int = DEFAULT_TEACHER_STEPS,
    seed: int = 0,
) -> HiddenFlowTeacher:
    """在目标教师的样本上用普通流匹配训练隐藏教师（把整段视频当作一个块）。"""

    rng = np.random.default_rng(seed)
    geometry = replace(
        FieldGeometry(),
        n_blocks=1,
        dim=target.n_blocks * target.dim,
        n_prompts=target.n_prompts,
        hidden=hidden,
        layers=layers,
    )
    field = VelocityField(geometry, prefix="t", rng=rng)
    opt = AdamW(lr)
    for step in range(steps):
        ids = rng.integers(0, target.n_prompts, size=batch)
        videos = sample_batch(target, ids, rng)
        states = make_noised_states(videos.flat()[:, None, :], ids, RECTIFIED_FLOW, rng)
        leaves = field.params.leaves()
        loss = fm_loss(field, states, leaves)
        loss.backward()
        opt.step(field.params, field.params.grads_of(leaves))
        if step % 200 == 0:
            logger.debug("隐藏教师预训练 step={} fm_loss={:.4f}", step, loss.item())
    logger.info("隐藏教师训练完成: target={} dim={} steps={}", target.name, geometry.dim, steps)
    return HiddenFlowTeacher(field, n_blocks=target.n_blocks, dim=target.dim, steps=teacher_steps)
