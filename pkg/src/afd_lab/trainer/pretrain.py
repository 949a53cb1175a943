"""预训练"基座"学生：在频率错配的振子上做普通流匹配。

历史摘要来自源教师视频的干净前缀，与后续蒸馏用的学生几何完全一致，
所以预训练检查点可以直接作为 run.base_checkpoint。
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from loguru import logger

from ..autodiff.optim import AdamW
from ..config import RunConfig
from ..flow.path import fm_loss, make_noised_states
from ..flow.schedules import get_schedule
from ..student.field import VelocityField
from ..teachers.base import TeacherHandle, sample_batch
from ..teachers.factory import physics_teacher


@dataclass(frozen=True, slots=True)
class PretrainResult:
    field: VelocityField
    losses: list[float]
    source: str


def source_teacher(cfg: RunConfig) -> TeacherHandle:
    """频率按 pretrain.source_frequency_scale 缩放后的物理教师。"""

    return physics_teacher(cfg).scaled(cfg.pretrain.source_frequency_scale)


def pretrain_base(cfg: RunConfig, source: TeacherHandle | None = None, *, log_every: int = 200) -> PretrainResult:
    source = source or source_teacher(cfg)
    p = cfg.pretrain
    field_seq, loop_seq = np.random.SeedSequence([cfg.run.seed, 0x62617365]).spawn(2)
    field = VelocityField(cfg.field_geometry(), rng=np.random.default_rng(field_seq))
    rng = np.random.default_rng(loop_seq)
    sched = get_schedule(cfg.student.schedule)
    opt = AdamW(p.lr, betas=cfg.optim.betas, eps=cfg.optim.eps, weight_decay=cfg.optim.weight_decay)
    losses: list[float] = []
    logger.info("开始预训练基座: source={} steps={} batch={}", source.name, p.steps, p.batch_size)
    for step in range(p.steps):
        ids = rng.integers(0, cfg.student.n_prompts, size=p.batch_size)
        videos = sample_batch(source, ids, rng)
        states = make_noised_states(videos.blocks, ids, sched, rng)
        leaves = field.params.leaves()
        loss = fm_loss(field, states, leaves)
        loss.backward()
        opt.step(field.params, field.params.grads_of(leaves))
        losses.append(loss.item())
        if step % log_every == 0:
            logger.debug("预训练 step={} fm_loss={:.5f}", step, losses[-1])
    logger.info("预训练完成: 最后 {} 步平均 fm_loss={:.5f}", min(100, len(losses)), float(np.mean(losses[-100:])))
    return PretrainResult(field=field, losses=losses, source=source.name)


def save_base(result: PretrainResult, path: Path) -> Path:
    result.field.save(path, source=result.source, pretrain_steps=len(result.losses))
    logger.info("基座学生已保存: {}", path)
    return path
