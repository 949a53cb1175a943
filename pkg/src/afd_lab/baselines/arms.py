"""对照组：SFT、视频级 GAN、去掉 score 项的 DMD 骨架。

三者与 AFD 共用同一份教师查询预算与 batch 大小（由训练循环保证）。
梯度路径互斥：
- gan 穿过 M_S 步 Euler 展开求导，但从不对展开做前向加噪
- afd / dmd_scaffold 只在加噪状态上回归，不穿过展开
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from ..autodiff.engine import Node, constant, mean, sq_norm
from ..autodiff.optim import AdamW
from ..errors import InputError, NumericalError
from ..flow.path import NoisedStates, fm_loss, make_noised_states
from ..flow.schedules import Schedule
from ..student.field import VelocityField
from ..student.rollout import rollout_graph, videos_from_graph
from ..student.video import Source, VideoBatch

ScoreFn = Callable[[Sequence[Node], np.ndarray], Node]


@dataclass(frozen=True, slots=True)
class StudentStepResult:
    loss: float
    grad_norm: float


@dataclass(frozen=True, slots=True)
class GraphRollout:
    """带计算图的在策略展开：leaves 是生成它时的学生参数叶子。"""

    leaves: dict[str, Node]
    blocks: list[Node]
    prompt_ids: np.ndarray

    @property
    def videos(self) -> VideoBatch:
        return videos_from_graph(self.blocks, self.prompt_ids)


def graph_rollout(
    field: VelocityField,
    prompt_ids: np.ndarray,
    n_blocks: int,
    steps: int,
    rng: np.random.Generator,
) -> GraphRollout:
    leaves = field.params.leaves()
    blocks = rollout_graph(field, prompt_ids, n_blocks, steps, rng, leaves)
    return GraphRollout(leaves, blocks, np.asarray(prompt_ids, dtype=np.int64))


def _apply(field: VelocityField, leaves: dict[str, Node], loss: Node, optimizer: AdamW) -> StudentStepResult:
    loss.backward()
    norm = optimizer.step(field.params, field.params.grads_of(leaves))
    return StudentStepResult(loss=loss.item(), grad_norm=norm)


def sft_step(
    field: VelocityField,
    teacher_videos: VideoBatch,
    optimizer: AdamW,
    sched: Schedule,
    rng: np.random.Generator,
) -> StudentStepResult:
    """教师视频上的流匹配，历史来自教师前缀（离策略条件）。"""

    if teacher_videos.source is not Source.TEACHER:
        raise InputError(f"sft_step 只接受教师视频，收到 {teacher_videos.source}")
    states = make_noised_states(teacher_videos.blocks, teacher_videos.prompt_ids, sched, rng)
    leaves = field.params.leaves()
    return _apply(field, leaves, fm_loss(field, states, leaves), optimizer)


def generator_loss(score_fn: ScoreFn, rollout: GraphRollout) -> Node:
    """−mean D_φ(x̂_0, y)，梯度经由整条采样链回到 θ。"""

    return -mean(score_fn(rollout.blocks, rollout.prompt_ids))


def gan_step(
    field: VelocityField,
    score_fn: ScoreFn,
    rollout: GraphRollout,
    optimizer: AdamW,
) -> StudentStepResult:
    loss = generator_loss(score_fn, rollout)
    loss.backward()
    grads = field.params.grads_of(rollout.leaves)
    norm = AdamW.global_norm(grads)
    if not np.isfinite(norm):
        raise NumericalError("生成器梯度非有限", tag="gan_generator")
    optimizer.step(field.params, grads)
    return StudentStepResult(loss=loss.item(), grad_norm=norm)


def weighted_fm_terms(v_theta: Node, target: np.ndarray, weights: np.ndarray) -> Node:
    """逐行 w_i‖v_θ − v‖²。"""

    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (v_theta.shape[0],):
        raise InputError(f"权重形状应为 ({v_theta.shape[0]},)，收到 {w.shape}")
    return constant(w) * sq_norm(v_theta - target)


def dmd_scaffold_loss(
    field: VelocityField,
    states: NoisedStates,
    weights: np.ndarray,
    p: dict[str, Node] | None = None,
) -> Node:
    return mean(weighted_fm_terms(field.velocity_on(states, p), states.v, weights))


def dmd_scaffold_step(
    field: VelocityField,
    states: NoisedStates,
    weights: np.ndarray,
    optimizer: AdamW,
) -> StudentStepResult:
    """优势加权、只有正分支的流匹配（无 v±），作用在学生自己的展开上。"""

    leaves = field.params.leaves()
    return _apply(field, leaves, dmd_scaffold_loss(field, states, weights, leaves), optimizer)
