#!/usr/bin/env python3
"""测试对照组：SFT、视频级 GAN、DMD 骨架"""

from __future__ import annotations

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from afd_lab.autodiff import AdamW
from afd_lab.autodiff.engine import Node, sq_norm
from afd_lab.baselines.arms import (
    dmd_scaffold_loss,
    dmd_scaffold_step,
    gan_step,
    generator_loss,
    graph_rollout,
    sft_step,
)
from afd_lab.discriminator.model import Discriminator
from afd_lab.errors import InputError
from afd_lab.eval.suite import TINY_BATCH, TINY_DISC, TINY_FIELD, TINY_STEPS, TinyProblem, tiny_problem
from afd_lab.flow.path import fm_loss
from afd_lab.flow.schedules import RECTIFIED_FLOW
from afd_lab.student.field import VelocityField
from afd_lab.student.rollout import rollout
from afd_lab.student.video import Source, VideoBatch


@pytest.fixture
def prob() -> TinyProblem:
    return tiny_problem(0)


def test_sft_accepts_only_teacher_videos(prob: TinyProblem) -> None:
    with pytest.raises(InputError):
        sft_step(prob.field, prob.student, AdamW(1e-3), RECTIFIED_FLOW, np.random.default_rng(0))


def test_sft_step_updates_and_zero_lr_freezes(prob: TinyProblem) -> None:
    before = prob.field.params.copy()
    frozen = sft_step(prob.field, prob.teacher, AdamW(0.0), RECTIFIED_FLOW, np.random.default_rng(0))
    assert prob.field.params.equals(before)
    assert frozen.loss > 0.0
    sft_step(prob.field, prob.teacher, AdamW(1e-2), RECTIFIED_FLOW, np.random.default_rng(0))
    assert not prob.field.params.equals(before)


def test_graph_rollout_matches_constant_rollout(prob: TinyProblem) -> None:
    ids = np.array([0, 1, 1])
    graph = graph_rollout(prob.field, ids, TINY_FIELD.n_blocks, TINY_STEPS, np.random.default_rng(3))
    plain = rollout(prob.field, ids, TINY_FIELD.n_blocks, TINY_STEPS, np.random.default_rng(3))
    assert_array_equal(graph.videos.blocks, plain.blocks)
    assert len(graph.blocks) == TINY_FIELD.n_blocks


def test_generator_gradient_flows_through_the_sampler(prob: TinyProblem) -> None:
    ids = np.array([0, 1, 1])
    graph = graph_rollout(prob.field, ids, TINY_FIELD.n_blocks, TINY_STEPS, np.random.default_rng(3))
    loss = generator_loss(prob.disc.score_blocks, graph)
    loss.backward()
    grads = prob.field.params.grads_of(graph.leaves)
    mlp_grad = sum(float(np.abs(g).sum()) for k, g in grads.items() if ".mlp." in k)
    assert mlp_grad > 0.0


def test_gan_step_updates_student_only(prob: TinyProblem) -> None:
    ids = np.array([0, 1, 1])
    disc_before = prob.disc.params.copy()
    field_before = prob.field.params.copy()
    graph = graph_rollout(prob.field, ids, TINY_FIELD.n_blocks, TINY_STEPS, np.random.default_rng(3))
    result = gan_step(prob.field, prob.disc.score_blocks, graph, AdamW(1e-2))
    assert np.isfinite(result.loss) and result.grad_norm > 0.0
    assert prob.disc.params.equals(disc_before)
    assert not prob.field.params.equals(field_before)


def test_dmd_scaffold_loss_limits(prob: TinyProblem) -> None:
    n = len(prob.states)
    assert dmd_scaffold_loss(prob.field, prob.states, np.zeros(n)).item() == 0.0
    assert dmd_scaffold_loss(prob.field, prob.states, np.ones(n)).item() == pytest.approx(
        fm_loss(prob.field, prob.states).item()
    )
    with pytest.raises(InputError):
        dmd_scaffold_loss(prob.field, prob.states, np.ones(n + 1))


def test_dmd_scaffold_step_with_zero_weights_only_decays(prob: TinyProblem) -> None:
    """权重全为 0 时梯度为 0，参数只受权重衰减影响"""

    before = prob.field.params.copy()
    result = dmd_scaffold_step(prob.field, prob.states, np.zeros(len(prob.states)), AdamW(1e-2, weight_decay=0.0))
    assert result.grad_norm == 0.0
    assert prob.field.params.equals(before)


def test_tiny_problem_batch(prob: TinyProblem) -> None:
    assert len(prob.teacher) == len(prob.student) == TINY_BATCH


# ==================== 收敛方向 ====================

IDS = np.array([0, 1, 1, 0])
TARGET = np.array([1.5, -0.5])


def _distance_to_target(field: VelocityField, seed: int = 3) -> float:
    """展开样本的整体均值到 c 的距离。"""

    videos = rollout(field, IDS, TINY_FIELD.n_blocks, TINY_STEPS, np.random.default_rng(seed))
    return float(np.linalg.norm(videos.blocks.mean(axis=(0, 1)) - TARGET))


def test_gan_step_drifts_toward_a_frozen_score_maximum() -> None:
    """冻结的打分 −Σ‖x − c‖² 只在 c 处最大，生成器更新应让展开靠近 c"""

    def score(blocks, ids) -> Node:
        total = sq_norm(blocks[0] - TARGET)
        for b in blocks[1:]:
            total = total + sq_norm(b - TARGET)
        return -total

    field = VelocityField(TINY_FIELD, rng=np.random.default_rng(0))
    before = _distance_to_target(field)
    opt = AdamW(3e-2, weight_decay=0.0)
    for _ in range(60):
        graph = graph_rollout(field, IDS, TINY_FIELD.n_blocks, TINY_STEPS, np.random.default_rng(3))
        gan_step(field, score, graph, opt)
    assert _distance_to_target(field) < 0.5 * before


def test_zero_init_discriminator_gives_zero_generator_gradient(prob: TinyProblem) -> None:
    disc = Discriminator(TINY_DISC, rng=np.random.default_rng(1), zero_init=True)
    before = prob.field.params.copy()
    graph = graph_rollout(prob.field, IDS, TINY_FIELD.n_blocks, TINY_STEPS, np.random.default_rng(3))
    result = gan_step(prob.field, disc.score_blocks, graph, AdamW(1e-2, weight_decay=0.0))
    assert result.grad_norm == 0.0
    assert prob.field.params.equals(before)


def test_sft_on_a_point_mass_teacher_pulls_samples_to_it() -> None:
    field = VelocityField(TINY_FIELD, rng=np.random.default_rng(0))
    blocks = np.broadcast_to(TARGET, (16, TINY_FIELD.n_blocks, TINY_FIELD.dim)).copy()
    teacher = VideoBatch(blocks, np.arange(16) % 2, Source.TEACHER)
    before = _distance_to_target(field)
    opt = AdamW(1e-2, weight_decay=0.0)
    rng = np.random.default_rng(5)
    for _ in range(300):
        sft_step(field, teacher, opt, RECTIFIED_FLOW, rng)
    assert _distance_to_target(field) < 0.5 * before
