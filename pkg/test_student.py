#!/usr/bin/env python3
"""测试学生：视频类型、速度场、因果展开与检查点"""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from afd_lab.autodiff.engine import constant
from afd_lab.errors import CheckpointError, ConfigurationError, InputError
from afd_lab.flow.path import make_noised_states, sample_ode
from afd_lab.flow.schedules import RECTIFIED_FLOW
from afd_lab.student.field import FieldGeometry, VelocityField
from afd_lab.student.rollout import noised_rollout_states, rollout
from afd_lab.student.video import Prompt, Source, Video, VideoBatch

GEOMETRY = FieldGeometry(n_blocks=3, dim=2, n_prompts=2, hidden=8, layers=1, t_embed=4, enc_width=3, prompt_width=2)


@pytest.fixture
def field() -> VelocityField:
    return VelocityField(GEOMETRY, rng=np.random.default_rng(0))


def test_prompt_must_be_registered() -> None:
    Prompt(1, 2)
    with pytest.raises(InputError):
        Prompt(2, 2)


def test_video_rejects_bad_shapes_and_values() -> None:
    with pytest.raises(InputError):
        Video(np.zeros(3), 0, Source.TEACHER)
    with pytest.raises(InputError):
        Video(np.array([[np.nan, 0.0]]), 0, Source.TEACHER)


def test_video_batch_stack_and_source_check() -> None:
    videos = [Video(np.full((2, 2), float(i)), i % 2, Source.TEACHER) for i in range(3)]
    batch = VideoBatch.stack(videos)
    assert len(batch) == 3
    assert batch.flat().shape == (3, 4)
    assert_array_equal(batch.prompt_ids, [0, 1, 0])
    assert_array_equal(batch[2].blocks, videos[2].blocks)
    with pytest.raises(InputError):
        VideoBatch.stack([*videos, Video(np.zeros((2, 2)), 0, Source.STUDENT)])
    with pytest.raises(InputError):
        batch.require(Source.STUDENT, "test")


def test_rollout_shapes_and_determinism(field: VelocityField) -> None:
    ids = np.array([0, 1, 1, 0])
    a = rollout(field, ids, GEOMETRY.n_blocks, 2, np.random.default_rng(5))
    b = rollout(field, ids, GEOMETRY.n_blocks, 2, np.random.default_rng(5))
    assert a.blocks.shape == (4, 3, 2)
    assert a.source is Source.STUDENT
    assert_array_equal(a.blocks, b.blocks)


def test_rollout_rejects_zero_blocks(field: VelocityField) -> None:
    with pytest.raises(InputError):
        rollout(field, np.array([0]), 0, 2, np.random.default_rng(0))


def test_velocity_on_is_causal(field: VelocityField) -> None:
    """改动第 1 块及之后的干净上下文，不影响第 0、1 块各行的速度"""

    rng = np.random.default_rng(1)
    videos = rng.normal(size=(2, 3, 2))
    states = make_noised_states(videos, np.array([0, 1]), RECTIFIED_FLOW, np.random.default_rng(2))
    changed = videos.copy()
    changed[:, 1:] += 10.0
    states_changed = make_noised_states(changed, np.array([0, 1]), RECTIFIED_FLOW, np.random.default_rng(2))
    early = states.block_index <= 1
    v = field.velocity_on(states).value
    v_changed = field.velocity_on(replace(states_changed, sample=states.sample)).value
    assert_array_equal(v[early], v_changed[early])
    assert not np.array_equal(v[states.block_index == 2], v_changed[states.block_index == 2])


def test_noised_rollout_states_requires_student_videos(field: VelocityField) -> None:
    teacher = VideoBatch(np.zeros((1, 3, 2)), np.array([0]), Source.TEACHER)
    with pytest.raises(InputError):
        noised_rollout_states(teacher, RECTIFIED_FLOW, np.random.default_rng(0))


def test_with_params_checks_layout(field: VelocityField) -> None:
    other = VelocityField(replace(GEOMETRY, hidden=5))
    with pytest.raises(ConfigurationError):
        field.with_params(other.params)
    clone = field.with_params(field.params.copy())
    assert clone.params.equals(field.params)


def test_field_checkpoint_round_trip_and_geometry_check(field: VelocityField, tmp_path: Path) -> None:
    path = tmp_path / "field.npz"
    field.save(path)
    loaded = VelocityField.load(path, expected=GEOMETRY)
    assert loaded.params.equals(field.params)
    assert loaded.geometry == GEOMETRY
    with pytest.raises(CheckpointError):
        VelocityField.load(path, expected=replace(GEOMETRY, n_blocks=4))


def test_geometry_validation() -> None:
    with pytest.raises(ConfigurationError):
        FieldGeometry(t_embed=3)
    with pytest.raises(ConfigurationError):
        FieldGeometry(hidden=0)


# ==================== 历史与展开 ====================


def test_history_summary_depends_on_block_order(field: VelocityField) -> None:
    a, b = constant(np.ones((1, 2))), constant(np.array([[2.0, -1.0]]))
    ab = field.history_summary([a, b], 1).value
    ba = field.history_summary([b, a], 1).value
    enc = GEOMETRY.enc_width
    # 均值段与顺序无关，末块段不同
    assert_array_equal(ab[:, :enc], ba[:, :enc])
    assert not np.array_equal(ab[:, enc:], ba[:, enc:])


def test_empty_history_is_the_start_vector(field: VelocityField) -> None:
    h = field.history_summary([], 3).value
    assert h.shape == (3, GEOMETRY.summary_width)
    assert_array_equal(h, np.zeros_like(h))


class _CopyField:
    """速度指向历史的最后一块：直线路径上的 Euler 恰好落到该块。"""

    dim = 2
    start = np.array([0.4, -1.2])

    def history_summary(self, prior, batch, p=None):
        if not prior:
            return constant(np.tile(self.start, (batch, 1)))
        return constant(prior[-1].value)

    def velocity(self, x, t, h, prompt_ids, p=None):
        return constant((x.value - h.value) / t[:, None])


def test_rollout_with_a_copying_field_repeats_the_start_block() -> None:
    videos = rollout(_CopyField(), np.array([0, 1, 0]), 4, 4, np.random.default_rng(0))  # type: ignore[arg-type]
    assert videos.blocks.shape == (3, 4, 2)
    assert_allclose(videos.blocks, np.broadcast_to(_CopyField.start, (3, 4, 2)), atol=1e-12)


def test_single_block_rollout_is_one_sampler_call(field: VelocityField) -> None:
    ids = np.array([1, 0])
    videos = rollout(field, ids, 1, 2, np.random.default_rng(5))
    direct = sample_ode(field, ids, field.history_summary([], 2), 2, np.random.default_rng(5))
    assert videos.blocks.shape == (2, 1, 2)
    assert_array_equal(videos.blocks[:, 0], direct.value)
