#!/usr/bin/env python3
"""测试黑盒教师

测试目标:
1. 查询通道只转发样本,并按 (seed, prompt, 下标) 确定性缓存、逐条计数
2. 非 oracle 教师拿不到密度(CapabilityError)
3. 物理教师的递推、密度与频率缩放
4. 偏移域教师的密度按雅可比变换
5. 隐藏流教师检查点往返
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy.integrate import trapezoid
from scipy.stats import multivariate_normal

from afd_lab.errors import CapabilityError, CheckpointError, ConfigurationError, InputError
from afd_lab.eval.metrics import physics_residual
from afd_lab.student.video import Source, Video
from afd_lab.teachers.base import TeacherChannel, oracle_log_density, sample_batch
from afd_lab.teachers.factory import build_teacher
from afd_lab.teachers.hidden_flow import HiddenFlowTeacher, train_hidden_flow
from afd_lab.teachers.mixture import MixtureTeacher
from afd_lab.teachers.physics import PhysicsTeacher, ShiftedPhysicsTeacher


@pytest.fixture
def physics() -> PhysicsTeacher:
    return PhysicsTeacher(n_blocks=4, n_prompts=3)


def test_channel_counts_every_query(physics: PhysicsTeacher) -> None:
    channel = TeacherChannel(physics, pool_size=4, seed=0)
    rng = np.random.default_rng(0)
    batch = channel.query(np.array([0, 1, 2, 2]), rng)
    assert len(batch) == 4
    assert batch.source is Source.TEACHER
    assert channel.queries == 4
    channel.query(np.array([1]), rng)
    assert channel.queries == 5
    assert channel.cached <= 5


def test_channel_pool_is_deterministic_in_seed_prompt_index(physics: PhysicsTeacher) -> None:
    a = TeacherChannel(physics, pool_size=8, seed=11)
    b = TeacherChannel(physics, pool_size=8, seed=11)
    b.draw(2, 5)
    assert_array_equal(a.draw(1, 3).blocks, b.draw(1, 3).blocks)
    assert_array_equal(a.draw(2, 5).blocks, b.draw(2, 5).blocks)
    c = TeacherChannel(physics, pool_size=8, seed=12)
    assert not np.array_equal(a.draw(1, 3).blocks, c.draw(1, 3).blocks)


def test_channel_rejects_unknown_prompt(physics: PhysicsTeacher) -> None:
    channel = TeacherChannel(physics, pool_size=4, seed=0)
    with pytest.raises(InputError):
        channel.query(np.array([3]), np.random.default_rng(0))
    assert channel.queries == 0


def test_channel_exposes_no_density(physics: PhysicsTeacher) -> None:
    channel = TeacherChannel(physics, pool_size=4, seed=0)
    assert not hasattr(channel, "log_density")


def test_density_requires_oracle_capability(tmp_path: Path) -> None:
    physics = PhysicsTeacher(n_blocks=2, n_prompts=2)
    video = physics.sample(0, np.random.default_rng(0))
    assert np.isfinite(oracle_log_density(physics, video))
    hidden = train_hidden_flow(physics, hidden=4, layers=1, steps=2, batch=4, teacher_steps=2)
    with pytest.raises(CapabilityError):
        oracle_log_density(hidden, video)


def test_physics_noise_free_trajectory_satisfies_recursion(physics: PhysicsTeacher) -> None:
    x = physics.trajectory(1, np.random.default_rng(0), sigma=0.0)
    a = physics.dynamics.transitions[1]
    assert_allclose(x[1:], x[:-1] @ a.T, atol=1e-14)


def test_physics_residual_equals_observation_variance() -> None:
    teacher = PhysicsTeacher(n_blocks=6, n_prompts=3, sigma_obs=0.1)
    rng = np.random.default_rng(0)
    batch = sample_batch(teacher, rng.integers(0, 3, size=2000), rng)
    assert physics_residual(batch, teacher.dynamics) == pytest.approx(0.01, rel=0.05)


def test_physics_density_matches_gaussian_chain() -> None:
    teacher = PhysicsTeacher(n_blocks=2, n_prompts=2, sigma_obs=0.2, init_std=0.3)
    video = teacher.sample(1, np.random.default_rng(4))
    x = video.blocks
    expected = multivariate_normal.logpdf(x[0], teacher.init_mean(1), 0.09) + multivariate_normal.logpdf(
        x[1], teacher.dynamics.transitions[1] @ x[0], 0.04
    )
    assert teacher.log_density(video) == pytest.approx(expected, rel=1e-12)


def test_physics_rejects_wrong_shape(physics: PhysicsTeacher) -> None:
    with pytest.raises(InputError):
        physics.log_density(Video(np.zeros((3, 2)), 0, Source.TEACHER))
    with pytest.raises(ConfigurationError):
        PhysicsTeacher(dim=3)


def test_scaled_teacher_changes_frequencies(physics: PhysicsTeacher) -> None:
    scaled = physics.scaled(0.5)
    assert_allclose(scaled.omegas, physics.omegas * 0.5)
    assert scaled.n_blocks == physics.n_blocks


def test_shifted_teacher_density_uses_jacobian() -> None:
    base = PhysicsTeacher(n_blocks=2, n_prompts=2)
    shifted = ShiftedPhysicsTeacher(base, noise_scale=1.0)
    video = shifted.sample(0, np.random.default_rng(0))
    w = shifted.warp_matrix
    z = np.linalg.solve(w, (video.blocks - np.array(shifted.offset)).T).T
    expected = base.log_density(Video(z, 0, Source.TEACHER)) - 2 * np.log(abs(np.linalg.det(w)))
    assert shifted.log_density(video) == pytest.approx(expected, rel=1e-12)


def test_shifted_teacher_rejects_singular_warp(physics: PhysicsTeacher) -> None:
    with pytest.raises(ConfigurationError):
        ShiftedPhysicsTeacher(physics, warp=((1.0, 2.0), (2.0, 4.0)))


def test_mixture_density_is_normalized_mixture() -> None:
    teacher = MixtureTeacher(n_blocks=1, dim=1, n_prompts=1, std=0.5, weight=0.3)
    grid = np.linspace(-8.0, 8.0, 4001)
    dens = np.exp([teacher.log_density(Video(np.array([[x]]), 0, Source.TEACHER)) for x in grid])
    assert trapezoid(dens, grid) == pytest.approx(1.0, abs=1e-6)


def test_hidden_flow_checkpoint_round_trip(tmp_path: Path) -> None:
    target = PhysicsTeacher(n_blocks=2, n_prompts=2)
    teacher = train_hidden_flow(target, hidden=4, layers=1, steps=2, batch=4, teacher_steps=3, seed=1)
    path = tmp_path / "hidden.npz"
    teacher.save(path)
    loaded = HiddenFlowTeacher.load(path)
    assert (loaded.n_blocks, loaded.dim, loaded.n_prompts, loaded.steps) == (2, 2, 2, 3)
    a = loaded.sample(1, np.random.default_rng(0))
    b = teacher.sample(1, np.random.default_rng(0))
    assert_array_equal(a.blocks, b.blocks)


def test_build_teacher_requires_hidden_flow_checkpoint(tiny_cfg) -> None:
    data = tiny_cfg.model_dump(mode="json")
    data["teacher"]["kind"] = "hidden_flow"
    cfg = type(tiny_cfg).model_validate(data)
    with pytest.raises(ConfigurationError):
        build_teacher(cfg)
    data["teacher"]["checkpoint"] = "/nonexistent/hidden.npz"
    with pytest.raises(CheckpointError):
        build_teacher(type(tiny_cfg).model_validate(data))


# ==================== 样本统计 ====================


def test_physics_step_noise_has_the_observation_scale(physics: PhysicsTeacher) -> None:
    rng = np.random.default_rng(0)
    blocks = np.stack([physics.trajectory(1, rng, physics.sigma_obs) for _ in range(2000)])
    pred = physics.dynamics.predict(np.full(2000 * 3, 1), blocks[:, :-1].reshape(-1, 2)).reshape(2000, 3, 2)
    z = (blocks[:, 1:] - pred) / physics.sigma_obs
    for k in range(3):
        assert abs(z[:, k].std() - 1.0) < 0.05
        assert np.mean(np.abs(z[:, k]) < 3.0) > 0.99


def test_physics_marginal_means_follow_the_transition(physics: PhysicsTeacher) -> None:
    rng = np.random.default_rng(1)
    n = 4000
    blocks = np.stack([physics.trajectory(2, rng, physics.sigma_obs) for _ in range(n)])
    a = physics.dynamics.transitions[2]
    mean, cov = physics.init_mean(2), physics.init_std**2 * np.eye(2)
    for k in range(physics.n_blocks):
        se = np.sqrt(np.diag(cov) / n)
        assert np.all(np.abs(blocks[:, k].mean(axis=0) - mean) < 4.0 * se), k
        mean, cov = a @ mean, a @ cov @ a.T + physics.sigma_obs**2 * np.eye(2)


def test_mixture_sample_mean_matches_closed_form() -> None:
    teacher = MixtureTeacher(n_blocks=2, dim=2, n_prompts=2)
    rng = np.random.default_rng(2)
    blocks = np.stack([teacher.sample(1, rng).blocks for _ in range(10_000)])
    assert_allclose(blocks.mean(axis=0), teacher.mean(1), atol=0.05)


@pytest.mark.slow
def test_hidden_flow_reproduces_target_moments() -> None:
    target = PhysicsTeacher(n_blocks=2, n_prompts=1)
    teacher = train_hidden_flow(target, hidden=32, layers=2, steps=1500, batch=64, teacher_steps=16, seed=0)
    rng = np.random.default_rng(3)
    ours = np.stack([teacher.sample(0, rng).blocks.reshape(-1) for _ in range(1000)])
    ref = np.stack([target.sample(0, rng).blocks.reshape(-1) for _ in range(1000)])
    assert_allclose(ours.mean(axis=0), ref.mean(axis=0), atol=0.1)
    assert_allclose(np.cov(ours.T), np.cov(ref.T), atol=0.1)
