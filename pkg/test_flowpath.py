#!/usr/bin/env python3
"""测试前向加噪、流匹配目标与少步 Euler 采样"""

from __future__ import annotations

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from afd_lab.autodiff.engine import constant
from afd_lab.errors import ConfigurationError, InputError, NumericalError
from afd_lab.flow.path import fm_loss, forward_noise, make_noised_states, sample_ode
from afd_lab.flow.schedules import RECTIFIED_FLOW, get_schedule, schedule_names
from afd_lab.student.field import FieldGeometry, VelocityField


@pytest.mark.parametrize("name", ["rectified_flow", "cosine"])
def test_schedule_endpoints(name: str) -> None:
    s = get_schedule(name)
    assert s.alpha(np.float64(0.0)) == pytest.approx(1.0)
    assert s.sigma(np.float64(0.0)) == pytest.approx(0.0)
    assert s.alpha(np.float64(1.0)) == pytest.approx(0.0, abs=1e-15)
    assert s.sigma(np.float64(1.0)) == pytest.approx(1.0)


@pytest.mark.parametrize("name", ["rectified_flow", "cosine"])
def test_schedule_derivatives_match_finite_differences(name: str) -> None:
    s = get_schedule(name)
    t = np.linspace(0.1, 0.9, 9)
    h = 1e-6
    assert_allclose(s.alpha_dot(t), (s.alpha(t + h) - s.alpha(t - h)) / (2 * h), atol=1e-6)
    assert_allclose(s.sigma_dot(t), (s.sigma(t + h) - s.sigma(t - h)) / (2 * h), atol=1e-6)


def test_unknown_schedule() -> None:
    assert "rectified_flow" in schedule_names()
    with pytest.raises(ConfigurationError):
        get_schedule("edm")


def test_forward_noise_worked_example() -> None:
    """x0=[1,0], t=0.5, ε=[0,2] → x_t=[0.5,1], v=[-1,2]"""

    s = forward_noise(np.array([1.0, 0.0]), 0.5, np.array([0.0, 2.0]))
    assert_array_equal(s.x_t, [0.5, 1.0])
    assert_array_equal(s.v, [-1.0, 2.0])


def test_forward_noise_endpoints() -> None:
    x0, eps = np.array([0.3, -1.2]), np.array([1.0, 0.5])
    assert_array_equal(forward_noise(x0, 0.0, eps).x_t, x0)
    assert_array_equal(forward_noise(x0, 1.0, eps).x_t, eps)


@pytest.mark.parametrize("t", [-0.1, 1.5, float("nan")])
def test_forward_noise_rejects_bad_t(t: float) -> None:
    with pytest.raises(InputError):
        forward_noise(np.zeros(2), t, np.zeros(2))


def test_forward_noise_rejects_dimension_mismatch() -> None:
    with pytest.raises(InputError):
        forward_noise(np.zeros(2), 0.5, np.zeros(3))


def test_noised_states_layout_is_block_major() -> None:
    rng = np.random.default_rng(0)
    videos = rng.normal(size=(3, 4, 2))
    states = make_noised_states(videos, np.array([0, 1, 0]), RECTIFIED_FLOW, rng)
    assert len(states) == 12
    assert_array_equal(states.block_index, np.repeat(np.arange(4), 3))
    assert_array_equal(states.video_index, np.tile(np.arange(3), 4))
    assert_array_equal(states.prompt_ids, [0, 1, 0] * 4)
    assert_array_equal(states.sample.x0, videos.transpose(1, 0, 2).reshape(12, 2))
    assert_array_equal(states.video_weights(np.array([0.1, 0.2, 0.3])), [0.1, 0.2, 0.3] * 4)
    with pytest.raises(InputError):
        states.video_weights(np.ones(2))


def test_noised_states_rows_carry_prefix_history() -> None:
    rng = np.random.default_rng(0)
    videos = rng.normal(size=(2, 3, 2))
    states = make_noised_states(videos, np.array([1, 0]), RECTIFIED_FLOW, rng)
    for row, history, prompt in states.rows():
        b, k = [1, 0].index(prompt), history.shape[0]
        assert_array_equal(row.x0, videos[b, k])
        assert_array_equal(history, videos[b, :k])


def test_fm_loss_is_zero_when_field_is_exact() -> None:
    class Oracle:
        dim = 2

        def velocity_on(self, states, p=None):
            return constant(states.v)

    rng = np.random.default_rng(0)
    states = make_noised_states(rng.normal(size=(2, 3, 2)), np.array([0, 1]), RECTIFIED_FLOW, rng)
    assert fm_loss(Oracle(), states).item() == 0.0  # type: ignore[arg-type]


def test_sample_ode_with_constant_field_moves_linearly() -> None:
    """v ≡ c 时一步与多步 Euler 都给出 x0 = ε − c"""

    class Constant:
        dim = 2

        def velocity(self, x, t, h, prompt_ids, p=None):
            return constant(np.tile([1.0, -2.0], (x.shape[0], 1)))

    noise = np.array([[0.5, 0.5], [1.0, 0.0]])
    for steps in (1, 4):
        x = sample_ode(Constant(), np.array([0, 1]), constant(np.zeros((2, 1))), steps, np.random.default_rng(0), noise=noise)  # type: ignore[arg-type]
        assert_allclose(x.value, noise - np.array([1.0, -2.0]), atol=1e-15)


def test_sample_ode_rejects_zero_steps() -> None:
    field = VelocityField(FieldGeometry(n_blocks=1, hidden=4, layers=1, t_embed=4, enc_width=2, prompt_width=2))
    with pytest.raises(InputError):
        sample_ode(field, np.array([0]), field.history_summary([], 1), 0, np.random.default_rng(0))


def test_sample_ode_reports_euler_step_on_overflow() -> None:
    class Exploding:
        dim = 1

        def velocity(self, x, t, h, prompt_ids, p=None):
            return constant(np.full((1, 1), np.inf) if t[0] < 1.0 else np.ones((1, 1)))

    with pytest.raises(NumericalError) as info:
        sample_ode(Exploding(), np.array([0]), constant(np.zeros((1, 1))), 3, np.random.default_rng(0))  # type: ignore[arg-type]
    assert "euler_step" in info.value.tag


# ==================== 统计性质 ====================


def test_block_times_are_drawn_independently() -> None:
    videos = np.zeros((10_000, 2, 1))
    states = make_noised_states(videos, np.zeros(10_000, dtype=np.int64), RECTIFIED_FLOW, np.random.default_rng(0))
    t0 = states.sample.t[states.block_index == 0]
    t1 = states.sample.t[states.block_index == 1]
    assert abs(np.corrcoef(t0, t1)[0, 1]) < 0.05


def test_fm_loss_of_zero_field_is_expected_target_energy() -> None:
    """直线日程下 v = ε − x0，x0 ≡ 1 (d=2) 时 E‖v‖² = d + ‖x0‖² = 4"""

    class Zero:
        dim = 2

        def velocity_on(self, states, p=None):
            return constant(np.zeros_like(states.v))

    states = make_noised_states(np.ones((10_000, 2, 2)), np.zeros(10_000, dtype=np.int64), RECTIFIED_FLOW, np.random.default_rng(1))
    per_row = np.sum(states.v**2, axis=-1)
    loss = fm_loss(Zero(), states).item()  # type: ignore[arg-type]
    assert loss == pytest.approx(per_row.mean())
    assert abs(loss - 4.0) < 4.0 * per_row.std() / np.sqrt(per_row.size)


def test_four_euler_steps_on_the_exact_gaussian_field() -> None:
    """x0 ~ N(μ, I) 的精确速度 v = −μ + (2t−1)(x − (1−t)μ) / ((1−t)² + t²)。

    4 步 Euler 在均值方向精确；偏差方向逐步乘 0.75·0.8·1·1.2 = 0.72。
    """

    mu = np.array([0.7, -0.3])

    class Gaussian:
        dim = 2

        def velocity(self, x, t, h, prompt_ids, p=None):
            tc = t[:, None]
            return constant(-mu + (2 * tc - 1) * (x.value - (1 - tc) * mu) / ((1 - tc) ** 2 + tc**2))

    n = 20_000
    x = sample_ode(Gaussian(), np.zeros(n, dtype=np.int64), constant(np.zeros((n, 1))), 4, np.random.default_rng(2)).value  # type: ignore[arg-type]
    assert_allclose(x.mean(axis=0), mu, atol=0.05)
    assert_allclose(x.std(axis=0), 0.72, atol=0.02)
