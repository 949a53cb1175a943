#!/usr/bin/env python3
"""测试 AFD 学生目标

测试目标:
1. v± 的前向值与 v_θ 逐位相同,梯度分别为 ±β 倍
2. 权重全为 0.5 时 NFT 梯度精确为 0;一般权重下梯度为 2β(2w−1)(v_θ−v)/N
3. 先验项、组合损失与参数校验
"""

from __future__ import annotations

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from afd_lab.afd.objective import (
    AFDConfig,
    afd_loss,
    nft_from_velocity,
    nft_loss,
    prior_from_velocity,
    prior_loss,
    v_minus,
    v_plus,
)
from afd_lab.autodiff.engine import leaf, mean, sq_norm
from afd_lab.autodiff.optim import AdamW
from afd_lab.errors import ConfigurationError, InputError
from afd_lab.flow.path import fm_loss, make_noised_states
from afd_lab.flow.schedules import RECTIFIED_FLOW
from afd_lab.student.field import FieldGeometry, VelocityField

BETA = 0.1
RNG = np.random.default_rng(7)
V = RNG.normal(size=(5, 3))
TARGET = RNG.normal(size=(5, 3))


def _grad(loss_of) -> np.ndarray:
    v = leaf(V)
    loss_of(v).backward()
    return v.grad


def test_v_pm_values_are_bit_identical() -> None:
    v = leaf(V)
    assert_array_equal(v_plus(v, BETA).value, V)
    assert_array_equal(v_minus(v, BETA).value, V)


def test_v_pm_gradients_are_beta_scaled() -> None:
    base = _grad(lambda v: mean(sq_norm(v - TARGET)))
    plus = _grad(lambda v: mean(sq_norm(v_plus(v, BETA) - TARGET)))
    minus = _grad(lambda v: mean(sq_norm(v_minus(v, BETA) - TARGET)))
    assert_allclose(plus, BETA * base, rtol=1e-13, atol=1e-16)
    assert_allclose(minus, -BETA * base, rtol=1e-13, atol=1e-16)


def test_half_weights_give_exactly_zero_gradient() -> None:
    g = _grad(lambda v: nft_from_velocity(v, TARGET, np.full(5, 0.5), BETA))
    assert np.linalg.norm(g) < 1e-12


def test_nft_gradient_is_signed_flow_matching() -> None:
    w = np.array([0.0, 0.2, 0.5, 0.9, 1.0])
    g = _grad(lambda v: nft_from_velocity(v, TARGET, w, BETA))
    expected = 2.0 * BETA * (2.0 * w - 1.0)[:, None] * (V - TARGET) / 5
    assert_allclose(g, expected, rtol=1e-12, atol=1e-16)


def test_nft_value_is_weight_independent() -> None:
    """前向值恒等于 mean‖v_θ − v‖²"""

    a = nft_from_velocity(leaf(V), TARGET, np.zeros(5), BETA).item()
    b = nft_from_velocity(leaf(V), TARGET, np.ones(5), BETA).item()
    assert a == b == pytest.approx(np.mean(np.sum((V - TARGET) ** 2, axis=1)))


def test_mass_weighted_nft_sums_rows() -> None:
    mass = np.array([0.5, 0.5, 0.0, 0.0, 0.0])
    value = nft_from_velocity(leaf(V), TARGET, np.full(5, 0.7), BETA, mass=mass).item()
    assert value == pytest.approx(0.5 * np.sum((V[:2] - TARGET[:2]) ** 2))


@pytest.mark.parametrize("w", [np.full(5, 1.5), np.full(5, -0.1), np.full(4, 0.5), np.array([0.5, 0.5, np.nan, 0.5, 0.5])])
def test_bad_weights_are_rejected(w: np.ndarray) -> None:
    with pytest.raises(InputError):
        nft_from_velocity(leaf(V), TARGET, w, BETA)


@pytest.mark.parametrize("beta", [0.0, -0.1, 1.5])
def test_bad_beta_is_rejected(beta: float) -> None:
    with pytest.raises(InputError):
        v_plus(leaf(V), beta)


@pytest.mark.parametrize(
    "kwargs",
    [{"beta": 0.0}, {"lambda_prior": -1.0}, {"clip_max": 0.0}, {"ema_decay": 1.0}],
)
def test_afd_config_validation(kwargs: dict) -> None:
    with pytest.raises(ConfigurationError):
        AFDConfig(**kwargs)


@pytest.fixture
def setup():
    geometry = FieldGeometry(n_blocks=2, dim=2, n_prompts=2, hidden=6, layers=1, t_embed=4, enc_width=3, prompt_width=2)
    field = VelocityField(geometry, rng=np.random.default_rng(0))
    ref = VelocityField(geometry, rng=np.random.default_rng(1))
    rng = np.random.default_rng(2)
    states = make_noised_states(rng.normal(size=(3, 2, 2)), np.array([0, 1, 0]), RECTIFIED_FLOW, rng)
    weights = rng.uniform(size=len(states))
    return field, ref, states, weights


def test_prior_loss_vanishes_against_itself(setup) -> None:
    field, _, states, weights = setup
    assert prior_loss(field, field.with_params(field.params.copy()), states, weights).item() == 0.0


def test_afd_loss_combines_terms(setup) -> None:
    field, ref, states, weights = setup
    cfg = AFDConfig(beta=BETA, lambda_prior=0.5)
    loss = afd_loss(field, ref, states, weights, cfg)
    assert loss.nft.item() == pytest.approx(nft_loss(field, states, weights, BETA).item())
    assert loss.prior.item() == pytest.approx(prior_loss(field, ref, states, weights).item())
    assert loss.total.item() == pytest.approx(loss.nft.item() + 0.5 * loss.prior.item())


def test_afd_loss_gradient_reaches_every_student_parameter(setup) -> None:
    field, ref, states, weights = setup
    leaves = field.params.leaves()
    afd_loss(field, ref, states, weights, AFDConfig(), leaves).total.backward()
    grads = field.params.grads_of(leaves)
    assert set(grads) == set(field.params.names())
    assert sum(float(np.abs(g).sum()) for g in grads.values()) > 0.0


def test_default_afd_loss_is_flow_matching_plus_scaled_prior(setup) -> None:
    """v± 不改变前向值，L_NFT 的数值等于流匹配损失"""

    field, ref, states, weights = setup
    loss = afd_loss(field, ref, states, weights, AFDConfig())
    expected = fm_loss(field, states).item() + 1e-4 * prior_loss(field, ref, states, weights).item()
    assert loss.total.item() == pytest.approx(expected, rel=1e-12)


def test_prior_on_unit_deviation() -> None:
    v = leaf(np.zeros((4, 2)))
    assert prior_from_velocity(v, np.ones((4, 2)), np.ones(4)).item() == 2.0
    assert prior_from_velocity(v, np.ones((4, 2)), np.array([1.0, 0.0, 1.0, 0.0])).item() == 1.0


def test_prior_step_pulls_the_field_toward_the_reference(setup) -> None:
    field, ref, states, weights = setup
    before = prior_loss(field, ref, states, weights).item()
    opt = AdamW(1e-3, weight_decay=0.0)
    for _ in range(5):
        leaves = field.params.leaves()
        prior_loss(field, ref, states, weights, leaves).backward()
        opt.step(field.params, field.params.grads_of(leaves))
    assert prior_loss(field, ref, states, weights).item() < before
