"""AFD 学生目标：v± 算子、加权 NFT 损失、先验正则及其组合。

    v⁺ = (1−β)·sg(v_θ) + β·v_θ
    v⁻ = (1+β)·sg(v_θ) − β·v_θ
    L_NFT   = mean_i [ w_i‖v⁺ − v‖² + (1−w_i)‖v⁻ − v‖² ]
    L_prior = mean_i [ w_i‖v_θ − v_ref‖² ]
    L_AFD   = L_NFT + λ_prior·L_prior

实现写成 sg(v_θ) ± β·(v_θ − sg(v_θ))，括号内前向值恰为 0，
所以 v± 的前向值逐位等于 v_θ，只改变梯度：∇L_NFT = β·mean_i 2(2w_i−1)(v_θ−v)·∇v_θ。
w_i = 0.5 时正负两项的梯度精确抵消。
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np

from ..autodiff.engine import Node, constant, mean, sq_norm, stop_gradient, sum_
from ..errors import ConfigurationError, InputError
from ..flow.path import NoisedStates, VelocityFieldLike


@dataclass(frozen=True, slots=True)
class AFDConfig:
    beta: float = 0.1
    lambda_prior: float = 1e-4
    clip_max: float = 5.0
    ema_decay: float = 0.99

    def __post_init__(self) -> None:
        if not 0.0 < self.beta <= 1.0:
            raise ConfigurationError(f"afd.beta 必须位于 (0, 1]: {self.beta}")
        if self.lambda_prior < 0:
            raise ConfigurationError(f"afd.lambda_prior 必须 >= 0: {self.lambda_prior}")
        if self.clip_max <= 0:
            raise ConfigurationError(f"afd.clip_max 必须 > 0: {self.clip_max}")
        if not 0.0 <= self.ema_decay < 1.0:
            raise ConfigurationError(f"afd.ema_decay 必须位于 [0, 1): {self.ema_decay}")


@dataclass(frozen=True, slots=True)
class AFDLoss:
    total: Node
    nft: Node
    prior: Node


def _check_beta(beta: float) -> None:
    if not 0.0 < beta <= 1.0:
        raise InputError(f"β 必须位于 (0, 1]: {beta}")


def v_plus(v_theta: Node, beta: float) -> Node:
    _check_beta(beta)
    sg = stop_gradient(v_theta)
    return sg + beta * (v_theta - sg)


def v_minus(v_theta: Node, beta: float) -> Node:
    _check_beta(beta)
    sg = stop_gradient(v_theta)
    return sg - beta * (v_theta - sg)


def _check_weights(w: np.ndarray, n: int) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (n,):
        raise InputError(f"权重应为每个状态一个，形状 ({n},)，收到 {w.shape}")
    if np.any(~np.isfinite(w)) or np.any(w < 0.0) or np.any(w > 1.0):
        raise InputError("权重必须位于 [0, 1]")
    return w


def nft_from_velocity(
    v_theta: Node,
    target: np.ndarray,
    weights: np.ndarray,
    beta: float,
    mass: np.ndarray | None = None,
) -> Node:
    """在已算好的 v_θ 上组装 NFT 损失。

    mass 给定时按行加权求和（行质量之和应为 1），否则取行均值。
    """

    w = _check_weights(weights, v_theta.shape[0])
    pos = sq_norm(v_plus(v_theta, beta) - target)
    neg = sq_norm(v_minus(v_theta, beta) - target)
    per_row = constant(w) * pos + constant(1.0 - w) * neg
    if mass is None:
        return mean(per_row)
    return sum_(per_row * constant(np.asarray(mass, dtype=np.float64)))


def nft_loss(
    field: VelocityFieldLike,
    states: NoisedStates,
    weights: np.ndarray,
    beta: float,
    p: Mapping[str, Node] | None = None,
) -> Node:
    v_theta = field.velocity_on(states, p)
    return nft_from_velocity(v_theta, states.v, weights, beta)


def prior_from_velocity(v_theta: Node, v_ref: np.ndarray, weights: np.ndarray) -> Node:
    w = _check_weights(weights, v_theta.shape[0])
    return mean(constant(w) * sq_norm(v_theta - v_ref))


def prior_loss(
    field: VelocityFieldLike,
    ref_field: VelocityFieldLike,
    states: NoisedStates,
    weights: np.ndarray,
    p: Mapping[str, Node] | None = None,
) -> Node:
    """在同一批加噪状态上，把 v_θ 拉向冻结参考场 v_ref（按 w_i 加权）。"""

    v_theta = field.velocity_on(states, p)
    v_ref = ref_field.velocity_on(states).value
    return prior_from_velocity(v_theta, v_ref, weights)


def afd_loss(
    field: VelocityFieldLike,
    ref_field: VelocityFieldLike,
    states: NoisedStates,
    weights: np.ndarray,
    cfg: AFDConfig,
    p: Mapping[str, Node] | None = None,
) -> AFDLoss:
    v_theta = field.velocity_on(states, p)
    v_ref = ref_field.velocity_on(states).value
    nft = nft_from_velocity(v_theta, states.v, weights, cfg.beta)
    prior = prior_from_velocity(v_theta, v_ref, weights)
    return AFDLoss(total=nft + cfg.lambda_prior * prior, nft=nft, prior=prior)
