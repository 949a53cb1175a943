"""物理教师：阻尼振子轨迹（以及带风格变换的偏移域版本）。

每个块是二维状态 (位置, 速度)。prompt y 决定角频率 ω_y 与初始状态均值 μ_y：
    x^(1) ~ N(μ_y, s0²·I)
    x^(k+1) = A_y x^(k) + σ_obs·ξ,   A_y = expm([[0, 1], [-ω_y², -2ζω_y]]·Δt)
离散化用矩阵指数，因此无噪声轨迹精确满足递推，残差的期望恰为 σ_obs²（每个坐标）。

偏移域教师在同一动力学上套一个固定仿射变换 x ↦ W x + c，并改变噪声强度；
变换可逆，密度按雅可比精确变换。
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property
from typing import Protocol

import numpy as np
from scipy.linalg import expm
from scipy.stats import norm

from ..errors import ConfigurationError, InputError
from ..student.video import Source, Video
from .base import check_prompt

STATE_DIM = 2


class Dynamics(Protocol):
    """已知的逐块递推：给定上一块预测下一块的均值。"""

    def predict(self, prompt_ids: np.ndarray, prev: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class OscillatorDynamics:
    omegas: tuple[float, ...]
    zeta: float
    dt: float

    @cached_property
    def transitions(self) -> np.ndarray:
        """(n_prompts, 2, 2)"""

        mats = []
        for w in self.omegas:
            generator = np.array([[0.0, 1.0], [-(w**2), -2.0 * self.zeta * w]])
            mats.append(expm(generator * self.dt))
        return np.stack(mats)

    def predict(self, prompt_ids: np.ndarray, prev: np.ndarray) -> np.ndarray:
        a = self.transitions[np.asarray(prompt_ids, dtype=np.int64)]
        return np.einsum("bij,bj->bi", a, prev)


@dataclass(frozen=True)
class WarpedDynamics:
    base: Dynamics
    warp: np.ndarray
    offset: np.ndarray

    def predict(self, prompt_ids: np.ndarray, prev: np.ndarray) -> np.ndarray:
        z = np.linalg.solve(self.warp, (prev - self.offset).T).T
        return self.base.predict(prompt_ids, z) @ self.warp.T + self.offset


@dataclass(frozen=True)
class PhysicsTeacher:
    n_blocks: int = 8
    n_prompts: int = 8
    omega_range: tuple[float, float] = (1.0, 3.0)
    zeta: float = 0.1
    dt: float = 0.25
    sigma_obs: float = 0.05
    init_radius: float = 1.0
    init_std: float = 0.1
    name: str = "physics"
    dim: int = STATE_DIM

    def __post_init__(self) -> None:
        if self.dim != STATE_DIM:
            raise ConfigurationError(f"物理教师的块维度固定为 {STATE_DIM}，收到 {self.dim}")
        if self.sigma_obs <= 0 or self.init_std <= 0:
            raise ConfigurationError("sigma_obs 与 init_std 必须 > 0")
        if self.n_blocks < 1 or self.n_prompts < 1:
            raise ConfigurationError("n_blocks / n_prompts 必须 >= 1")

    @cached_property
    def omegas(self) -> np.ndarray:
        lo, hi = self.omega_range
        if self.n_prompts == 1:
            return np.array([lo])
        return np.linspace(lo, hi, self.n_prompts)

    @cached_property
    def dynamics(self) -> OscillatorDynamics:
        return OscillatorDynamics(tuple(float(w) for w in self.omegas), self.zeta, self.dt)

    def init_mean(self, prompt: int) -> np.ndarray:
        angle = 2.0 * np.pi * prompt / self.n_prompts
        return self.init_radius * np.array([np.cos(angle), np.sin(angle)])

    def scaled(self, frequency_scale: float) -> PhysicsTeacher:
        """频率整体缩放后的同族教师（用于在错配动力学上预训练基座学生）。"""

        lo, hi = self.omega_range
        return replace(
            self,
            omega_range=(lo * frequency_scale, hi * frequency_scale),
            name=f"{self.name}@x{frequency_scale:g}",
        )

    def trajectory(self, prompt: int, rng: np.random.Generator, sigma: float) -> np.ndarray:
        check_prompt(self, prompt)
        a = self.dynamics.transitions[prompt]
        x = np.empty((self.n_blocks, STATE_DIM))
        x[0] = self.init_mean(prompt) + self.init_std * rng.standard_normal(STATE_DIM)
        for k in range(1, self.n_blocks):
            x[k] = a @ x[k - 1] + sigma * rng.standard_normal(STATE_DIM)
        return x

    def sample(self, prompt: int, rng: np.random.Generator) -> Video:
        return Video(self.trajectory(prompt, rng, self.sigma_obs), prompt, Source.TEACHER)

    def log_density(self, video: Video) -> float:
        return self._log_density(video.blocks, video.prompt, self.sigma_obs)

    def _log_density(self, x: np.ndarray, prompt: int, sigma: float) -> float:
        check_prompt(self, prompt)
        if x.shape != (self.n_blocks, STATE_DIM):
            raise InputError(f"视频形状应为 ({self.n_blocks}, {STATE_DIM})，收到 {x.shape}")
        logp = norm.logpdf(x[0], loc=self.init_mean(prompt), scale=self.init_std).sum()
        if self.n_blocks > 1:
            pred = self.dynamics.predict(np.full(self.n_blocks - 1, prompt), x[:-1])
            logp += norm.logpdf(x[1:], loc=pred, scale=sigma).sum()
        return float(logp)


@dataclass(frozen=True)
class ShiftedPhysicsTeacher:
    """同一振子动力学 + 固定仿射风格变换 + 改变的过程噪声。"""

    base: PhysicsTeacher
    warp: tuple[tuple[float, float], tuple[float, float]] = ((1.0, 0.3), (0.0, 1.2))
    offset: tuple[float, float] = (0.5, -0.25)
    noise_scale: float = 2.0
    name: str = "shifted_physics"

    def __post_init__(self) -> None:
        if abs(np.linalg.det(self.warp_matrix)) < 1e-9:
            raise ConfigurationError("风格变换矩阵必须可逆")
        if self.noise_scale <= 0:
            raise ConfigurationError("noise_scale 必须 > 0")

    @property
    def n_blocks(self) -> int:
        return self.base.n_blocks

    @property
    def n_prompts(self) -> int:
        return self.base.n_prompts

    @property
    def dim(self) -> int:
        return STATE_DIM

    @cached_property
    def warp_matrix(self) -> np.ndarray:
        return np.array(self.warp, dtype=np.float64)

    @cached_property
    def dynamics(self) -> WarpedDynamics:
        return WarpedDynamics(self.base.dynamics, self.warp_matrix, np.array(self.offset))

    @property
    def sigma_obs(self) -> float:
        return self.base.sigma_obs * self.noise_scale

    def sample(self, prompt: int, rng: np.random.Generator) -> Video:
        z = self.base.trajectory(prompt, rng, self.sigma_obs)
        return Video(z @ self.warp_matrix.T + np.array(self.offset), prompt, Source.TEACHER)

    def log_density(self, video: Video) -> float:
        z = np.linalg.solve(self.warp_matrix, (video.blocks - np.array(self.offset)).T).T
        _, logdet = np.linalg.slogdet(self.warp_matrix)
        return self.base._log_density(z, video.prompt, self.sigma_obs) - self.n_blocks * logdet
