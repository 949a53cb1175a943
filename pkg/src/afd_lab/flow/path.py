"""前向加噪路径、流匹配损失与少步 Euler 采样器。

前向路径（学生侧）：
    x_t = α(t)·x̂0 + σ(t)·ε
    v   = α̇(t)·x̂0 + σ̇(t)·ε
目标 v 始终由存储的 (x̂0, ε, t) 重新计算，不从 x_t 反解。

批量状态 NoisedStates 的行顺序为 k-major：row = k·B + b，
其中 k 为块序号、b 为视频序号；历史上下文来自 contexts[b, :k]。
"""

from __future__ import annotations

from collections.abc import Iterator, Mapping, Sequence
from dataclasses import dataclass
from typing import TYPE_CHECKING, Protocol

import numpy as np

from ..autodiff.engine import Node, constant, mean, sq_norm
from ..errors import InputError, NumericalError
from .schedules import RECTIFIED_FLOW, Schedule

if TYPE_CHECKING:
    from ..autodiff.params import ParamStore

Params = Mapping[str, Node] | None


class VelocityFieldLike(Protocol):
    """学生 / 教师内部速度场需要满足的最小接口。"""

    dim: int

    @property
    def params(self) -> ParamStore: ...

    def history_summary(self, prior: Sequence[Node], batch: int, p: Params = None) -> Node: ...

    def velocity(
        self,
        x_t: Node,
        t: np.ndarray,
        h: Node,
        prompt_ids: np.ndarray,
        p: Params = None,
    ) -> Node: ...

    def velocity_on(self, states: NoisedStates, p: Params = None) -> Node: ...


@dataclass(frozen=True, slots=True)
class NoisySample:
    """一个（或一批）前向加噪状态及其流匹配目标。"""

    x0: np.ndarray
    t: np.ndarray
    eps: np.ndarray
    x_t: np.ndarray
    v: np.ndarray


def _check_t(t: np.ndarray) -> None:
    if np.any(~np.isfinite(t)) or np.any(t < 0.0) or np.any(t > 1.0):
        raise InputError(f"t 必须位于 [0, 1]，收到范围 [{np.min(t)}, {np.max(t)}]")


def forward_noise(
    x0: np.ndarray,
    t: float | np.ndarray,
    eps: np.ndarray,
    sched: Schedule = RECTIFIED_FLOW,
) -> NoisySample:
    """按日程对干净块加噪，返回 NoisySample。

    x0 / eps 形状 (..., d)；t 为标量或形状 x0.shape[:-1]。
    """

    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise InputError(f"x0 与 ε 维度不一致: {x0.shape} vs {eps.shape}")
    t_arr = np.asarray(t, dtype=np.float64)
    _check_t(t_arr)
    tc = t_arr[..., None] if t_arr.ndim > 0 else t_arr
    x_t = sched.alpha(tc) * x0 + sched.sigma(tc) * eps
    v = sched.alpha_dot(tc) * x0 + sched.sigma_dot(tc) * eps
    return NoisySample(x0=x0, t=t_arr, eps=eps, x_t=x_t, v=v)


@dataclass(frozen=True, slots=True)
class NoisedStates:
    """按块展开的一批加噪状态，附带历史上下文。

    Attributes:
        sample: 行级 NoisySample，x_t / v 形状 (N, d)，t 形状 (N,)
        prompt_ids: (N,) 每行的 prompt
        contexts: (B, K, d) 提供历史的干净视频
        block_index / video_index: (N,) 每行对应的 k 与 b
    """

    sample: NoisySample
    prompt_ids: np.ndarray
    contexts: np.ndarray
    block_index: np.ndarray
    video_index: np.ndarray

    @property
    def n_videos(self) -> int:
        return int(self.contexts.shape[0])

    @property
    def n_blocks(self) -> int:
        return int(self.contexts.shape[1])

    @property
    def x_t(self) -> np.ndarray:
        return self.sample.x_t

    @property
    def t(self) -> np.ndarray:
        return self.sample.t

    @property
    def v(self) -> np.ndarray:
        return self.sample.v

    def __len__(self) -> int:
        return int(self.sample.t.shape[0])

    def rows(self) -> Iterator[tuple[NoisySample, np.ndarray, int]]:
        """逐行给出 (NoisySample, 历史块 (k, d), prompt)。"""

        s = self.sample
        for r in range(len(self)):
            b, k = int(self.video_index[r]), int(self.block_index[r])
            row = NoisySample(x0=s.x0[r], t=s.t[r], eps=s.eps[r], x_t=s.x_t[r], v=s.v[r])
            yield row, self.contexts[b, :k], int(self.prompt_ids[r])

    def video_weights(self, w: np.ndarray) -> np.ndarray:
        """把每个视频的权重 w (B,) 展开到行 (N,)。"""

        w = np.asarray(w, dtype=np.float64)
        if w.shape != (self.n_videos,):
            raise InputError(f"权重形状应为 ({self.n_videos},)，收到 {w.shape}")
        return w[self.video_index]


def make_noised_states(
    videos: np.ndarray,
    prompt_ids: np.ndarray,
    sched: Schedule,
    rng: np.random.Generator,
) -> NoisedStates:
    """对每个视频的每个块独立抽取 (t, ε) 并加噪。"""

    videos = np.asarray(videos, dtype=np.float64)
    if videos.ndim != 3 or videos.shape[0] == 0:
        raise InputError(f"videos 形状应为 (B, K, d) 且 B >= 1，收到 {videos.shape}")
    B, K, d = videos.shape
    t = rng.uniform(0.0, 1.0, size=(K, B))
    eps = rng.standard_normal((K, B, d))
    x0 = videos.transpose(1, 0, 2)
    sample = forward_noise(x0.reshape(K * B, d), t.reshape(K * B), eps.reshape(K * B, d), sched)
    block_index = np.repeat(np.arange(K), B)
    video_index = np.tile(np.arange(B), K)
    return NoisedStates(
        sample=sample,
        prompt_ids=np.asarray(prompt_ids, dtype=np.int64)[video_index],
        contexts=videos,
        block_index=block_index,
        video_index=video_index,
    )


def fm_loss(field: VelocityFieldLike, states: NoisedStates, p: Params = None) -> Node:
    """流匹配回归：mean ‖v_θ(x_t, t, h, y) − v‖²。"""

    if len(states) == 0:
        raise InputError("fm_loss: 空 batch")
    v_theta = field.velocity_on(states, p)
    return mean(sq_norm(v_theta - states.v))


def sample_ode(
    field: VelocityFieldLike,
    prompt_ids: np.ndarray,
    h: Node,
    steps: int,
    rng: np.random.Generator,
    p: Params = None,
    noise: np.ndarray | None = None,
) -> Node:
    """从 t=1 的噪声出发，用 M_S 个等距 Euler 步积分到 t=0。

    dx/dt = v_θ(x, t)，向 t 减小方向积分：x ← x − Δt·v_θ(x, t)。
    p 为叶子时返回的节点保留整条采样链的计算图（GAN 基线需要）。
    """

    if steps < 1:
        raise InputError(f"M_S 必须 >= 1，收到 {steps}")
    prompt_ids = np.asarray(prompt_ids, dtype=np.int64)
    batch = prompt_ids.shape[0]
    if noise is None:
        noise = rng.standard_normal((batch, field.dim))
    x: Node = constant(noise)
    dt = 1.0 / steps
    for m in range(steps):
        t = np.full(batch, 1.0 - m * dt)
        try:
            x = x - dt * field.velocity(x, t, h, prompt_ids, p)
        except NumericalError as exc:
            raise NumericalError(f"Euler 积分出现非有限状态: {exc}", tag=f"euler_step={m}") from exc
    return x
