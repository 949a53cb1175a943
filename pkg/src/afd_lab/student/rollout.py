"""学生的自回归展开与在策略加噪状态。

第 k 块只消耗 (h_k, y, RNG)：先由已生成的块算摘要，再从纯噪声做 M_S 步 Euler。
rollout_graph 保留计算图（视频级对抗基线需要穿过采样链求导），
rollout 在常量参数上运行，返回普通数组。
"""

from __future__ import annotations

from collections.abc import Mapping

import numpy as np

from ..autodiff.engine import Node
from ..errors import InputError
from ..flow.path import NoisedStates, VelocityFieldLike, make_noised_states, sample_ode
from ..flow.schedules import Schedule
from .video import Source, VideoBatch


def rollout_graph(
    field: VelocityFieldLike,
    prompt_ids: np.ndarray,
    n_blocks: int,
    steps: int,
    rng: np.random.Generator,
    p: Mapping[str, Node] | None = None,
) -> list[Node]:
    """逐块生成，返回 K 个 (B, d) 节点。"""

    if n_blocks < 1:
        raise InputError(f"K 必须 >= 1，收到 {n_blocks}")
    prompt_ids = np.asarray(prompt_ids, dtype=np.int64)
    blocks: list[Node] = []
    for _ in range(n_blocks):
        h = field.history_summary(blocks, prompt_ids.shape[0], p)
        blocks.append(sample_ode(field, prompt_ids, h, steps, rng, p))
    return blocks


def rollout(
    field: VelocityFieldLike,
    prompt_ids: np.ndarray,
    n_blocks: int,
    steps: int,
    rng: np.random.Generator,
    p: Mapping[str, Node] | None = None,
) -> VideoBatch:
    blocks = rollout_graph(field, prompt_ids, n_blocks, steps, rng, p)
    return videos_from_graph(blocks, prompt_ids)


def videos_from_graph(blocks: list[Node], prompt_ids: np.ndarray) -> VideoBatch:
    return VideoBatch(
        blocks=np.stack([b.value for b in blocks], axis=1),
        prompt_ids=np.asarray(prompt_ids, dtype=np.int64),
        source=Source.STUDENT,
    )


def noised_rollout_states(
    videos: VideoBatch,
    sched: Schedule,
    rng: np.random.Generator,
) -> NoisedStates:
    """学生用自己的日程对自己的展开逐块加噪（每块独立抽 t 与 ε）。"""

    videos.require(Source.STUDENT, "noised_rollout_states")
    return make_noised_states(videos.blocks, videos.prompt_ids, sched, rng)
