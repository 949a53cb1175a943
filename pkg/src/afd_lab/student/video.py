"""视频数据类型：Prompt / Video / VideoBatch。

教师与学生共用同一种样本类型，source 标记来源；
训练代码按来源做校验（例如 SFT 只接受教师视频）。
"""

from __future__ import annotations

from collections.abc import Iterator, Sequence
from dataclasses import dataclass
from enum import StrEnum

import numpy as np

from ..errors import InputError


class Source(StrEnum):
    TEACHER = "teacher"
    STUDENT = "student"


@dataclass(frozen=True, slots=True)
class Prompt:
    """prompt 只是有限集合中的一个下标；嵌入向量由持有它的模型学习。"""

    id: int
    n_prompts: int

    def __post_init__(self) -> None:
        if not 0 <= self.id < self.n_prompts:
            raise InputError(f"prompt {self.id} 不在已登记集合 [0, {self.n_prompts}) 中")


def check_prompts(prompt_ids: np.ndarray, n_prompts: int) -> np.ndarray:
    ids = np.asarray(prompt_ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= n_prompts):
        raise InputError(f"prompt 越界: 集合大小 {n_prompts}，收到 {ids.tolist()}")
    return ids


@dataclass(frozen=True, slots=True)
class Video:
    """K 个 d 维干净块组成的一条视频。"""

    blocks: np.ndarray
    prompt: int
    source: Source

    def __post_init__(self) -> None:
        if self.blocks.ndim != 2:
            raise InputError(f"视频块应为 (K, d)，收到 {self.blocks.shape}")
        if not np.all(np.isfinite(self.blocks)):
            raise InputError("视频含非有限值")

    @property
    def n_blocks(self) -> int:
        return int(self.blocks.shape[0])

    @property
    def dim(self) -> int:
        return int(self.blocks.shape[1])


@dataclass(frozen=True, slots=True)
class VideoBatch:
    """一批同来源视频，blocks 形状 (B, K, d)。"""

    blocks: np.ndarray
    prompt_ids: np.ndarray
    source: Source

    def __post_init__(self) -> None:
        if self.blocks.ndim != 3:
            raise InputError(f"视频批应为 (B, K, d)，收到 {self.blocks.shape}")
        if self.prompt_ids.shape != (self.blocks.shape[0],):
            raise InputError(f"prompt 数量 {self.prompt_ids.shape} 与视频数 {self.blocks.shape[0]} 不符")
        if not np.all(np.isfinite(self.blocks)):
            raise InputError("视频批含非有限值")

    @classmethod
    def stack(cls, videos: Sequence[Video]) -> VideoBatch:
        if not videos:
            raise InputError("空视频列表")
        sources = {v.source for v in videos}
        if len(sources) != 1:
            raise InputError(f"视频来源混杂: {sorted(sources)}")
        return cls(
            blocks=np.stack([v.blocks for v in videos]),
            prompt_ids=np.array([v.prompt for v in videos], dtype=np.int64),
            source=videos[0].source,
        )

    def __len__(self) -> int:
        return int(self.blocks.shape[0])

    def __getitem__(self, i: int) -> Video:
        return Video(self.blocks[i], int(self.prompt_ids[i]), self.source)

    def __iter__(self) -> Iterator[Video]:
        return (self[i] for i in range(len(self)))

    @property
    def n_blocks(self) -> int:
        return int(self.blocks.shape[1])

    @property
    def dim(self) -> int:
        return int(self.blocks.shape[2])

    def flat(self) -> np.ndarray:
        """(B, K·d)，评估指标在展平后的视频上计算。"""

        return self.blocks.reshape(len(self), -1)

    def require(self, source: Source, who: str) -> None:
        if self.source is not source:
            raise InputError(f"{who} 需要 {source} 视频，收到 {self.source}")
