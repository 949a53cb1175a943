"""黑盒教师接口与查询通道。

教师只暴露干净样本通道 O_T: y ↦ x_0^T。接口上不存在参数、score、潜变量或轨迹访问器。

分离原则(重要):
- TeacherHandle: 只有 name / 几何 / sample(prompt, rng)
- SupportsOracleDensity: 仅解析教师实现 log_density，只供 eval 中的解析校验使用
- TeacherChannel: 训练循环唯一能拿到的对象，只转发 sample，并负责缓存与查询计数

训练代码只持有 TeacherChannel，因此在类型层面就够不到 oracle 密度。

缓存约定:
- 每个 prompt 有一个大小为 pool_size 的抽样池，池中第 j 个样本由
  SeedSequence([seed, prompt, j]) 派生的随机流生成，首次用到时才真正采样
- 每次查询从池中均匀挑一个下标（用调用方的 rng），并计一次查询
- 池内容只取决于 (seed, prompt, j)，所以断点续训时不必保存缓存
"""

from __future__ import annotations

from typing import Protocol, runtime_checkable

import numpy as np
from loguru import logger

from ..errors import CapabilityError, InputError
from ..student.video import Prompt, Source, Video, VideoBatch, check_prompts


@runtime_checkable
class TeacherHandle(Protocol):
    name: str
    n_blocks: int
    dim: int
    n_prompts: int

    def sample(self, prompt: int, rng: np.random.Generator) -> Video: ...


@runtime_checkable
class SupportsOracleDensity(Protocol):
    """仅解析教师：精确的 log π_T(x_0 | y)。"""

    def log_density(self, video: Video) -> float: ...


def oracle_log_density(handle: TeacherHandle, video: Video) -> float:
    if not isinstance(handle, SupportsOracleDensity):
        raise CapabilityError(f"教师 {handle.name} 没有解析密度（只提供样本通道）")
    return handle.log_density(video)


def check_prompt(handle: TeacherHandle, prompt: int) -> Prompt:
    try:
        return Prompt(prompt, handle.n_prompts)
    except InputError as exc:
        raise InputError(f"教师 {handle.name}: {exc}") from exc


class TeacherChannel:
    """带缓存与计数的教师查询通道。"""

    def __init__(self, handle: TeacherHandle, *, pool_size: int, seed: int) -> None:
        if pool_size < 1:
            raise InputError(f"pool_size 必须 >= 1: {pool_size}")
        self._handle = handle
        self.pool_size = pool_size
        self.seed = seed
        self.queries = 0
        self._cache: dict[tuple[int, int], Video] = {}

    @property
    def name(self) -> str:
        return self._handle.name

    @property
    def n_prompts(self) -> int:
        return self._handle.n_prompts

    def draw(self, prompt: int, index: int) -> Video:
        key = (prompt, index)
        video = self._cache.get(key)
        if video is None:
            check_prompt(self._handle, prompt)
            rng = np.random.default_rng(np.random.SeedSequence([self.seed, prompt, index]))
            video = self._handle.sample(prompt, rng)
            if video.source is not Source.TEACHER:
                raise InputError(f"教师 {self.name} 返回了非教师视频")
            self._cache[key] = video
        return video

    def query(self, prompt_ids: np.ndarray, rng: np.random.Generator) -> VideoBatch:
        ids = check_prompts(prompt_ids, self.n_prompts)
        picks = rng.integers(0, self.pool_size, size=ids.shape[0])
        videos = [self.draw(int(y), int(j)) for y, j in zip(ids, picks, strict=True)]
        self.queries += len(videos)
        logger.trace("教师查询: n={} 累计={} 缓存={}", len(videos), self.queries, len(self._cache))
        return VideoBatch.stack(videos)

    @property
    def cached(self) -> int:
        return len(self._cache)


def sample_batch(handle: TeacherHandle, prompt_ids: np.ndarray, rng: np.random.Generator) -> VideoBatch:
    """绕过缓存直接从教师抽一批（评估与预训练使用）。"""

    ids = check_prompts(prompt_ids, handle.n_prompts)
    return VideoBatch.stack([handle.sample(int(y), rng) for y in ids])
