"""高斯混合教师：每个 prompt 在展平的视频 (K·d) 上是两个各向同性高斯的混合。

密度有闭式，用于密度比与倾斜分布的解析校验。
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import logsumexp
from scipy.stats import multivariate_normal

from ..errors import ConfigurationError, InputError
from ..student.video import Source, Video
from .base import check_prompt


@dataclass(frozen=True)
class MixtureTeacher:
    n_blocks: int = 8
    dim: int = 2
    n_prompts: int = 8
    spread: float = 1.5
    std: float = 0.3
    weight: float = 0.5
    seed: int = 0
    name: str = "mixture"

    def __post_init__(self) -> None:
        if not 0.0 < self.weight < 1.0:
            raise ConfigurationError(f"mixture weight 必须位于 (0, 1): {self.weight}")
        if self.std <= 0:
            raise ConfigurationError(f"mixture std 必须 > 0: {self.std}")

    @property
    def flat_dim(self) -> int:
        return self.n_blocks * self.dim

    @cached_property
    def means(self) -> np.ndarray:
        """(n_prompts, 2, K·d)，由 seed 固定。"""

        rng = np.random.default_rng(np.random.SeedSequence([self.seed, 0x6D6978]))
        return rng.normal(0.0, self.spread, (self.n_prompts, 2, self.flat_dim))

    def mean(self, prompt: int) -> np.ndarray:
        """混合分布的总体均值，形状 (K, d)。"""

        check_prompt(self, prompt)
        mu = self.weight * self.means[prompt, 0] + (1.0 - self.weight) * self.means[prompt, 1]
        return mu.reshape(self.n_blocks, self.dim)

    def sample(self, prompt: int, rng: np.random.Generator) -> Video:
        check_prompt(self, prompt)
        comp = 0 if rng.uniform() < self.weight else 1
        x = self.means[prompt, comp] + self.std * rng.standard_normal(self.flat_dim)
        return Video(x.reshape(self.n_blocks, self.dim), prompt, Source.TEACHER)

    def log_density(self, video: Video) -> float:
        check_prompt(self, video.prompt)
        x = video.blocks.reshape(-1)
        if x.shape != (self.flat_dim,):
            raise InputError(f"视频形状应为 ({self.n_blocks}, {self.dim})，收到 {video.blocks.shape}")
        cov = self.std**2
        terms = [
            np.log(self.weight) + multivariate_normal.logpdf(x, self.means[video.prompt, 0], cov),
            np.log1p(-self.weight) + multivariate_normal.logpdf(x, self.means[video.prompt, 1], cov),
        ]
        return float(logsumexp(terms))
