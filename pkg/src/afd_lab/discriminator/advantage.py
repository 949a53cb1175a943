"""优势与批内权重。

    b(y)  = 同 prompt 学生样本的 D_φ 均值（该 prompt 只出现一次时退回整批均值）
    A_i   = D_φ(x̂_0^i, y_i) − b(y_i)
    Â_i   = clip(A_i / s(y_i), ±clip_max)      s 来自 RewardNormalizer，缺省为 1
    w_i   = σ(Â_i) ∈ [0, 1]
    p_i   = σ(D_φ(x̂_0^i, y_i) − D_φ(x_T^i, y_i))   paired_weights，只用于监控

这里只处理数值数组（判别器打分已取出 value），因此对 θ 天然没有梯度。
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ..errors import InputError
from ..student.video import Source, VideoBatch
from .model import Discriminator
from .reward_stats import RewardNormalizer

DEFAULT_CLIP = 5.0


@dataclass(frozen=True, slots=True)
class Advantage:
    prompt: int
    score: float
    baseline: float
    raw: float
    normalized: float
    clipped: float
    weight: float


def baselines(scores: np.ndarray, prompt_ids: np.ndarray) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64)
    ids = np.asarray(prompt_ids, dtype=np.int64)
    out = np.full_like(scores, np.mean(scores))
    for y in np.unique(ids):
        mask = ids == y
        if mask.sum() >= 2:
            out[mask] = np.mean(scores[mask])
    return out


def compute_advantages(
    scores: np.ndarray,
    prompt_ids: np.ndarray,
    *,
    clip_max: float = DEFAULT_CLIP,
    normalizer: RewardNormalizer | None = None,
) -> list[Advantage]:
    scores = np.asarray(scores, dtype=np.float64)
    ids = np.asarray(prompt_ids, dtype=np.int64)
    if scores.size == 0:
        raise InputError("advantage: 空 batch")
    if scores.shape != ids.shape:
        raise InputError(f"打分 {scores.shape} 与 prompt {ids.shape} 数量不符")
    b = baselines(scores, ids)
    raw = scores - b
    if normalizer is not None:
        normalizer.observe(ids, raw)
        scale = normalizer.scales(ids)
    else:
        scale = np.ones_like(raw)
    normalized = raw / scale
    clipped = np.clip(normalized, -clip_max, clip_max)
    weight = expit(clipped)
    return [
        Advantage(int(y), float(s), float(bb), float(a), float(n), float(c), float(w))
        for y, s, bb, a, n, c, w in zip(ids, scores, b, raw, normalized, clipped, weight, strict=True)
    ]


def advantage(
    disc: Discriminator,
    videos: VideoBatch,
    *,
    clip_max: float = DEFAULT_CLIP,
    normalizer: RewardNormalizer | None = None,
) -> list[Advantage]:
    videos.require(Source.STUDENT, "advantage")
    if len(videos) == 0:
        raise InputError("advantage: 空 batch")
    scores = disc.score(videos).value
    return compute_advantages(scores, videos.prompt_ids, clip_max=clip_max, normalizer=normalizer)


def weights_of(advantages: list[Advantage]) -> np.ndarray:
    return np.array([a.weight for a in advantages], dtype=np.float64)


def paired_weights(disc: Discriminator, teacher: VideoBatch, student: VideoBatch) -> np.ndarray:
    """σ(D_φ(x_S) − D_φ(x_T))：以同 prompt 的教师样本为基线的权重。

    批内基线使 A 居中，σ(A) 的均值停在 0.5 附近；这里的基线是教师样本，
    学生骗过判别器时趋近 1，判别器压制学生时趋近 0。
    """

    teacher.require(Source.TEACHER, "paired_weights")
    student.require(Source.STUDENT, "paired_weights")
    if len(student) == 0:
        raise InputError("paired_weights: 空 batch")
    if teacher.prompt_ids.shape != student.prompt_ids.shape or np.any(teacher.prompt_ids != student.prompt_ids):
        raise InputError("paired_weights: 教师与学生样本的 prompt 不一致")
    return expit(disc.score(student).value - disc.score(teacher).value)
