"""桌面尺度指标：切片 Wasserstein 距离与物理残差。"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import wasserstein_distance

from ..errors import InputError, NumericalError
from ..student.video import VideoBatch
from ..teachers.physics import Dynamics


@dataclass(frozen=True, slots=True)
class Metric:
    name: str
    value: float
    step: int
    arm: str
    scope: str = "all"

    def __post_init__(self) -> None:
        if not np.isfinite(self.value):
            raise NumericalError(f"指标 {self.name} 非有限", tag="metric")


def random_directions(n: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    u = rng.standard_normal((n, dim))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


def sliced_wasserstein(
    samples_a: np.ndarray,
    samples_b: np.ndarray,
    n_projections: int,
    rng: np.random.Generator,
) -> float:
    """随机单位方向上一维 W1 的平均值。样本形状 (N, D)。"""

    a = np.asarray(samples_a, dtype=np.float64)
    b = np.asarray(samples_b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[0] == 0 or b.shape[0] == 0:
        raise InputError(f"样本应为非空 (N, D) 数组: {a.shape}, {b.shape}")
    if a.shape[1] != b.shape[1]:
        raise InputError(f"样本维度不一致: {a.shape[1]} vs {b.shape[1]}")
    if n_projections < 1:
        raise InputError(f"n_projections 必须 >= 1: {n_projections}")
    dirs = random_directions(n_projections, a.shape[1], rng)
    pa, pb = a @ dirs.T, b @ dirs.T
    return float(np.mean([wasserstein_distance(pa[:, i], pb[:, i]) for i in range(n_projections)]))


def residuals(videos: VideoBatch, dynamics: Dynamics) -> np.ndarray:
    """(B, K−1, d)：x^(k+1) − 预测(x^(k))。"""

    x = videos.blocks
    B, K, d = x.shape
    if K < 2:
        return np.zeros((B, 0, d))
    ids = np.repeat(videos.prompt_ids, K - 1)
    pred = dynamics.predict(ids, x[:, :-1].reshape(-1, d)).reshape(B, K - 1, d)
    return x[:, 1:] - pred


def physics_residual(videos: VideoBatch, dynamics: Dynamics) -> float:
    """离散递推的均方违背（按坐标平均）。"""

    r = residuals(videos, dynamics)
    if r.size == 0:
        return 0.0
    return float(np.mean(r * r))
