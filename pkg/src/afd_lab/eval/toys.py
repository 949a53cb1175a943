"""随仓库分发的离散校验实例（assets/oracles/*.toml）。"""

from __future__ import annotations

import tomllib
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from ..errors import ConfigurationError
from ..paths import oracle_dir

TOYS_FILE = "discrete_toys.toml"
SUPPORTS_FILE = "velocity_supports.toml"


def _probabilities(values: Any, where: str) -> np.ndarray:
    p = np.asarray(values, dtype=np.float64)
    if p.ndim != 1 or p.size == 0 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ConfigurationError(f"{where}: 需要非负且和为 1 的概率表")
    return p / p.sum()


@dataclass(frozen=True)
class DiscreteToy:
    name: str
    pi_theta: np.ndarray
    pi_teacher: np.ndarray

    def __post_init__(self) -> None:
        if self.pi_theta.shape != self.pi_teacher.shape:
            raise ConfigurationError(f"{self.name}: 两张概率表大小不同")
        if self.pi_theta.size > 32:
            raise ConfigurationError(f"{self.name}: 支撑不超过 32 个结果")
        if np.any((self.pi_theta == 0) & (self.pi_teacher > 0)):
            raise ConfigurationError(f"{self.name}: π_T 在 π_θ 为 0 处有质量，密度比无定义")

    @property
    def size(self) -> int:
        return int(self.pi_theta.size)

    @property
    def log_ratio(self) -> np.ndarray:
        return np.log(self.pi_teacher) - np.log(self.pi_theta)


@dataclass(frozen=True)
class VelocitySupport:
    name: str
    points: np.ndarray
    pi_theta: np.ndarray
    pi_plus: np.ndarray
    grid_x: np.ndarray
    grid_t: np.ndarray

    @property
    def ratio(self) -> np.ndarray:
        """r_j = π⁺_j / π_θ_j（相差常数无关紧要）。"""

        return self.pi_plus / self.pi_theta

    @property
    def dim(self) -> int:
        return int(self.points.shape[1])


def _read(path: Path) -> dict[str, Any]:
    if not path.exists():
        raise ConfigurationError(f"校验实例文件不存在: {path}")
    return tomllib.loads(path.read_text(encoding="utf-8"))


def load_discrete_toys(path: Path | None = None) -> dict[str, DiscreteToy]:
    data = _read(path or oracle_dir() / TOYS_FILE)
    out: dict[str, DiscreteToy] = {}
    for item in data.get("toy", []):
        name = item["name"]
        out[name] = DiscreteToy(
            name,
            _probabilities(item["pi_theta"], f"{name}.pi_theta"),
            _probabilities(item["pi_teacher"], f"{name}.pi_teacher"),
        )
    return out


def load_velocity_supports(path: Path | None = None) -> dict[str, VelocitySupport]:
    data = _read(path or oracle_dir() / SUPPORTS_FILE)
    out: dict[str, VelocitySupport] = {}
    for item in data.get("support", []):
        name = item["name"]
        points = np.asarray(item["points"], dtype=np.float64)
        pi_theta = _probabilities(item["pi_theta"], f"{name}.pi_theta")
        pi_plus = _probabilities(item["pi_plus"], f"{name}.pi_plus")
        if points.ndim != 2 or points.shape[0] != pi_theta.size or pi_plus.size != pi_theta.size:
            raise ConfigurationError(f"{name}: points 与概率表大小不一致")
        if np.any(pi_theta == 0):
            raise ConfigurationError(f"{name}: pi_theta 必须处处为正")
        out[name] = VelocitySupport(
            name,
            points,
            pi_theta,
            pi_plus,
            np.asarray(item["grid_x"], dtype=np.float64),
            np.asarray(item["grid_t"], dtype=np.float64),
        )
    return out
