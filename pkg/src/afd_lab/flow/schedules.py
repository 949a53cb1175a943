"""噪声日程 (α_t, σ_t) 及其导数。

约定 t=0 为干净端 (α=1, σ=0)，t=1 为噪声端 (α=0, σ=1)。
新日程通过 register_schedule 登记，运行配置按名字选择。
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError

ScalarFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, slots=True)
class Schedule:
    name: str
    alpha: ScalarFn
    sigma: ScalarFn
    alpha_dot: ScalarFn
    sigma_dot: ScalarFn


def _rectified_flow() -> Schedule:
    return Schedule(
        name="rectified_flow",
        alpha=lambda t: 1.0 - t,
        sigma=lambda t: np.asarray(t, dtype=np.float64),
        alpha_dot=lambda t: -np.ones_like(t, dtype=np.float64),
        sigma_dot=lambda t: np.ones_like(t, dtype=np.float64),
    )


def _cosine() -> Schedule:
    half_pi = 0.5 * np.pi
    return Schedule(
        name="cosine",
        alpha=lambda t: np.cos(half_pi * t),
        sigma=lambda t: np.sin(half_pi * t),
        alpha_dot=lambda t: -half_pi * np.sin(half_pi * t),
        sigma_dot=lambda t: half_pi * np.cos(half_pi * t),
    )


_REGISTRY: dict[str, Schedule] = {}


def register_schedule(schedule: Schedule) -> None:
    if schedule.name in _REGISTRY:
        raise ConfigurationError(f"日程名重复: {schedule.name}")
    _REGISTRY[schedule.name] = schedule


def get_schedule(name: str) -> Schedule:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise ConfigurationError(f"未知日程: {name}（可选: {sorted(_REGISTRY)}）") from None


def schedule_names() -> list[str]:
    return sorted(_REGISTRY)


register_schedule(_rectified_flow())
register_schedule(_cosine())

RECTIFIED_FLOW = get_schedule("rectified_flow")
