"""中心差分梯度检查。

相对误差定义：|g_auto - g_fd| / max(|g_auto|, |g_fd|, floor)。

两侧梯度都小于 floor 的坐标实际比较的是绝对误差，阈值为 tol·floor
（默认 1e-4 · 1e-3 = 1e-7）。step = 1e-5 时中心差分在 O(1) 损失上的
截断与舍入误差约 1e-10，远低于这个阈值；把 floor 压到 1e-6 以下会让
舍入误差本身超过 tol。
"""

from __future__ import annotations

from collections.abc import Callable, Mapping
from dataclasses import dataclass

import numpy as np

from ..errors import NumericalError
from .engine import Node
from .params import ParamStore

LossFn = Callable[[Mapping[str, Node]], Node]


@dataclass(frozen=True, slots=True)
class GradCheckReport:
    max_rel_error: float
    worst_param: str
    n_checked: int
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol


def numeric_gradient(
    loss_fn: LossFn,
    store: ParamStore,
    name: str,
    flat_index: int,
    step: float,
) -> float:
    original = store.get(name).copy()
    try:
        plus = original.copy()
        plus.flat[flat_index] += step
        store.set(name, plus)
        f_plus = _scalar(loss_fn(store.constants()))
        minus = original.copy()
        minus.flat[flat_index] -= step
        store.set(name, minus)
        f_minus = _scalar(loss_fn(store.constants()))
    finally:
        store.set(name, original)
    return (f_plus - f_minus) / (2.0 * step)


def grad_check(
    loss_fn: LossFn,
    store: ParamStore,
    *,
    step: float = 1e-5,
    tol: float = 1e-4,
    floor: float = 1e-3,
    max_entries: int | None = None,
    rng: np.random.Generator | None = None,
) -> GradCheckReport:
    """比较反向梯度与中心差分。

    max_entries 给定时每个参数随机抽查至多 max_entries 个坐标。
    loss_fn 必须是参数的确定性标量函数（内部随机量需固定）。
    """

    leaves = store.leaves()
    loss = loss_fn(leaves)
    _scalar(loss)
    loss.backward()

    rng = rng or np.random.default_rng(0)
    worst, worst_name, n = 0.0, "", 0
    for name, node in leaves.items():
        size = node.value.size
        if max_entries is not None and size > max_entries:
            indices = rng.choice(size, size=max_entries, replace=False)
        else:
            indices = np.arange(size)
        for i in indices:
            auto = float(node.grad.flat[i])
            fd = numeric_gradient(loss_fn, store, name, int(i), step)
            err = abs(auto - fd) / max(abs(auto), abs(fd), floor)
            n += 1
            if err > worst:
                worst, worst_name = err, name
    return GradCheckReport(max_rel_error=worst, worst_param=worst_name, n_checked=n, tol=tol)


def _scalar(node: Node) -> float:
    value = float(np.asarray(node.value).reshape(()))
    if not np.isfinite(value):
        raise NumericalError("损失非有限", tag="grad_check")
    return value
